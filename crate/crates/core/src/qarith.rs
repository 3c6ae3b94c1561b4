//! Fixed-point arithmetic standing in for the reversible arithmetic blocks
//! (multiply-adder, subtraction, division, sine evaluation, comparison).
//!
//! Every operation rounds once, to nearest with ties to even, and reports
//! overflow of the destination register instead of wrapping.

use std::f64::consts::PI;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct FixedPointFormat {
    pub total_bits: u32,
    pub frac_bits: u32,
    pub signed: bool,
}

impl Default for FixedPointFormat {
    fn default() -> Self {
        Self {
            total_bits: 32,
            frac_bits: 16,
            signed: true,
        }
    }
}

impl FixedPointFormat {
    pub fn new(total_bits: u32, frac_bits: u32, signed: bool) -> Result<Self> {
        if total_bits > 63 {
            return Err(Error::InvalidFormat(format!(
                "at most 63 total bits supported, got {total_bits}"
            )));
        }
        if total_bits < frac_bits + 1 {
            return Err(Error::InvalidFormat(format!(
                "total_bits={total_bits} must be at least frac_bits+1={}",
                frac_bits + 1
            )));
        }
        Ok(Self {
            total_bits,
            frac_bits,
            signed,
        })
    }

    /// Unsigned format holding an `m`-bit fraction in `[0, 1]`.
    pub fn phase(m: u32) -> Self {
        Self {
            total_bits: m + 1,
            frac_bits: m,
            signed: false,
        }
    }

    pub fn resolution(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    fn max_raw(&self) -> i128 {
        if self.signed {
            (1i128 << (self.total_bits - 1)) - 1
        } else {
            (1i128 << self.total_bits) - 1
        }
    }

    fn min_raw(&self) -> i128 {
        if self.signed {
            -(1i128 << (self.total_bits - 1))
        } else {
            0
        }
    }

    fn check(&self, raw: i128, op: &'static str) -> Result<Fixed> {
        if raw < self.min_raw() || raw > self.max_raw() {
            return Err(Error::FixedOverflow { op });
        }
        Ok(Fixed {
            raw: raw as i64,
            format: *self,
        })
    }

    pub fn from_f64(&self, v: f64) -> Result<Fixed> {
        if !v.is_finite() {
            return Err(Error::FixedOverflow { op: "encode" });
        }
        let scaled = (v * (self.frac_bits as f64).exp2()).round_ties_even();
        if scaled.abs() > 2f64.powi(62) {
            return Err(Error::FixedOverflow { op: "encode" });
        }
        self.check(scaled as i128, "encode")
    }

    pub fn from_raw(&self, raw: i64) -> Result<Fixed> {
        self.check(raw as i128, "encode")
    }

    pub fn zero(&self) -> Fixed {
        Fixed {
            raw: 0,
            format: *self,
        }
    }
}

/// A value held in a fixed-point register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Fixed {
    raw: i64,
    format: FixedPointFormat,
}

impl Fixed {
    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn format(&self) -> FixedPointFormat {
        self.format
    }

    pub fn to_f64(&self) -> f64 {
        self.raw as f64 * self.format.resolution()
    }

    pub fn is_zero(&self) -> bool {
        self.raw == 0
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

impl Serialize for Fixed {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.to_f64())
    }
}

/// `v / 2^shift` rounded to nearest, ties to even.
fn round_shift(v: i128, shift: u32) -> i128 {
    if shift == 0 {
        return v;
    }
    let floor = v >> shift;
    let rem = v - (floor << shift);
    let half = 1i128 << (shift - 1);
    match rem.cmp(&half) {
        std::cmp::Ordering::Less => floor,
        std::cmp::Ordering::Greater => floor + 1,
        std::cmp::Ordering::Equal => floor + (floor & 1),
    }
}

/// `num / den` rounded to nearest, ties to even.
fn round_div(num: i128, den: i128) -> i128 {
    let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
    }
}

fn same_format(a: &Fixed, b: &Fixed) -> Result<FixedPointFormat> {
    if a.format != b.format {
        return Err(Error::FormatMismatch);
    }
    Ok(a.format)
}

/// `(x - a_lo) * (x - a_hi)`, the multiply-adder product whose sign decides
/// subsection membership.
pub fn qma_rho(x: Fixed, a_lo: Fixed, a_hi: Fixed) -> Result<Fixed> {
    let fmt = same_format(&x, &a_lo)?;
    same_format(&x, &a_hi)?;
    let d1 = x.raw as i128 - a_lo.raw as i128;
    let d2 = x.raw as i128 - a_hi.raw as i128;
    fmt.check(round_shift(d1 * d2, fmt.frac_bits), "multiply-add")
}

pub fn add(u: Fixed, v: Fixed) -> Result<Fixed> {
    let fmt = same_format(&u, &v)?;
    fmt.check(u.raw as i128 + v.raw as i128, "add")
}

pub fn subtract(u: Fixed, v: Fixed) -> Result<Fixed> {
    let fmt = same_format(&u, &v)?;
    fmt.check(u.raw as i128 - v.raw as i128, "subtract")
}

pub fn multiply(u: Fixed, v: Fixed) -> Result<Fixed> {
    let fmt = same_format(&u, &v)?;
    fmt.check(
        round_shift(u.raw as i128 * v.raw as i128, fmt.frac_bits),
        "multiply",
    )
}

pub fn divide(num: Fixed, den: Fixed) -> Result<Fixed> {
    let fmt = same_format(&num, &den)?;
    if den.raw == 0 {
        return Err(Error::DivisionByZero);
    }
    let scaled = (num.raw as i128) << fmt.frac_bits;
    fmt.check(round_div(scaled, den.raw as i128), "divide")
}

/// `C * sin^2(pi * theta_frac)` in the destination format.
///
/// Symmetric under `theta_frac -> 1 - theta_frac`, so both phase-estimation
/// branches map to the same value.
pub fn sine_square_scale(theta_frac: Fixed, c: f64, out: FixedPointFormat) -> Result<Fixed> {
    let s = (PI * theta_frac.to_f64()).sin();
    out.from_f64(c * s * s)
}

/// `sin(pi * theta_frac)` in the destination format.
pub fn sine(theta_frac: Fixed, out: FixedPointFormat) -> Result<Fixed> {
    out.from_f64((PI * theta_frac.to_f64()).sin())
}

/// `2 sin^2(pi * theta_frac) - 1`: recovers an inner product from the
/// success amplitude of a Hadamard test.
pub fn hadamard_test_value(theta_frac: Fixed, out: FixedPointFormat) -> Result<Fixed> {
    let s = (PI * theta_frac.to_f64()).sin();
    out.from_f64(2.0 * s * s - 1.0)
}

pub fn compare_ge(h: Fixed, delta: Fixed) -> Result<bool> {
    same_format(&h, &delta)?;
    Ok(h.raw >= delta.raw)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MembershipMode {
    /// `a^{t-1} <= x < a^t`, last subsection closed.
    #[default]
    HalfOpen,
    /// `(x - a^{t-1})(x - a^t) <= 0`; shared bounds belong to both sides.
    PaperLiteral,
}

/// Membership of `x` in subsection `t` (1-based) of `q`.
pub fn membership(
    x: Fixed,
    a_lo: Fixed,
    a_hi: Fixed,
    t: usize,
    q: usize,
    mode: MembershipMode,
) -> Result<bool> {
    match mode {
        MembershipMode::PaperLiteral => Ok(qma_rho(x, a_lo, a_hi)?.raw <= 0),
        MembershipMode::HalfOpen => {
            same_format(&x, &a_lo)?;
            same_format(&x, &a_hi)?;
            Ok(if t == q {
                a_lo.raw <= x.raw && x.raw <= a_hi.raw
            } else {
                a_lo.raw <= x.raw && x.raw < a_hi.raw
            })
        }
    }
}
