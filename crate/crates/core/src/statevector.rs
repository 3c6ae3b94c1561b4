//! Hybrid state simulator.
//!
//! Index, flag and precision registers carry genuine complex amplitudes.
//! Data registers (sample values, bounds, means, similarities, scores) are
//! carried as classical fixed-point annotations keyed on a subset of the
//! index registers. Every data register in the pipeline stays a function of
//! the index path, so the annotation is exact.
//!
//! Register 0 occupies the lowest bits of the basis index.

use std::collections::BTreeMap;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::exec::{for_each_chunk_mut, map_range, sum_range, Parallelism};
use crate::qarith::{Fixed, FixedPointFormat};

pub const DEFAULT_QUBIT_CAP: u32 = 26;

const NORM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Register {
    pub name: String,
    /// Number of valid basis values.
    pub dim: usize,
    pub width: u32,
    offset: u32,
}

impl Register {
    pub fn offset(&self) -> u32 {
        self.offset
    }

    fn mask(&self) -> usize {
        (1usize << self.width) - 1
    }

    fn value(&self, basis: usize) -> usize {
        (basis >> self.offset) & self.mask()
    }
}

fn width_for(dim: usize) -> u32 {
    if dim <= 1 {
        0
    } else {
        usize::BITS - (dim - 1).leading_zeros()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterLayout {
    registers: Vec<Register>,
    cap: u32,
}

impl Default for RegisterLayout {
    fn default() -> Self {
        Self::new()
    }
}

impl RegisterLayout {
    pub fn new() -> Self {
        Self::with_cap(DEFAULT_QUBIT_CAP)
    }

    pub fn with_cap(cap: u32) -> Self {
        Self {
            registers: Vec::new(),
            cap,
        }
    }

    /// Adds a register holding values `0..dim`.
    pub fn add(mut self, name: &str, dim: usize) -> Result<Self> {
        if self.registers.iter().any(|r| r.name == name) {
            return Err(Error::DuplicateRegister(name.to_string()));
        }
        if dim == 0 {
            return Err(Error::Config(format!("register {name:?} has dimension 0")));
        }
        let offset = self.qubits();
        self.registers.push(Register {
            name: name.to_string(),
            dim,
            width: width_for(dim),
            offset,
        });
        Ok(self)
    }

    pub fn flag(self, name: &str) -> Result<Self> {
        self.add(name, 2)
    }

    pub fn qubits(&self) -> u32 {
        self.registers.iter().map(|r| r.width).sum()
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.registers
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| Error::UnknownRegister(name.to_string()))
    }

    pub fn register(&self, name: &str) -> Result<&Register> {
        Ok(&self.registers[self.index_of(name)?])
    }
}

/// Dense table of values keyed on the joint value of some registers.
#[derive(Clone, Debug)]
struct Annotation {
    keys: Vec<usize>,
    format: FixedPointFormat,
    values: Vec<Option<Fixed>>,
}

impl Annotation {
    fn key(&self, layout: &RegisterLayout, basis: usize) -> usize {
        let mut key = 0;
        for &r in self.keys.iter().rev() {
            let reg = &layout.registers[r];
            key = (key << reg.width) | reg.value(basis);
        }
        key
    }
}

/// Read-only view of one basis state.
pub struct BasisView<'a> {
    state: &'a HybridState,
    basis: usize,
}

impl BasisView<'_> {
    pub fn basis(&self) -> usize {
        self.basis
    }

    /// Value of register `name`; panics on an unknown register name, which
    /// is a programming error in the caller.
    pub fn value(&self, name: &str) -> usize {
        self.state
            .layout
            .register(name)
            .unwrap_or_else(|e| panic!("{e}"))
            .value(self.basis)
    }

    pub fn value_at(&self, reg: usize) -> usize {
        self.state.layout.registers[reg].value(self.basis)
    }

    pub fn annotation(&self, name: &str) -> Option<Fixed> {
        let ann = self.state.annotations.get(name)?;
        ann.values[ann.key(&self.state.layout, self.basis)]
    }

    pub fn require(&self, name: &str) -> Result<Fixed> {
        self.annotation(name)
            .ok_or_else(|| Error::AnnotationMissing(name.to_string()))
    }
}

/// How a controlled rotation turns an annotation value into an amplitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RotationKind {
    /// `|0> -> sqrt(v/scale)|0> + sqrt(1 - v/scale)|1>`, requires `0 <= v <= scale`.
    Sqrt,
    /// `|0> -> (v/scale)|0> + sqrt(1 - (v/scale)^2)|1>`, requires `|v| <= scale`.
    Linear,
}

impl RotationKind {
    fn cos(self, v: f64, scale: f64) -> Result<f64> {
        let r = v / scale;
        let c = match self {
            RotationKind::Sqrt => {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::RotationOutOfRange { value: v, scale });
                }
                r.sqrt()
            }
            RotationKind::Linear => {
                if !(-1.0..=1.0).contains(&r) {
                    return Err(Error::RotationOutOfRange { value: v, scale });
                }
                r
            }
        };
        Ok(c)
    }
}

pub type Matrix2 = [[Complex64; 2]; 2];

pub fn hadamard_matrix() -> Matrix2 {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

#[derive(Clone, Debug)]
pub struct HybridState {
    layout: RegisterLayout,
    amps: Vec<Complex64>,
    annotations: BTreeMap<String, Annotation>,
    par: Parallelism,
}

impl HybridState {
    pub fn init(layout: RegisterLayout) -> Result<Self> {
        Self::init_with(layout, Parallelism::default())
    }

    pub fn init_with(layout: RegisterLayout, par: Parallelism) -> Result<Self> {
        let required = layout.qubits();
        if required > layout.cap {
            return Err(Error::QubitCap {
                required,
                cap: layout.cap,
            });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1usize << required];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            layout,
            amps,
            annotations: BTreeMap::new(),
            par,
        })
    }

    /// Builds a state from explicit amplitudes; they must be normalized.
    pub fn from_amplitudes(layout: RegisterLayout, amps: Vec<Complex64>) -> Result<Self> {
        let mut s = Self::init(layout)?;
        if amps.len() != s.amps.len() {
            return Err(Error::LengthMismatch {
                left: amps.len(),
                right: s.amps.len(),
            });
        }
        s.amps = amps;
        let norm = s.norm_sqr();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("amplitudes have norm {norm}")));
        }
        Ok(s)
    }

    pub fn set_parallelism(&mut self, par: Parallelism) {
        self.par = par;
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, basis: usize) -> Complex64 {
        self.amps[basis]
    }

    pub fn view(&self, basis: usize) -> BasisView<'_> {
        BasisView { state: self, basis }
    }

    /// Basis index of an assignment given as `(register, value)` pairs;
    /// unnamed registers are 0.
    pub fn basis_of(&self, assignment: &[(&str, usize)]) -> Result<usize> {
        let mut b = 0;
        for &(name, v) in assignment {
            let reg = self.layout.register(name)?;
            if v > reg.mask() {
                return Err(Error::Config(format!("value {v} does not fit {name:?}")));
            }
            b |= v << reg.offset;
        }
        Ok(b)
    }

    pub fn norm_sqr(&self) -> f64 {
        let amps = &self.amps;
        sum_range(amps.len(), self.par, |b| amps[b].norm_sqr())
    }

    fn support(&self) -> Vec<usize> {
        (0..self.amps.len())
            .filter(|&b| self.amps[b] != Complex64::new(0.0, 0.0))
            .collect()
    }

    pub fn has_annotation(&self, name: &str) -> bool {
        self.annotations.contains_key(name)
    }

    pub fn annotation_names(&self) -> Vec<&str> {
        self.annotations.keys().map(String::as_str).collect()
    }

    /// Annotation value for a key assignment given in key-register order.
    pub fn annotation_at(&self, name: &str, key: &[usize]) -> Result<Option<Fixed>> {
        let ann = self
            .annotations
            .get(name)
            .ok_or_else(|| Error::AnnotationMissing(name.to_string()))?;
        let mut k = 0;
        for (&r, &v) in ann.keys.iter().zip(key).rev() {
            k = (k << self.layout.registers[r].width) | v;
        }
        Ok(ann.values[k])
    }

    fn register_is_clear(&self, reg: &Register) -> bool {
        let mask = reg.mask() << reg.offset;
        self.amps
            .iter()
            .enumerate()
            .all(|(b, a)| b & mask == 0 || *a == Complex64::new(0.0, 0.0))
    }

    /// Uniform superposition over the register's valid values.
    ///
    /// A clear register is mapped to `dim^{-1/2} sum_v |v>`. A register
    /// spanning all of its `2^w` values receives the full `H^{w}`.
    pub fn hadamard_uniform(&mut self, name: &str) -> Result<()> {
        let reg = self.layout.register(name)?.clone();
        if reg.width == 0 {
            return Ok(());
        }
        if self.register_is_clear(&reg) {
            let inv = 1.0 / (reg.dim as f64).sqrt();
            let low = 1usize << reg.offset;
            let block = 1usize << (reg.offset + reg.width);
            for_each_chunk_mut(&mut self.amps, block, self.par, |_, chunk| {
                for l in 0..low {
                    let a = chunk[l] * inv;
                    for v in 0..reg.dim {
                        chunk[(v << reg.offset) | l] = a;
                    }
                }
            });
            return Ok(());
        }
        if reg.dim == 1usize << reg.width {
            let h = hadamard_matrix();
            for bit in 0..reg.width {
                self.apply_qubit_matrix(reg.offset + bit, &h, &|_| true);
            }
            return Ok(());
        }
        Err(Error::RegisterNotClear { name: reg.name })
    }

    /// Applies `m` to qubit `q` on every pair whose `|0>` member satisfies
    /// `control`.
    fn apply_qubit_matrix(
        &mut self,
        q: u32,
        m: &Matrix2,
        control: &(dyn Fn(&BasisView) -> bool + Sync),
    ) {
        let bit = 1usize << q;
        let ctl: Vec<bool> = {
            let this = &*self;
            map_range(this.amps.len() >> 1, this.par, |p| {
                let b0 = ((p >> q) << (q + 1)) | (p & (bit - 1));
                control(&this.view(b0))
            })
        };
        let block = bit << 1;
        for_each_chunk_mut(&mut self.amps, block, self.par, |c, chunk| {
            for l in 0..bit {
                if !ctl[c * bit + l] {
                    continue;
                }
                let (a0, a1) = (chunk[l], chunk[l | bit]);
                chunk[l] = m[0][0] * a0 + m[0][1] * a1;
                chunk[l | bit] = m[1][0] * a0 + m[1][1] * a1;
            }
        });
    }

    /// Applies a 2x2 unitary to a flag register where `control` holds.
    pub fn apply_flag_unitary(
        &mut self,
        flag: &str,
        m: &Matrix2,
        control: &(dyn Fn(&BasisView) -> bool + Sync),
    ) -> Result<()> {
        let reg = self.layout.register(flag)?.clone();
        if reg.width != 1 {
            return Err(Error::Config(format!("{flag:?} is not a single qubit")));
        }
        self.apply_qubit_matrix(reg.offset, m, control);
        Ok(())
    }

    /// Rotates `target` by an angle read from annotation `source`, on every
    /// basis pair whose `|0>` member satisfies `control`.
    pub fn controlled_rotation(
        &mut self,
        source: &str,
        scale: f64,
        kind: RotationKind,
        target: &str,
        control: &(dyn Fn(&BasisView) -> bool + Sync),
    ) -> Result<()> {
        self.rotation(source, scale, kind, target, control, false)
    }

    /// Inverse of [`HybridState::controlled_rotation`].
    pub fn controlled_rotation_inverse(
        &mut self,
        source: &str,
        scale: f64,
        kind: RotationKind,
        target: &str,
        control: &(dyn Fn(&BasisView) -> bool + Sync),
    ) -> Result<()> {
        self.rotation(source, scale, kind, target, control, true)
    }

    fn rotation(
        &mut self,
        source: &str,
        scale: f64,
        kind: RotationKind,
        target: &str,
        control: &(dyn Fn(&BasisView) -> bool + Sync),
        inverse: bool,
    ) -> Result<()> {
        if scale <= 0.0 {
            return Err(Error::ZeroScale);
        }
        let reg = self.layout.register(target)?.clone();
        if reg.width != 1 {
            return Err(Error::Config(format!("{target:?} is not a single qubit")));
        }
        let bit = 1usize << reg.offset;
        let q = reg.offset;
        let coeffs: Vec<Result<Option<(f64, f64)>>> = {
            let this = &*self;
            map_range(this.amps.len() >> 1, this.par, |p| {
                let b0 = ((p >> q) << (q + 1)) | (p & (bit - 1));
                let view = this.view(b0);
                if !control(&view) {
                    return Ok(None);
                }
                let live = this.amps[b0] != Complex64::new(0.0, 0.0)
                    || this.amps[b0 | bit] != Complex64::new(0.0, 0.0);
                let v = match view.annotation(source) {
                    Some(v) => v.to_f64(),
                    None if live => return Err(Error::AnnotationMissing(source.to_string())),
                    None => return Ok(None),
                };
                let c = kind.cos(v, scale)?;
                Ok(Some((c, (1.0 - c * c).max(0.0).sqrt())))
            })
        };
        let coeffs = coeffs.into_iter().collect::<Result<Vec<_>>>()?;
        for_each_chunk_mut(&mut self.amps, bit << 1, self.par, |ch, chunk| {
            for l in 0..bit {
                let Some((c, s)) = coeffs[ch * bit + l] else {
                    continue;
                };
                let s = if inverse { -s } else { s };
                let (a0, a1) = (chunk[l], chunk[l | bit]);
                chunk[l] = a0 * c - a1 * s;
                chunk[l | bit] = a0 * s + a1 * c;
            }
        });
        Ok(())
    }

    /// Writes annotation `name`, keyed on `keys`, with value `f(view)` for
    /// every supported basis state.
    pub fn write_annotation(
        &mut self,
        name: &str,
        keys: &[&str],
        format: FixedPointFormat,
        f: &(dyn Fn(&BasisView) -> Result<Fixed> + Sync),
    ) -> Result<()> {
        if self.annotations.contains_key(name) {
            return Err(Error::AnnotationExists(name.to_string()));
        }
        let keys = keys
            .iter()
            .map(|k| self.layout.index_of(k))
            .collect::<Result<Vec<_>>>()?;
        let size = 1usize
            << keys
                .iter()
                .map(|&r| self.layout.registers[r].width)
                .sum::<u32>();
        let mut ann = Annotation {
            keys,
            format,
            values: vec![None; size],
        };
        let support = self.support();
        let computed = map_range(support.len(), self.par, |s| f(&self.view(support[s])));
        for (&b, v) in support.iter().zip(computed) {
            let v = v?;
            if v.format() != format {
                return Err(Error::FormatMismatch);
            }
            let k = ann.key(&self.layout, b);
            match ann.values[k] {
                None => ann.values[k] = Some(v),
                Some(old) if old == v => {}
                Some(_) => return Err(Error::NotBasisValued(name.to_string())),
            }
        }
        self.annotations.insert(name.to_string(), ann);
        Ok(())
    }

    /// Removes annotation `name` after checking that `f` recomputes exactly
    /// the stored value on every supported basis state.
    pub fn uncompute_annotation(
        &mut self,
        name: &str,
        f: &(dyn Fn(&BasisView) -> Result<Fixed> + Sync),
    ) -> Result<()> {
        let ann = self
            .annotations
            .get(name)
            .ok_or_else(|| Error::AnnotationMissing(name.to_string()))?;
        for b in self.support() {
            let stored = ann.values[ann.key(&self.layout, b)];
            if stored != Some(f(&self.view(b))?) {
                return Err(Error::UncomputeMismatch(name.to_string()));
            }
        }
        self.annotations.remove(name);
        Ok(())
    }

    /// Drops an annotation without verification. Used when the register is
    /// measured or discarded.
    pub fn discard_annotation(&mut self, name: &str) -> Result<()> {
        self.annotations
            .remove(name)
            .map(|_| ())
            .ok_or_else(|| Error::AnnotationMissing(name.to_string()))
    }

    pub fn annotation_format(&self, name: &str) -> Result<FixedPointFormat> {
        self.annotations
            .get(name)
            .map(|a| a.format)
            .ok_or_else(|| Error::AnnotationMissing(name.to_string()))
    }

    /// Permutes basis states: the amplitude on `b` moves to `f(b)`.
    /// `f` must be injective on the support.
    pub fn apply_basis_map(
        &mut self,
        f: &(dyn Fn(&BasisView) -> Result<usize> + Sync),
    ) -> Result<()> {
        let support = self.support();
        let targets = map_range(support.len(), self.par, |s| f(&self.view(support[s])))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut seen = vec![false; self.amps.len()];
        for &t in &targets {
            if t >= self.amps.len() || seen[t] {
                return Err(Error::NotReversible);
            }
            seen[t] = true;
        }
        let mut next = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (&b, &t) in support.iter().zip(&targets) {
            next[t] = self.amps[b];
        }
        self.amps = next;
        Ok(())
    }

    /// XORs `flag` with `pred` on every supported basis state.
    pub fn flip_flag_where(
        &mut self,
        flag: &str,
        pred: &(dyn Fn(&BasisView) -> Result<bool> + Sync),
    ) -> Result<()> {
        let reg = self.layout.register(flag)?.clone();
        let bit = 1usize << reg.offset;
        // Evaluated with the flag cleared, so both members of a pair agree and
        // the map is a permutation.
        let q = reg.offset;
        let swap = {
            let this = &*self;
            map_range(this.amps.len() >> 1, this.par, |p| {
                let b0 = ((p >> q) << (q + 1)) | (p & (bit - 1));
                let live = this.amps[b0] != Complex64::new(0.0, 0.0)
                    || this.amps[b0 | bit] != Complex64::new(0.0, 0.0);
                if live {
                    pred(&this.view(b0))
                } else {
                    Ok(false)
                }
            })
        }
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        for_each_chunk_mut(&mut self.amps, bit << 1, self.par, |c, chunk| {
            for l in 0..bit {
                if swap[c * bit + l] {
                    chunk.swap(l, l | bit);
                }
            }
        });
        Ok(())
    }

    pub fn phase_flip(&mut self, pred: &(dyn Fn(&BasisView) -> bool + Sync)) {
        let flips = {
            let this = &*self;
            map_range(this.amps.len(), this.par, |b| pred(&this.view(b)))
        };
        let chunk = crate::exec::REDUCE_BLOCK;
        for_each_chunk_mut(&mut self.amps, chunk, self.par, |c, s| {
            for (o, a) in s.iter_mut().enumerate() {
                if flips[c * chunk + o] {
                    *a = -*a;
                }
            }
        });
    }

    /// `2|s><s| - I` on register `name`, where `|s>` is the uniform state over
    /// its valid values, applied independently for each assignment of the
    /// other registers. Out-of-range values pick up a sign.
    pub fn reflect_about_uniform(&mut self, name: &str) -> Result<()> {
        let reg = self.layout.register(name)?.clone();
        let low = 1usize << reg.offset;
        let block = 1usize << (reg.offset + reg.width);
        let span = 1usize << reg.width;
        let dim = reg.dim;
        for_each_chunk_mut(&mut self.amps, block, self.par, |_, chunk| {
            for l in 0..low {
                let mut mean = Complex64::new(0.0, 0.0);
                for v in 0..dim {
                    mean += chunk[(v << reg.offset) | l];
                }
                mean /= dim as f64;
                for v in 0..span {
                    let a = &mut chunk[(v << reg.offset) | l];
                    *a = if v < dim { mean * 2.0 - *a } else { -*a };
                }
            }
        });
        Ok(())
    }

    /// Inverse quantum Fourier transform on a register of `2^w` values:
    /// `|y> -> 2^{-w/2} sum_z exp(-2 pi i y z / 2^w) |z>`.
    pub fn inverse_qft(&mut self, name: &str) -> Result<()> {
        let reg = self.layout.register(name)?.clone();
        let span = 1usize << reg.width;
        if reg.dim != span {
            return Err(Error::Config(format!(
                "{name:?} must span all 2^{} values",
                reg.width
            )));
        }
        let low = 1usize << reg.offset;
        let block = span << reg.offset;
        let twiddle: Vec<Complex64> = (0..span)
            .map(|k| {
                Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 / span as f64)
            })
            .collect();
        let norm = 1.0 / (span as f64).sqrt();
        for_each_chunk_mut(&mut self.amps, block, self.par, |_, chunk| {
            let mut fiber = vec![Complex64::new(0.0, 0.0); span];
            for l in 0..low {
                for (y, f) in fiber.iter_mut().enumerate() {
                    *f = chunk[(y << reg.offset) | l];
                }
                for z in 0..span {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (y, f) in fiber.iter().enumerate() {
                        acc += f * twiddle[(y * z) % span];
                    }
                    chunk[(z << reg.offset) | l] = acc * norm;
                }
            }
        });
        Ok(())
    }

    pub fn probability_of(&self, pred: &(dyn Fn(&BasisView) -> bool + Sync)) -> f64 {
        sum_range(self.amps.len(), self.par, |b| {
            let a = self.amps[b];
            if a != Complex64::new(0.0, 0.0) && pred(&self.view(b)) {
                a.norm_sqr()
            } else {
                0.0
            }
        })
    }

    /// For each joint value of `regs`, the total probability and the
    /// probability restricted to `pred`. Keys are in `regs` order.
    pub fn branch_weights(
        &self,
        regs: &[&str],
        pred: &(dyn Fn(&BasisView) -> bool + Sync),
    ) -> Result<BTreeMap<Vec<usize>, (f64, f64)>> {
        let idx = regs
            .iter()
            .map(|r| self.layout.index_of(r))
            .collect::<Result<Vec<_>>>()?;
        let mut out: BTreeMap<Vec<usize>, (f64, f64)> = BTreeMap::new();
        for b in self.support() {
            let view = self.view(b);
            let key: Vec<usize> = idx.iter().map(|&r| view.value_at(r)).collect();
            let p = self.amps[b].norm_sqr();
            let e = out.entry(key).or_insert((0.0, 0.0));
            e.0 += p;
            if pred(&view) {
                e.1 += p;
            }
        }
        Ok(out)
    }

    /// Zeroes amplitudes outside `pred` and renormalizes.
    pub fn postselect(&mut self, pred: &(dyn Fn(&BasisView) -> bool + Sync)) -> Result<f64> {
        let p = self.probability_of(pred);
        if p <= 0.0 {
            return Err(Error::ZeroProbability);
        }
        let keep = {
            let this = &*self;
            map_range(this.amps.len(), this.par, |b| pred(&this.view(b)))
        };
        let inv = 1.0 / p.sqrt();
        let chunk = crate::exec::REDUCE_BLOCK;
        for_each_chunk_mut(&mut self.amps, chunk, self.par, |c, s| {
            for (o, a) in s.iter_mut().enumerate() {
                *a = if keep[c * chunk + o] {
                    *a * inv
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
        });
        Ok(p)
    }

    /// Multiplies every amplitude by `f(view)`.
    pub fn scale_amplitudes(&mut self, f: &(dyn Fn(&BasisView) -> f64 + Sync)) {
        let factors = {
            let this = &*self;
            map_range(this.amps.len(), this.par, |b| f(&this.view(b)))
        };
        let chunk = crate::exec::REDUCE_BLOCK;
        for_each_chunk_mut(&mut self.amps, chunk, self.par, |c, s| {
            for (o, a) in s.iter_mut().enumerate() {
                *a *= factors[c * chunk + o];
            }
        });
    }

    pub fn renormalize(&mut self) -> Result<()> {
        let n = self.norm_sqr();
        if n <= 0.0 {
            return Err(Error::ZeroProbability);
        }
        let inv = 1.0 / n.sqrt();
        self.scale_amplitudes(&|_| inv);
        Ok(())
    }

    /// Samples register `name` from its marginal and collapses the state.
    pub fn measure<R: Rng>(&mut self, name: &str, rng: &mut R) -> Result<usize> {
        let reg = self.layout.register(name)?.clone();
        let mut marginal = vec![0.0; 1usize << reg.width];
        for (b, a) in self.amps.iter().enumerate() {
            marginal[reg.value(b)] += a.norm_sqr();
        }
        let total: f64 = marginal.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        let mut outcome = marginal.len() - 1;
        for (v, &p) in marginal.iter().enumerate() {
            if p > 0.0 {
                outcome = v;
                if u < p {
                    break;
                }
                u -= p;
            }
        }
        self.postselect(&|view| reg.value(view.basis()) == outcome)?;
        Ok(outcome)
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOL
    }

    /// One CSV record per nonzero basis state: register values, annotation
    /// values (empty when absent), real and imaginary amplitude.
    pub fn dump_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = self
            .layout
            .registers
            .iter()
            .map(|r| r.name.clone())
            .collect();
        header.extend(self.annotations.keys().cloned());
        header.push("re".into());
        header.push("im".into());
        let csv_err = |e: csv::Error| Error::Csv {
            row: 0,
            message: e.to_string(),
        };
        w.write_record(&header).map_err(csv_err)?;
        for b in self.support() {
            let view = self.view(b);
            let mut rec: Vec<String> = (0..self.layout.registers.len())
                .map(|r| view.value_at(r).to_string())
                .collect();
            for name in self.annotations.keys() {
                rec.push(
                    view.annotation(name)
                        .map(|v| v.to_string())
                        .unwrap_or_default(),
                );
            }
            rec.push(self.amps[b].re.to_string());
            rec.push(self.amps[b].im.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<state dump>".into(),
            source: e,
        })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn widths() {
        assert_eq!(width_for(1), 0);
        assert_eq!(width_for(2), 1);
        assert_eq!(width_for(3), 2);
        assert_eq!(width_for(4), 2);
        assert_eq!(width_for(5), 3);
    }

    #[test]
    fn init_and_cap() {
        let s = HybridState::init(RegisterLayout::new().add("i", 4).unwrap()).unwrap();
        assert_eq!(s.amplitudes(), &[c(1.0), c(0.0), c(0.0), c(0.0)]);
        assert!(s.annotation_names().is_empty());
        let big = RegisterLayout::new()
            .add("a", 1 << 20)
            .unwrap()
            .add("b", 1 << 10)
            .unwrap();
        assert!(matches!(
            HybridState::init(big),
            Err(Error::QubitCap {
                required: 30,
                cap: 26
            })
        ));
    }

    #[test]
    fn restricted_uniform() {
        let layout = RegisterLayout::new()
            .flag("f")
            .unwrap()
            .add("i", 3)
            .unwrap();
        let mut s = HybridState::init(layout).unwrap();
        s.hadamard_uniform("i").unwrap();
        let r = 1.0 / 3f64.sqrt();
        for v in 0..4 {
            let b = s.basis_of(&[("i", v)]).unwrap();
            let want = if v < 3 { r } else { 0.0 };
            assert!((s.amplitude(b).re - want).abs() < 1e-15);
        }
        assert!(s.is_normalized());
        assert!(matches!(
            s.hadamard_uniform("i"),
            Err(Error::RegisterNotClear { .. })
        ));
    }

    #[test]
    fn full_hadamard_is_involution() {
        let layout = RegisterLayout::new().add("i", 4).unwrap();
        let mut s = HybridState::init(layout).unwrap();
        s.hadamard_uniform("i").unwrap();
        s.hadamard_uniform("i").unwrap();
        assert!((s.amplitude(0).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_extremes() {
        let fmt = FixedPointFormat::default();
        let layout = RegisterLayout::new()
            .add("i", 2)
            .unwrap()
            .flag("r")
            .unwrap();
        let mut s = HybridState::init(layout).unwrap();
        s.hadamard_uniform("i").unwrap();
        s.write_annotation("v", &["i"], fmt, &|v| {
            fmt.from_f64(if v.value("i") == 0 { 6.0 } else { 0.0 })
        })
        .unwrap();
        s.controlled_rotation("v", 6.0, RotationKind::Sqrt, "r", &|_| true)
            .unwrap();
        let p = s.branch_weights(&["i"], &|v| v.value("r") == 0).unwrap();
        assert!((p[&vec![0]].1 / p[&vec![0]].0 - 1.0).abs() < 1e-12);
        assert!(p[&vec![1]].1.abs() < 1e-12);
        s.controlled_rotation_inverse("v", 6.0, RotationKind::Sqrt, "r", &|_| true)
            .unwrap();
        assert!(s.probability_of(&|v| v.value("r") == 1) < 1e-24);
    }

    #[test]
    fn rotation_range_checked() {
        let fmt = FixedPointFormat::default();
        let layout = RegisterLayout::new().flag("r").unwrap();
        let mut s = HybridState::init(layout).unwrap();
        s.write_annotation("v", &[], fmt, &|_| fmt.from_f64(7.0))
            .unwrap();
        assert!(matches!(
            s.controlled_rotation("v", 6.0, RotationKind::Sqrt, "r", &|_| true),
            Err(Error::RotationOutOfRange { .. })
        ));
        s.discard_annotation("v").unwrap();
        s.write_annotation("v", &[], fmt, &|_| fmt.from_f64(-3.0))
            .unwrap();
        s.controlled_rotation("v", 6.0, RotationKind::Linear, "r", &|_| true)
            .unwrap();
        assert!((s.amplitude(0).re + 0.5).abs() < 1e-12);
    }

    #[test]
    fn annotations_are_basis_valued() {
        let fmt = FixedPointFormat::default();
        let layout = RegisterLayout::new()
            .add("i", 2)
            .unwrap()
            .add("j", 2)
            .unwrap();
        let mut s = HybridState::init(layout).unwrap();
        s.hadamard_uniform("i").unwrap();
        s.hadamard_uniform("j").unwrap();
        let err = s.write_annotation("x", &["i"], fmt, &|v| fmt.from_f64(v.value("j") as f64));
        assert!(matches!(err, Err(Error::NotBasisValued(_))));
        s.write_annotation("x", &["i", "j"], fmt, &|v| {
            fmt.from_f64((v.value("i") * 2 + v.value("j")) as f64)
        })
        .unwrap();
        assert_eq!(
            s.annotation_at("x", &[1, 0]).unwrap().unwrap().to_f64(),
            2.0
        );
        assert!(matches!(
            s.write_annotation("x", &["i"], fmt, &|_| Ok(fmt.zero())),
            Err(Error::AnnotationExists(_))
        ));
        assert!(matches!(
            s.uncompute_annotation("x", &|_| Ok(fmt.zero())),
            Err(Error::UncomputeMismatch(_))
        ));
        s.uncompute_annotation("x", &|v| {
            fmt.from_f64((v.value("i") * 2 + v.value("j")) as f64)
        })
        .unwrap();
        assert!(!s.has_annotation("x"));
    }

    #[test]
    fn basis_map_checks_injectivity() {
        let layout = RegisterLayout::new().add("i", 4).unwrap();
        let mut s = HybridState::init(layout).unwrap();
        s.hadamard_uniform("i").unwrap();
        let before = s.amplitudes().to_vec();
        s.apply_basis_map(&|v| Ok(v.basis())).unwrap();
        assert_eq!(s.amplitudes(), &before[..]);
        assert!(matches!(
            s.apply_basis_map(&|_| Ok(0)),
            Err(Error::NotReversible)
        ));
        s.apply_basis_map(&|v| Ok((v.basis() + 1) % 4)).unwrap();
        s.apply_basis_map(&|v| Ok((v.basis() + 3) % 4)).unwrap();
        assert_eq!(s.amplitudes(), &before[..]);
    }

    #[test]
    fn postselect_and_measure() {
        use rand::SeedableRng;
        let layout = RegisterLayout::new().add("i", 4).unwrap();
        let mut s = HybridState::init(layout).unwrap();
        s.hadamard_uniform("i").unwrap();
        assert!((s.probability_of(&|_| true) - 1.0).abs() < 1e-12);
        assert_eq!(s.probability_of(&|_| false), 0.0);
        let mut t = s.clone();
        assert!(matches!(
            t.postselect(&|_| false),
            Err(Error::ZeroProbability)
        ));
        t.postselect(&|v| v.value("i") < 2).unwrap();
        assert!(t.is_normalized());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            let mut u = s.clone();
            counts[u.measure("i", &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e4 - 0.25).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn reflection_and_qft() {
        let layout = RegisterLayout::new().add("i", 3).unwrap();
        let mut s = HybridState::init(layout).unwrap();
        s.hadamard_uniform("i").unwrap();
        let before = s.amplitudes().to_vec();
        s.reflect_about_uniform("i").unwrap();
        for (a, b) in s.amplitudes().iter().zip(&before) {
            assert!((a - b).norm() < 1e-12);
        }
        let layout = RegisterLayout::new().add("y", 8).unwrap();
        let mut s = HybridState::init(layout).unwrap();
        s.hadamard_uniform("y").unwrap();
        s.inverse_qft("y").unwrap();
        assert!((s.amplitude(0).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dump_lists_support() {
        let fmt = FixedPointFormat::default();
        let layout = RegisterLayout::new().add("i", 2).unwrap();
        let mut s = HybridState::init(layout).unwrap();
        s.hadamard_uniform("i").unwrap();
        s.write_annotation("x", &["i"], fmt, &|v| {
            fmt.from_f64(v.value("i") as f64 + 0.5)
        })
        .unwrap();
        let mut buf = Vec::new();
        s.dump_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("i,x,re,im"));
        assert!(text.contains("1,1.5,0.7071"));
    }
}
