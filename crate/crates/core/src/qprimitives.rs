//! Amplitude amplification, amplitude estimation, inner-product estimation
//! and Grover search.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qarith::{Fixed, FixedPointFormat};
use crate::statevector::{hadamard_matrix, BasisView, HybridState, Matrix2, RegisterLayout};

/// The Grover operator restricted to its two-dimensional invariant plane,
/// spanned by the normalized good and bad components of the prepared state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GroverOperator {
    /// `sin^2(theta)` is the good-subspace probability of the prepared state.
    pub theta: f64,
}

impl GroverOperator {
    pub fn from_probability(p: f64) -> Self {
        Self {
            theta: p.clamp(0.0, 1.0).sqrt().asin(),
        }
    }

    /// Matrix of `Q^power` in the (good, bad) basis: a rotation by
    /// `2 * power * theta`.
    pub fn matrix(&self, power: u64) -> Matrix2 {
        let a = 2.0 * self.theta * power as f64;
        let (s, c) = a.sin_cos();
        [
            [Complex64::new(c, 0.0), Complex64::new(s, 0.0)],
            [Complex64::new(-s, 0.0), Complex64::new(c, 0.0)],
        ]
    }

    pub fn good_probability_after(&self, ell: u64) -> f64 {
        ((2 * ell + 1) as f64 * self.theta).sin().powi(2)
    }

    /// Eigenphases `+-2 theta` as fractions of a full turn in `[0, 1)`.
    pub fn eigenphases(&self) -> [f64; 2] {
        let f = self.theta / PI;
        [f, (1.0 - f).rem_euclid(1.0)]
    }
}

/// `round(pi / (4 theta) - 1/2)` for `sin^2(theta) = p`: the iteration count
/// that brings a branch of good probability `p` closest to certainty.
pub fn optimal_iterations(p: f64) -> u64 {
    if p <= 0.0 {
        return 0;
    }
    let theta = GroverOperator::from_probability(p).theta;
    (PI / (4.0 * theta) - 0.5).round().max(0.0) as u64
}

/// Outcome of amplifying one branch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BranchAmplification {
    pub weight: f64,
    pub theta: f64,
    /// Good probability within the branch after amplification.
    pub p: f64,
}

type Pred<'a> = &'a (dyn Fn(&BasisView) -> bool + Sync);

fn branch_key(view: &BasisView, regs: &[usize]) -> Vec<usize> {
    regs.iter().map(|&r| view.value_at(r)).collect()
}

fn branch_regs(state: &HybridState, regs: &[&str]) -> Result<Vec<usize>> {
    regs.iter().map(|r| state.layout().index_of(r)).collect()
}

/// Applies `ell` Grover iterations independently inside every branch (joint
/// value of `regs`): good components are scaled by
/// `sin((2l+1)theta)/sin(theta)` and bad ones by `cos((2l+1)theta)/cos(theta)`.
pub fn amplitude_amplify(
    state: &mut HybridState,
    regs: &[&str],
    good: Pred,
    ell: u64,
) -> Result<BTreeMap<Vec<usize>, BranchAmplification>> {
    let idx = branch_regs(state, regs)?;
    let weights = state.branch_weights(regs, good)?;
    let mut out = BTreeMap::new();
    let mut factors: BTreeMap<Vec<usize>, (f64, f64)> = BTreeMap::new();
    for (key, (w, g)) in weights {
        let op = GroverOperator::from_probability(if w > 0.0 { g / w } else { 0.0 });
        let a = (2 * ell + 1) as f64 * op.theta;
        let (s, c) = op.theta.sin_cos();
        let fg = if s > 0.0 { a.sin() / s } else { 0.0 };
        let fb = if c > 1e-300 { a.cos() / c } else { 0.0 };
        factors.insert(key.clone(), (fg, fb));
        out.insert(
            key,
            BranchAmplification {
                weight: w,
                theta: op.theta,
                p: op.good_probability_after(ell),
            },
        );
    }
    state.scale_amplitudes(&|v| {
        let Some(&(fg, fb)) = factors.get(&branch_key(v, &idx)) else {
            return 1.0;
        };
        if good(v) {
            fg
        } else {
            fb
        }
    });
    Ok(out)
}

/// The certain-success limit of amplification: inside each branch the good
/// component is renormalized to the branch's weight and the bad component
/// removed. Branches without a good component vanish and the state is
/// renormalized globally.
pub fn amplify_postselect(
    state: &mut HybridState,
    regs: &[&str],
    good: Pred,
) -> Result<BTreeMap<Vec<usize>, BranchAmplification>> {
    let idx = branch_regs(state, regs)?;
    let weights = state.branch_weights(regs, good)?;
    let mut out = BTreeMap::new();
    let mut factors = BTreeMap::new();
    for (key, (w, g)) in weights {
        let theta = GroverOperator::from_probability(if w > 0.0 { g / w } else { 0.0 }).theta;
        factors.insert(key.clone(), if g > 0.0 { (w / g).sqrt() } else { 0.0 });
        out.insert(
            key,
            BranchAmplification {
                weight: w,
                theta,
                p: if g > 0.0 { 1.0 } else { 0.0 },
            },
        );
    }
    state.scale_amplitudes(&|v| {
        if !good(v) {
            return 0.0;
        }
        factors.get(&branch_key(v, &idx)).copied().unwrap_or(0.0)
    });
    state.renormalize()?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AeMode {
    /// The phase register reads the grid point nearest to `theta / pi`.
    #[default]
    Deterministic,
    /// The phase register is sampled from the exact outcome distribution.
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AmplitudeEstimate {
    pub theta: f64,
    pub m: u32,
    pub mode: AeMode,
    /// Readout `y` folded into `0..=2^(m-1)`; `theta_hat = pi * y / 2^m`.
    pub grid: u64,
    pub theta_frac: Fixed,
}

impl AmplitudeEstimate {
    pub fn theta_hat(&self) -> f64 {
        PI * self.theta_frac.to_f64()
    }

    pub fn error(&self) -> f64 {
        (self.theta_hat() - self.theta).abs()
    }

    pub fn bound(&self) -> f64 {
        PI / (1u64 << self.m) as f64
    }

    pub fn sin_sq(&self) -> f64 {
        self.theta_hat().sin().powi(2)
    }
}

/// `sin^2(M pi d) / (M^2 sin^2(pi d))`, the Fejer kernel of an `M`-point
/// phase register evaluated at offset `d`.
fn fejer(m_points: f64, d: f64) -> f64 {
    let frac = d - d.round();
    if frac.abs() < 1e-13 {
        return 1.0;
    }
    let num = (m_points * PI * frac).sin();
    let den = m_points * (PI * frac).sin();
    (num / den).powi(2)
}

/// Exact probability of every readout `y in 0..2^m` when phase estimation
/// of the Grover operator runs on a state with good amplitude `sin(theta)`.
pub fn ae_outcome_distribution(theta: f64, m: u32) -> Vec<f64> {
    let mm = (1u64 << m) as f64;
    let f = theta / PI;
    (0..1u64 << m)
        .map(|y| {
            let g = y as f64 / mm;
            0.5 * fejer(mm, f - g) + 0.5 * fejer(mm, 1.0 - f - g)
        })
        .collect()
}

fn fold(y: u64, m: u32) -> u64 {
    y.min((1u64 << m) - y)
}

fn from_grid(theta: f64, m: u32, mode: AeMode, grid: u64) -> AmplitudeEstimate {
    let theta_frac = FixedPointFormat::phase(m)
        .from_raw(grid as i64)
        .expect("folded grid value fits the phase format");
    AmplitudeEstimate {
        theta,
        m,
        mode,
        grid,
        theta_frac,
    }
}

/// Amplitude estimation of a state whose good-subspace probability is `p`.
/// `rng` is only consulted in sampled mode.
pub fn amplitude_estimate<R: Rng>(p: f64, m: u32, mode: AeMode, rng: &mut R) -> AmplitudeEstimate {
    let theta = GroverOperator::from_probability(p).theta;
    let mm = (1u64 << m) as f64;
    let grid = match mode {
        AeMode::Deterministic => (mm * theta / PI).round_ties_even() as u64,
        AeMode::Sampled => {
            let dist = ae_outcome_distribution(theta, m);
            fold(sample_index(&dist, rng) as u64, m)
        }
    };
    from_grid(theta, m, mode, grid)
}

/// Deterministic-mode estimate; needs no randomness.
pub fn amplitude_estimate_nearest(p: f64, m: u32) -> AmplitudeEstimate {
    let theta = GroverOperator::from_probability(p).theta;
    let grid = ((1u64 << m) as f64 * theta / PI).round_ties_even() as u64;
    from_grid(theta, m, AeMode::Deterministic, grid)
}

pub fn sample_index<R: Rng>(dist: &[f64], rng: &mut R) -> usize {
    let total: f64 = dist.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            last = i;
            if u < p {
                return i;
            }
            u -= p;
        }
    }
    last
}

/// Runs phase estimation of the Grover operator on an explicit state of `m`
/// precision qubits plus the invariant plane, and returns the readout
/// distribution. Independent of [`ae_outcome_distribution`].
pub fn phase_estimation_statevector(theta: f64, m: u32) -> Result<Vec<f64>> {
    let layout = RegisterLayout::new().flag("plane")?.add("y", 1usize << m)?;
    let mut s = HybridState::init(layout)?;
    let (st, ct) = theta.sin_cos();
    // Plane basis: |0> = good, |1> = bad. Prepare sin|good> + cos|bad>.
    let prep: Matrix2 = [
        [Complex64::new(st, 0.0), Complex64::new(ct, 0.0)],
        [Complex64::new(ct, 0.0), Complex64::new(-st, 0.0)],
    ];
    s.apply_flag_unitary("plane", &prep, &|_| true)?;
    s.hadamard_uniform("y")?;
    let op = GroverOperator { theta };
    for k in 0..m {
        let q = op.matrix(1u64 << k);
        s.apply_flag_unitary("plane", &q, &|v| (v.value("y") >> k) & 1 == 1)?;
    }
    s.inverse_qft("y")?;
    let w = s.branch_weights(&["y"], &|_| true)?;
    let mut dist = vec![0.0; 1usize << m];
    for (key, (p, _)) in w {
        dist[key[0]] = p;
    }
    Ok(dist)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InnerProductEstimate {
    /// `2 sin^2(beta_hat) - 1`.
    pub value: f64,
    /// Exact probability of reading the selector as 0.
    pub p0: f64,
    pub ae: AmplitudeEstimate,
}

/// Inner product from a Hadamard-test success probability `p0`:
/// `p0 = (1 + <a|b>) / 2`, estimated with `m`-qubit amplitude estimation.
pub fn inner_product_from_p0<R: Rng>(
    p0: f64,
    m: u32,
    mode: AeMode,
    rng: &mut R,
) -> InnerProductEstimate {
    let ae = amplitude_estimate(p0, m, mode, rng);
    InnerProductEstimate {
        value: 2.0 * ae.sin_sq() - 1.0,
        p0,
        ae,
    }
}

/// Builds `(|0>|a> + |1>|b>)/sqrt(2)` with a selector qubit named `sel` in
/// front of the registers of `a`, then applies a Hadamard to `sel`.
pub fn hadamard_test_state(a: &HybridState, b: &HybridState) -> Result<HybridState> {
    if a.layout() != b.layout() {
        return Err(Error::Config(
            "inner product of states on different layouts".into(),
        ));
    }
    let mut layout = RegisterLayout::with_cap(a.layout().cap()).flag("sel")?;
    for r in a.layout().registers() {
        layout = layout.add(&r.name, r.dim)?;
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut amps = vec![Complex64::new(0.0, 0.0); a.amplitudes().len() * 2];
    for (i, (&x, &y)) in a.amplitudes().iter().zip(b.amplitudes()).enumerate() {
        amps[i << 1] = x * h;
        amps[(i << 1) | 1] = y * h;
    }
    let mut s = HybridState::from_amplitudes(layout, amps)?;
    s.apply_flag_unitary("sel", &hadamard_matrix(), &|_| true)?;
    Ok(s)
}

/// Estimates `Re <a|b>` of two normalized states on the same layout.
pub fn inner_product_estimate<R: Rng>(
    a: &HybridState,
    b: &HybridState,
    m: u32,
    mode: AeMode,
    rng: &mut R,
) -> Result<InnerProductEstimate> {
    let s = hadamard_test_state(a, b)?;
    let p0 = s.probability_of(&|v| v.value("sel") == 0).clamp(0.0, 1.0);
    Ok(inner_product_from_p0(p0, m, mode, rng))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    /// The number of marked items is known; each round uses the optimal
    /// iteration count for the items not yet found.
    #[default]
    KnownCount,
    /// Randomized iteration counts from an exponentially growing range.
    UnknownCount,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SearchOutcome {
    /// 0-based marked indices, ascending.
    pub found: Vec<usize>,
    pub rounds: u64,
    pub iterations: u64,
}

/// Growth factor of the randomized schedule.
const SCHEDULE_GROWTH: f64 = 6.0 / 5.0;
/// Consecutive failed rounds at the schedule cap before stopping.
const SWEEP_FAILURES: u32 = 48;

fn grover_round<R: Rng>(
    k: usize,
    marked: &(dyn Fn(usize) -> bool + Sync),
    found: &BTreeSet<usize>,
    iterations: u64,
    rng: &mut R,
) -> Result<usize> {
    let mut s = HybridState::init(RegisterLayout::new().add("i", k)?)?;
    s.hadamard_uniform("i")?;
    let target = |v: &BasisView| {
        let i = v.value("i");
        i < k && marked(i) && !found.contains(&i)
    };
    for _ in 0..iterations {
        s.phase_flip(&target);
        s.reflect_about_uniform("i")?;
    }
    s.measure("i", rng)
}

/// Finds every index in `0..k` satisfying `marked` with Grover rounds on a
/// simulated index register. Each measured index is checked against
/// `marked` before it is accepted.
pub fn grover_search<R: Rng>(
    k: usize,
    marked: &(dyn Fn(usize) -> bool + Sync),
    strategy: SearchStrategy,
    rng: &mut R,
) -> Result<SearchOutcome> {
    let mut found = BTreeSet::new();
    let mut out = SearchOutcome::default();
    if k == 0 {
        return Ok(out);
    }
    match strategy {
        SearchStrategy::KnownCount => {
            let total = (0..k).filter(|&i| marked(i)).count();
            // Each round succeeds with probability at least 1/2, so this cap
            // is never reached in practice; it only guards against a
            // predicate that changes between calls.
            let max_rounds = 64 * (total as u64 + 1);
            while found.len() < total && out.rounds < max_rounds {
                let left = (total - found.len()) as f64 / k as f64;
                let theta = left.sqrt().asin();
                let ell = (PI / (4.0 * theta)).floor() as u64;
                let i = grover_round(k, marked, &found, ell, rng)?;
                out.rounds += 1;
                out.iterations += ell;
                if i < k && marked(i) {
                    found.insert(i);
                }
            }
        }
        SearchStrategy::UnknownCount => {
            let cap = (k as f64).sqrt().max(1.0);
            let mut range = 1.0f64;
            let mut failures = 0;
            while failures < SWEEP_FAILURES {
                let ell = rng.gen_range(0..range.ceil().max(1.0) as u64);
                let i = grover_round(k, marked, &found, ell, rng)?;
                out.rounds += 1;
                out.iterations += ell;
                if i < k && marked(i) && !found.contains(&i) {
                    found.insert(i);
                    range = 1.0;
                    failures = 0;
                } else {
                    range = (range * SCHEDULE_GROWTH).min(cap);
                    if range >= cap {
                        failures += 1;
                    }
                }
            }
        }
    }
    out.found = found.into_iter().collect();
    Ok(out)
}
