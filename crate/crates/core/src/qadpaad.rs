//! The simulated quantum pipeline: PAAD state preparation (step 1),
//! similarity estimation (step 2), score estimation (step 3) and Grover
//! detection (step 4), with QRAM oracle emulation and call counting.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::classical::normalizer;
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::qarith::{
    compare_ge, divide, hadamard_test_value, membership, qma_rho, sine, sine_square_scale,
    subtract, Fixed, FixedPointFormat, MembershipMode,
};
use crate::qprimitives::{
    amplify_postselect, amplitude_amplify, amplitude_estimate, grover_search, optimal_iterations,
    AeMode, AmplitudeEstimate, SearchOutcome, SearchStrategy,
};
use crate::statevector::{
    hadamard_matrix, BasisView, HybridState, RegisterLayout, RotationKind, DEFAULT_QUBIT_CAP,
};
use crate::timeseries::{subsequences, SubsectionPlan, TimeSeries, WindowPlan};

/// Oracle calls charged to one pipeline step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StepCalls {
    pub ox: u64,
    pub os: u64,
}

impl StepCalls {
    pub fn new(ox: u64, os: u64) -> Self {
        Self { ox, os }
    }

    pub fn times(self, k: u64) -> Self {
        Self {
            ox: self.ox.saturating_mul(k),
            os: self.os.saturating_mul(k),
        }
    }

    pub fn plus(self, o: Self) -> Self {
        Self {
            ox: self.ox.saturating_add(o.ox),
            os: self.os.saturating_add(o.os),
        }
    }

    pub fn total(&self) -> u64 {
        self.ox.saturating_add(self.os)
    }
}

/// Oracle calls per pipeline step. Repetitions that the simulation collapses
/// into closed form (the controlled powers inside amplitude estimation) are
/// charged with their multiplicity.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OracleCounters {
    pub steps: BTreeMap<String, StepCalls>,
}

impl OracleCounters {
    pub fn charge(&mut self, step: &str, calls: StepCalls) {
        let e = self.steps.entry(step.to_string()).or_default();
        *e = e.plus(calls);
    }

    pub fn get(&self, step: &str) -> StepCalls {
        self.steps.get(step).copied().unwrap_or_default()
    }

    /// Sum over steps whose label starts with `prefix` followed by a dot.
    pub fn stage(&self, stage: u32) -> StepCalls {
        let prefix = format!("{stage}.");
        self.steps
            .iter()
            .filter(|(k, _)| k.starts_with(&prefix) || **k == stage.to_string())
            .fold(StepCalls::default(), |acc, (_, v)| acc.plus(*v))
    }

    pub fn total(&self) -> StepCalls {
        self.steps
            .values()
            .fold(StepCalls::default(), |acc, v| acc.plus(*v))
    }
}

/// Emulated QRAM holding the subsequence samples and subsection bounds.
pub struct Qram<'a> {
    windows: Vec<&'a [f64]>,
    plan: SubsectionPlan,
    format: FixedPointFormat,
}

impl<'a> Qram<'a> {
    pub fn new(windows: Vec<&'a [f64]>, plan: SubsectionPlan, format: FixedPointFormat) -> Self {
        Self {
            windows,
            plan,
            format,
        }
    }

    pub fn k(&self) -> usize {
        self.windows.len()
    }

    pub fn n(&self) -> usize {
        self.windows.first().map_or(0, |w| w.len())
    }

    pub fn q(&self) -> usize {
        self.plan.q
    }

    pub fn sample(&self, i: usize, j: usize) -> Result<Fixed> {
        self.format.from_f64(self.windows[i][j])
    }

    /// `(a^{t-1}, a^t)` for 0-based subsection `t`.
    pub fn bounds(&self, i: usize, t: usize) -> Result<(Fixed, Fixed)> {
        let b = &self.plan.bounds[i];
        Ok((self.format.from_f64(b[t])?, self.format.from_f64(b[t + 1])?))
    }

    /// `|i>|j>|0> -> |i>|j>|x_i(j)>` into annotation `x`.
    pub fn oracle_x(&self, state: &mut HybridState) -> Result<()> {
        state.write_annotation("x", &["i", "j"], self.format, &|v| {
            self.sample(v.value("i"), v.value("j"))
        })
    }

    pub fn oracle_x_uncompute(&self, state: &mut HybridState) -> Result<()> {
        state.uncompute_annotation("x", &|v| self.sample(v.value("i"), v.value("j")))
    }

    /// `|i>|t>|0>|0> -> |i>|t>|a_i^t>|a_i^{t-1}>` into annotations `a_hi`, `a_lo`.
    pub fn oracle_s(&self, state: &mut HybridState) -> Result<()> {
        state.write_annotation("a_lo", &["i", "t"], self.format, &|v| {
            Ok(self.bounds(v.value("i"), v.value("t"))?.0)
        })?;
        state.write_annotation("a_hi", &["i", "t"], self.format, &|v| {
            Ok(self.bounds(v.value("i"), v.value("t"))?.1)
        })
    }

    pub fn oracle_s_uncompute(&self, state: &mut HybridState) -> Result<()> {
        state.uncompute_annotation("a_lo", &|v| Ok(self.bounds(v.value("i"), v.value("t"))?.0))?;
        state.uncompute_annotation("a_hi", &|v| Ok(self.bounds(v.value("i"), v.value("t"))?.1))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AaMode {
    /// Every branch is amplified to certainty (success probability 1).
    #[default]
    Postselect,
    /// A single global iteration count for all branches; non-members are
    /// flagged and carried along.
    Appendix { ell: Option<u64> },
}

/// Precision qubits of the four estimation stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PrecisionPlan {
    pub m1: u32,
    pub m2: u32,
    pub m3: u32,
    pub m4: u32,
}

impl PrecisionPlan {
    pub fn uniform(m: u32) -> Self {
        Self {
            m1: m,
            m2: m,
            m3: m,
            m4: m,
        }
    }

    fn validate(&self, mode: AeMode) -> Result<()> {
        let limit = match mode {
            AeMode::Deterministic => 60,
            AeMode::Sampled => 22,
        };
        for m in [self.m1, self.m2, self.m3, self.m4] {
            if m == 0 || m > limit {
                return Err(Error::Config(format!(
                    "precision qubits must lie in 1..={limit} for {mode:?} estimation, got {m}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub window: usize,
    pub stride: usize,
    pub subsections: usize,
    pub delta: f64,
    pub aa_mode: AaMode,
    pub membership: MembershipMode,
    pub precision: PrecisionPlan,
    pub format: FixedPointFormat,
    pub ae_mode: AeMode,
    pub search: SearchStrategy,
    pub seed: u64,
    pub qubit_cap: u32,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl PipelineConfig {
    pub fn new(window: usize, subsections: usize, delta: f64, precision: PrecisionPlan) -> Self {
        Self {
            window,
            stride: 1,
            subsections,
            delta,
            aa_mode: AaMode::default(),
            membership: MembershipMode::default(),
            precision,
            format: FixedPointFormat::default(),
            ae_mode: AeMode::default(),
            search: SearchStrategy::default(),
            seed: 42,
            qubit_cap: DEFAULT_QUBIT_CAP,
            parallelism: Parallelism::default(),
        }
    }
}

fn stream_rng(seed: u64, stage: u64, branch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stage << 32) | branch);
    rng
}

/// Number of AE applications of the prepared state: `2^(m+1) - 1` uses of
/// the preparation unitary or its inverse (the initial preparation plus two
/// per Grover operator in `2^m - 1` controlled powers).
fn ae_uses(m: u32) -> u64 {
    1u64.checked_shl(m + 1).map_or(u64::MAX, |v| v - 1)
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchEstimate {
    /// Probability of the rotation flag reading 0 within the branch.
    pub p: f64,
    pub ae: AmplitudeEstimate,
}

/// Result of step 1.
#[derive(Clone, Debug, Serialize)]
pub struct PaadEstimate {
    pub c: f64,
    /// Iterations charged for the amplification stage.
    pub aa_iterations: u64,
    /// Success probability of amplification per branch `[i][t]`.
    pub p_success: Vec<Vec<f64>>,
    pub branches: Vec<Vec<BranchEstimate>>,
    pub mu_hat: Vec<Vec<Fixed>>,
    /// Cost of one preparation of the state fed to estimation.
    pub prep_cost: StepCalls,
}

impl PaadEstimate {
    pub fn mu_f64(&self) -> Vec<Vec<f64>> {
        self.mu_hat
            .iter()
            .map(|r| r.iter().map(Fixed::to_f64).collect())
            .collect()
    }
}

/// Builds the step-1 state up to the rotation flag (before estimation).
/// Returns the state and the per-branch amplification success.
pub fn prepare_rotated_state(
    qram: &Qram,
    cfg: &PipelineConfig,
    c: f64,
    counters: &mut OracleCounters,
) -> Result<(HybridState, Vec<Vec<f64>>, u64)> {
    let (k, n, q) = (qram.k(), qram.n(), qram.q());
    let layout = RegisterLayout::with_cap(cfg.qubit_cap)
        .add("i", k)?
        .add("t", q)?
        .add("j", n)?
        .flag("member")?
        .flag("rot")?;
    let mut s = HybridState::init_with(layout, cfg.parallelism)?;
    for r in ["i", "t", "j"] {
        s.hadamard_uniform(r)?;
    }
    qram.oracle_x(&mut s)?;
    qram.oracle_s(&mut s)?;
    counters.charge("1.3", StepCalls::new(1, 1));

    let mode = cfg.membership;
    if mode == MembershipMode::PaperLiteral {
        let rho = |v: &BasisView| qma_rho(v.require("x")?, v.require("a_lo")?, v.require("a_hi")?);
        s.write_annotation("rho", &["i", "t", "j"], cfg.format, &rho)?;
        s.flip_flag_where("member", &|v| Ok(v.require("rho")?.raw() <= 0))?;
        s.uncompute_annotation("rho", &rho)?;
    } else {
        s.flip_flag_where("member", &|v| {
            membership(
                v.require("x")?,
                v.require("a_lo")?,
                v.require("a_hi")?,
                v.value("t") + 1,
                q,
                mode,
            )
        })?;
    }
    qram.oracle_s_uncompute(&mut s)?;
    counters.charge("1.4", StepCalls::new(0, 1));

    let member = |v: &BasisView| v.value("member") == 1;
    let (ell, amp) = match cfg.aa_mode {
        AaMode::Postselect => {
            // Charged at the iteration count that brings a single-member
            // branch to certainty, the worst case over branches.
            let ell = optimal_iterations(1.0 / n as f64);
            (ell, amplify_postselect(&mut s, &["i", "t"], &member)?)
        }
        AaMode::Appendix { ell } => {
            let ell = ell.unwrap_or_else(|| optimal_iterations(1.0 / n as f64));
            (ell, amplitude_amplify(&mut s, &["i", "t"], &member, ell)?)
        }
    };
    counters.charge("1.5", StepCalls::new(1, 2).times(2 * ell));
    let mut p_success = vec![vec![0.0; q]; k];
    for (key, b) in &amp {
        if key[0] < k && key[1] < q {
            p_success[key[0]][key[1]] = b.p;
        }
    }

    match cfg.aa_mode {
        AaMode::Postselect => {
            s.controlled_rotation("x", c, RotationKind::Sqrt, "rot", &|_| true)?;
        }
        AaMode::Appendix { .. } => {
            s.controlled_rotation("x", c, RotationKind::Sqrt, "rot", &member)?;
            s.flip_flag_where("rot", &|v| Ok(v.value("member") == 0))?;
        }
    }
    qram.oracle_x_uncompute(&mut s)?;
    counters.charge("1.6", StepCalls::new(1, 0));
    Ok((s, p_success, ell))
}

/// Step 1: per-branch subsection means `mu_hat = C sin^2(theta_hat)`.
pub fn prepare_paad_state(
    qram: &Qram,
    cfg: &PipelineConfig,
    counters: &mut OracleCounters,
) -> Result<PaadEstimate> {
    cfg.precision.validate(cfg.ae_mode)?;
    let c = normalizer(&qram.windows);
    if c <= 0.0 {
        return Err(Error::ZeroScale);
    }
    let (k, q) = (qram.k(), qram.q());
    let mut local = OracleCounters::default();
    let (s, p_success, ell) = prepare_rotated_state(qram, cfg, c, &mut local)?;
    let prep_cost = local.total();
    for (step, calls) in local.steps {
        counters.charge(&step, calls);
    }

    let weights = s.branch_weights(&["i", "t"], &|v| v.value("rot") == 0)?;
    let m1 = cfg.precision.m1;
    let mut branches = Vec::with_capacity(k);
    let mut mu_hat = Vec::with_capacity(k);
    for i in 0..k {
        let mut row = Vec::with_capacity(q);
        let mut mu_row = Vec::with_capacity(q);
        for t in 0..q {
            let p = match weights.get(&vec![i, t]) {
                Some(&(w, g)) if w > 0.0 => (g / w).clamp(0.0, 1.0),
                _ => 0.0,
            };
            let mut rng = stream_rng(cfg.seed, 1, (i * q + t) as u64);
            let ae = amplitude_estimate(p, m1, cfg.ae_mode, &mut rng);
            mu_row.push(sine_square_scale(ae.theta_frac, c, cfg.format)?);
            row.push(BranchEstimate { p, ae });
        }
        branches.push(row);
        mu_hat.push(mu_row);
    }
    counters.charge("1.7", prep_cost.times(ae_uses(m1) - 1));
    Ok(PaadEstimate {
        c,
        aa_iterations: ell,
        p_success,
        branches,
        mu_hat,
        prep_cost,
    })
}

/// Result of step 2.
#[derive(Clone, Debug, Serialize)]
pub struct SimilarityEstimate {
    /// Probability of the flag reading 0 per pair, `S_bar(mu_hat)^2`.
    pub p: Vec<Vec<f64>>,
    pub s_bar_hat: Vec<Vec<Fixed>>,
    pub prep_cost: StepCalls,
}

impl SimilarityEstimate {
    pub fn s_bar_f64(&self) -> Vec<Vec<f64>> {
        self.s_bar_hat
            .iter()
            .map(|r| r.iter().map(Fixed::to_f64).collect())
            .collect()
    }
}

/// Step 2: normalized similarities `S_bar(X_i, X_k)` by amplitude estimation
/// over the difference rotation.
pub fn similarity_state(
    paad: &PaadEstimate,
    step1_total: StepCalls,
    cfg: &PipelineConfig,
    counters: &mut OracleCounters,
) -> Result<SimilarityEstimate> {
    let k = paad.mu_hat.len();
    let q = paad.mu_hat.first().map_or(0, Vec::len);
    let c = paad.c;
    let layout = RegisterLayout::with_cap(cfg.qubit_cap)
        .add("i", k)?
        .add("k", k)?
        .add("t", q)?
        .flag("flag")?;
    let mut s = HybridState::init_with(layout, cfg.parallelism)?;
    for r in ["i", "k", "t"] {
        s.hadamard_uniform(r)?;
    }
    let mu_i = |v: &BasisView| Ok(paad.mu_hat[v.value("i")][v.value("t")]);
    let mu_k = |v: &BasisView| Ok(paad.mu_hat[v.value("k")][v.value("t")]);
    s.write_annotation("mu_i", &["i", "t"], cfg.format, &mu_i)?;
    s.write_annotation("mu_k", &["k", "t"], cfg.format, &mu_k)?;
    let prep_cost = step1_total.times(2);
    counters.charge("2.1", prep_cost);

    s.write_annotation("diff", &["i", "k", "t"], cfg.format, &|v| {
        subtract(v.require("mu_i")?, v.require("mu_k")?)
    })?;
    s.uncompute_annotation("mu_i", &mu_i)?;
    s.uncompute_annotation("mu_k", &mu_k)?;
    s.controlled_rotation("diff", 2.0 * c, RotationKind::Linear, "flag", &|_| true)?;

    let weights = s.branch_weights(&["i", "k"], &|v| v.value("flag") == 0)?;
    let m2 = cfg.precision.m2;
    let mut p = vec![vec![0.0; k]; k];
    let mut s_bar_hat = vec![vec![cfg.format.zero(); k]; k];
    for i in 0..k {
        for kk in i..k {
            let pr = match weights.get(&vec![i, kk]) {
                Some(&(w, g)) if w > 0.0 => (g / w).clamp(0.0, 1.0),
                _ => 0.0,
            };
            // One readout per unordered pair keeps the estimate symmetric
            // in sampled mode.
            let mut rng = stream_rng(cfg.seed, 2, (i * k + kk) as u64);
            let ae = amplitude_estimate(pr, m2, cfg.ae_mode, &mut rng);
            let v = sine(ae.theta_frac, cfg.format)?;
            p[i][kk] = pr;
            p[kk][i] = pr;
            s_bar_hat[i][kk] = v;
            s_bar_hat[kk][i] = v;
        }
    }
    counters.charge("2.4", prep_cost.times(ae_uses(m2) - 1));
    Ok(SimilarityEstimate {
        p,
        s_bar_hat,
        prep_cost,
    })
}

/// Result of step 3.
#[derive(Clone, Debug, Serialize)]
pub struct ScoreEstimate {
    pub row_p0: Vec<f64>,
    pub row_mean_hat: Vec<Fixed>,
    pub global_p0: f64,
    pub global_mean_hat: Fixed,
    pub h_hat: Vec<Fixed>,
}

impl ScoreEstimate {
    pub fn h_f64(&self) -> Vec<f64> {
        self.h_hat.iter().map(Fixed::to_f64).collect()
    }
}

fn selector_state(
    sim: &SimilarityEstimate,
    cfg: &PipelineConfig,
    order: &[&str],
) -> Result<HybridState> {
    let k = sim.s_bar_hat.len();
    let mut layout = RegisterLayout::with_cap(cfg.qubit_cap);
    for &r in order {
        layout = if r == "sel" || r == "anc" {
            layout.flag(r)?
        } else {
            layout.add(r, k)?
        };
    }
    let mut s = HybridState::init_with(layout, cfg.parallelism)?;
    for r in ["i", "k", "sel"] {
        s.hadamard_uniform(r)?;
    }
    let one = cfg.format.from_f64(1.0)?;
    s.write_annotation("s_bar", &["i", "k"], cfg.format, &|v| {
        let x = sim.s_bar_hat[v.value("i")][v.value("k")];
        Ok(if x.raw() < 0 {
            cfg.format.zero()
        } else if x.raw() > one.raw() {
            one
        } else {
            x
        })
    })?;
    s.controlled_rotation("s_bar", 1.0, RotationKind::Linear, "anc", &|v| {
        v.value("sel") == 0
    })?;
    s.apply_flag_unitary("sel", &hadamard_matrix(), &|_| true)?;
    Ok(s)
}

/// Step 3: row means and the global mean of `S_bar` by inner-product
/// estimation, and their ratio `h_hat`.
pub fn score_state(
    sim: &SimilarityEstimate,
    step2_total: StepCalls,
    cfg: &PipelineConfig,
    counters: &mut OracleCounters,
) -> Result<ScoreEstimate> {
    let k = sim.s_bar_hat.len();
    let rows = selector_state(sim, cfg, &["i", "sel", "k", "anc"])?;
    let weights = rows.branch_weights(&["i"], &|v| v.value("sel") == 0)?;
    let mut row_p0 = Vec::with_capacity(k);
    let mut row_mean_hat = Vec::with_capacity(k);
    for i in 0..k {
        let p0 = match weights.get(&vec![i]) {
            Some(&(w, g)) if w > 0.0 => (g / w).clamp(0.0, 1.0),
            _ => 0.0,
        };
        let mut rng = stream_rng(cfg.seed, 3, i as u64);
        let ae = amplitude_estimate(p0, cfg.precision.m3, cfg.ae_mode, &mut rng);
        row_p0.push(p0);
        row_mean_hat.push(hadamard_test_value(ae.theta_frac, cfg.format)?);
    }
    counters.charge("3.3", step2_total.times(ae_uses(cfg.precision.m3)));

    let global = selector_state(sim, cfg, &["sel", "i", "k", "anc"])?;
    let global_p0 = global
        .probability_of(&|v| v.value("sel") == 0)
        .clamp(0.0, 1.0);
    let mut rng = stream_rng(cfg.seed, 3, 1 << 31);
    let ae = amplitude_estimate(global_p0, cfg.precision.m4, cfg.ae_mode, &mut rng);
    let global_mean_hat = hadamard_test_value(ae.theta_frac, cfg.format)?;
    counters.charge("3.7", step2_total.times(ae_uses(cfg.precision.m4)));

    if global_mean_hat.raw() <= 0 {
        return Err(Error::ZeroGlobalMean(global_mean_hat.to_f64()));
    }
    let h_hat = row_mean_hat
        .iter()
        .map(|&r| divide(r, global_mean_hat))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreEstimate {
        row_p0,
        row_mean_hat,
        global_p0,
        global_mean_hat,
        h_hat,
    })
}

/// Step 4: Grover search for indices with `h_hat >= delta`.
pub fn quantum_detect(
    scores: &ScoreEstimate,
    step3_total: StepCalls,
    cfg: &PipelineConfig,
    strategy: SearchStrategy,
    seed: u64,
    counters: &mut OracleCounters,
) -> Result<SearchOutcome> {
    let delta = cfg.format.from_f64(cfg.delta)?;
    let k = scores.h_hat.len();
    let mut s = HybridState::init_with(
        RegisterLayout::with_cap(cfg.qubit_cap).add("i", k)?,
        cfg.parallelism,
    )?;
    s.hadamard_uniform("i")?;
    s.write_annotation("h", &["i"], cfg.format, &|v| Ok(scores.h_hat[v.value("i")]))?;
    let marked: Vec<bool> = (0..k)
        .map(|i| {
            let b = s.basis_of(&[("i", i)])?;
            compare_ge(s.view(b).require("h")?, delta)
        })
        .collect::<Result<_>>()?;
    let mut rng = stream_rng(seed, 4, 0);
    let out = grover_search(k, &|i| marked[i], strategy, &mut rng)?;
    counters.charge(
        "4",
        step3_total.times(out.iterations.saturating_mul(2).saturating_add(out.rounds)),
    );
    Ok(out)
}

/// Everything the quantum pipeline produces for one input.
#[derive(Clone, Debug, Serialize)]
pub struct QuantumRun {
    pub k: usize,
    pub paad: PaadEstimate,
    pub similarity: SimilarityEstimate,
    pub scores: ScoreEstimate,
    pub search: SearchOutcome,
    pub detected: Vec<usize>,
    pub counters: OracleCounters,
}

pub fn build_qram<'a>(ts: &'a TimeSeries, cfg: &PipelineConfig) -> Result<Qram<'a>> {
    let plan = WindowPlan::new(ts.len(), cfg.window, cfg.stride)?;
    let windows = subsequences(ts, &plan)?;
    if windows.len() < 2 {
        return Err(Error::TooFewSubsequences(windows.len()));
    }
    let sub = SubsectionPlan::build(&windows, cfg.subsections)?;
    Ok(Qram::new(windows, sub, cfg.format))
}

/// Steps 1 to 3 only.
pub fn run_scores(
    ts: &TimeSeries,
    cfg: &PipelineConfig,
) -> Result<(
    PaadEstimate,
    SimilarityEstimate,
    ScoreEstimate,
    OracleCounters,
)> {
    crate::classical::check_delta(cfg.delta)?;
    let qram = build_qram(ts, cfg)?;
    let mut counters = OracleCounters::default();
    let paad = prepare_paad_state(&qram, cfg, &mut counters)?;
    let step1 = counters.stage(1);
    let sim = similarity_state(&paad, step1, cfg, &mut counters)?;
    let step2 = counters.stage(2);
    let scores = score_state(&sim, step2, cfg, &mut counters)?;
    Ok((paad, sim, scores, counters))
}

pub fn run_quantum(ts: &TimeSeries, cfg: &PipelineConfig) -> Result<QuantumRun> {
    let (paad, similarity, scores, mut counters) = run_scores(ts, cfg)?;
    let step3 = counters.stage(3);
    let search = quantum_detect(&scores, step3, cfg, cfg.search, cfg.seed, &mut counters)?;
    Ok(QuantumRun {
        k: scores.h_hat.len(),
        detected: search.found.clone(),
        paad,
        similarity,
        scores,
        search,
        counters,
    })
}
