//! Error budget, bound checks and call-count scaling.

use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;

use crate::classical::{run_classical, ClassicalRun, PaadMatrix};
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::qadpaad::{
    build_qram, prepare_paad_state, run_quantum, similarity_state, AaMode, OracleCounters,
    PipelineConfig, PrecisionPlan, QuantumRun,
};
use crate::qarith::FixedPointFormat;
use crate::qprimitives::AeMode;
use crate::timeseries::TimeSeries;

/// Smallest `m >= 1` with `pi / 2^m <= eps`.
pub fn m_required(eps: f64) -> Result<u32> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Config(format!(
            "stage error must be positive, got {eps}"
        )));
    }
    let mut m = 1;
    while PI / (1u64 << m) as f64 > eps {
        m += 1;
        if m > 60 {
            return Err(Error::Config(format!(
                "stage error {eps} needs more than 60 qubits"
            )));
        }
    }
    Ok(m)
}

/// AE error guaranteed by `m` precision qubits.
pub fn ae_error(m: u32) -> f64 {
    PI / (1u64 << m) as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetAllocation {
    /// `eps1 = E^2 eps/6`, `eps2 = eps3 = E eps/3`, `eps4 = eps`.
    #[default]
    Standard,
    /// As `Standard` but `eps4 = E eps/3`, so the global-mean estimate is as
    /// precise as the row means.
    Amended,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorBudget {
    pub allocation: BudgetAllocation,
    pub epsilon: f64,
    pub e: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps4: f64,
    pub precision: PrecisionPlan,
}

impl ErrorBudget {
    pub fn new(epsilon: f64, e: f64, allocation: BudgetAllocation) -> Result<Self> {
        if e.is_nan() || e <= 0.0 {
            return Err(Error::Config(format!(
                "the data constant E is {e}; the error budget is undefined"
            )));
        }
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        let eps1 = e * e * epsilon / 6.0;
        let eps2 = e * epsilon / 3.0;
        let eps3 = e * epsilon / 3.0;
        let eps4 = match allocation {
            BudgetAllocation::Standard => epsilon,
            BudgetAllocation::Amended => e * epsilon / 3.0,
        };
        Ok(Self {
            allocation,
            epsilon,
            e,
            eps1,
            eps2,
            eps3,
            eps4,
            precision: PrecisionPlan {
                m1: m_required(eps1)?,
                m2: m_required(eps2)?,
                m3: m_required(eps3)?,
                m4: m_required(eps4)?,
            },
        })
    }

    /// `(eps3 + eps2)/E + 2 eps1/E^2`, the score bound of the chain.
    pub fn score_bound(&self) -> f64 {
        (self.eps3 + self.eps2) / self.e + 2.0 * self.eps1 / (self.e * self.e)
    }
}

/// The data constant and the assumption it rests on.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EInfo {
    pub e: f64,
    /// Number of nonzero normalized differences the median is taken over.
    pub values: usize,
    /// Fraction of all normalized differences (including zeros) that reach E.
    pub fraction_at_least_e: f64,
    /// Every pair `i != k` has at least half of its `q` differences `>= E`.
    pub assumption_holds: bool,
    pub violating_pairs: usize,
}

/// Median of the nonzero `|mu_i^t - mu_k^t| / (2C)` over `i < k` and `t`;
/// 0 when all are zero.
pub fn estimate_e(paad: &PaadMatrix, c: f64) -> EInfo {
    let (k, q) = (paad.k(), paad.q());
    let mut all = Vec::new();
    for i in 0..k {
        for kk in i + 1..k {
            for t in 0..q {
                all.push((paad.mu[i][t] - paad.mu[kk][t]).abs() / (2.0 * c));
            }
        }
    }
    let mut nz: Vec<f64> = all.iter().copied().filter(|&v| v > 0.0).collect();
    nz.sort_by(f64::total_cmp);
    let e = match nz.len() {
        0 => 0.0,
        l if l % 2 == 1 => nz[l / 2],
        l => 0.5 * (nz[l / 2 - 1] + nz[l / 2]),
    };
    let reach = all.iter().filter(|&&v| v >= e && v > 0.0).count();
    let mut violating = 0;
    for i in 0..k {
        for kk in i + 1..k {
            let hits = (0..q)
                .filter(|&t| {
                    let v = (paad.mu[i][t] - paad.mu[kk][t]).abs() / (2.0 * c);
                    e > 0.0 && v >= e
                })
                .count();
            if 2 * hits < q {
                violating += 1;
            }
        }
    }
    EInfo {
        e,
        values: nz.len(),
        fraction_at_least_e: if all.is_empty() {
            0.0
        } else {
            reach as f64 / all.len() as f64
        },
        assumption_holds: violating == 0 && e > 0.0,
        violating_pairs: violating,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub max_error: f64,
    pub bound: f64,
    pub ratio: f64,
    pub pass: bool,
    /// Whether a failure is a hard error (deterministic estimation) or only
    /// reported.
    pub enforced: bool,
}

impl BoundCheck {
    fn new(name: &str, max_error: f64, bound: f64, enforced: bool) -> Self {
        Self {
            name: name.to_string(),
            max_error,
            bound,
            ratio: if bound > 0.0 {
                max_error / bound
            } else {
                f64::INFINITY
            },
            pass: max_error <= bound,
            enforced,
        }
    }
}

fn max_abs_diff<'a>(a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> f64 {
    a.zip(b).fold(0.0, |m: f64, (x, y)| m.max((x - y).abs()))
}

/// `max |mu_hat - mu| <= C eps1`.
pub fn check_mu_bound(
    mu: &[Vec<f64>],
    mu_hat: &[Vec<f64>],
    c: f64,
    eps1: f64,
    enforced: bool,
) -> BoundCheck {
    let err = max_abs_diff(mu.iter().flatten(), mu_hat.iter().flatten());
    BoundCheck::new("mu", err, c * eps1, enforced)
}

/// `max |S_bar_hat - S_bar| <= eps2 + 2 eps1 / E`.
pub fn check_similarity_bound(
    s_bar: &[Vec<f64>],
    s_bar_hat: &[Vec<f64>],
    eps1: f64,
    eps2: f64,
    e: f64,
    enforced: bool,
) -> BoundCheck {
    let err = max_abs_diff(s_bar.iter().flatten(), s_bar_hat.iter().flatten());
    BoundCheck::new("similarity", err, eps2 + 2.0 * eps1 / e, enforced)
}

/// `max |h_hat - h| <= eps`.
pub fn check_score_bound(h: &[f64], h_hat: &[f64], epsilon: f64, enforced: bool) -> BoundCheck {
    BoundCheck::new(
        "score",
        max_abs_diff(h.iter(), h_hat.iter()),
        epsilon,
        enforced,
    )
}

/// Stage errors a run is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StageErrors {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps4: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareSettings {
    pub pipeline: PipelineConfig,
    pub epsilon: f64,
    pub allocation: BudgetAllocation,
    /// Uniform precision overriding the budget.
    pub precision: Option<u32>,
}

impl CompareSettings {
    pub fn new(pipeline: PipelineConfig, epsilon: f64) -> Self {
        Self {
            pipeline,
            epsilon,
            allocation: BudgetAllocation::Standard,
            precision: None,
        }
    }
}

/// Appendix-mode amplification compared with certain amplification.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AppendixReport {
    pub ell: u64,
    pub uniform_counts: bool,
    pub p_min: f64,
    pub p_max: f64,
    /// `max_i |h_hat(appendix) - h_hat(postselect)|`, when both runs succeed.
    pub max_abs_deviation: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareOutcome {
    pub classical: ClassicalRun,
    pub e: EInfo,
    pub budget: Option<ErrorBudget>,
    pub precision: PrecisionPlan,
    /// Fixed-point format the quantum run used.
    pub format: FixedPointFormat,
    pub stage_errors: StageErrors,
    pub quantum: std::result::Result<QuantumRun, String>,
    pub checks: Vec<BoundCheck>,
    pub sets_equal: Option<bool>,
    /// `min_i |h_i - delta|`.
    pub threshold_margin: f64,
    pub appendix: Option<AppendixReport>,
}

impl CompareOutcome {
    pub fn enforced_failures(&self) -> Vec<&BoundCheck> {
        self.checks
            .iter()
            .filter(|c| c.enforced && !c.pass)
            .collect()
    }

    pub fn quantum_h(&self) -> Option<Vec<f64>> {
        self.quantum.as_ref().ok().map(|q| q.scores.h_f64())
    }
}

/// Precision plan of a compare run and the stage errors it is checked
/// against.
pub fn plan_precision(
    settings: &CompareSettings,
    e: &EInfo,
) -> Result<(Option<ErrorBudget>, PrecisionPlan, StageErrors)> {
    let budget = ErrorBudget::new(settings.epsilon, e.e, settings.allocation).ok();
    match (settings.precision, budget) {
        (Some(m), budget) => {
            let eps = ae_error(m);
            Ok((
                budget,
                PrecisionPlan::uniform(m),
                StageErrors {
                    eps1: eps,
                    eps2: eps,
                    eps3: eps,
                    eps4: eps,
                },
            ))
        }
        (None, Some(b)) => Ok((
            Some(b),
            b.precision,
            StageErrors {
                eps1: b.eps1,
                eps2: b.eps2,
                eps3: b.eps3,
                eps4: b.eps4,
            },
        )),
        (None, None) => Err(Error::Config(format!(
            "cannot derive precision from the error budget (E = {}); set the precision explicitly",
            e.e
        ))),
    }
}

/// Widens the fraction of `format` so that rounding one value costs at most
/// an eighth of `tol`. Integer bits are kept.
pub fn format_for_tolerance(format: FixedPointFormat, tol: f64) -> Result<FixedPointFormat> {
    let needed = (8.0 / tol).log2().ceil().max(0.0) as u32;
    if needed <= format.frac_bits {
        return Ok(format);
    }
    FixedPointFormat::new(
        format.total_bits - format.frac_bits + needed,
        needed,
        format.signed,
    )
}

/// Runs the classical and quantum pipelines on the same input and checks
/// the per-stage error bounds.
pub fn compare(ts: &TimeSeries, settings: &CompareSettings) -> Result<CompareOutcome> {
    let p = &settings.pipeline;
    let classical = run_classical(
        ts,
        p.window,
        p.stride,
        p.subsections,
        p.delta,
        p.parallelism,
    )?;
    let e = estimate_e(&classical.paad, classical.similarity.c);
    let (budget, precision, stage) = plan_precision(settings, &e)?;
    let mut cfg = p.clone();
    cfg.precision = precision;
    let c = classical.similarity.c;
    let tol = (c * stage.eps1)
        .min(stage.eps2)
        .min(stage.eps3)
        .min(stage.eps4);
    cfg.format = format_for_tolerance(cfg.format, tol)?;
    let quantum = run_quantum(ts, &cfg).map_err(|err| err.to_string());

    let enforced =
        cfg.ae_mode == AeMode::Deterministic && matches!(cfg.aa_mode, AaMode::Postselect);
    let mut checks = Vec::new();
    let threshold_margin = classical
        .scores
        .h
        .iter()
        .fold(f64::INFINITY, |m, h| m.min((h - p.delta).abs()));
    let mut sets_equal = None;
    match &quantum {
        Ok(q) => {
            checks.push(check_mu_bound(
                &classical.paad.mu,
                &q.paad.mu_f64(),
                c,
                stage.eps1,
                enforced,
            ));
            if e.e > 0.0 {
                checks.push(check_similarity_bound(
                    &classical.similarity.s_bar,
                    &q.similarity.s_bar_f64(),
                    stage.eps1,
                    stage.eps2,
                    e.e,
                    enforced && e.assumption_holds,
                ));
            }
            checks.push(check_score_bound(
                &classical.scores.h,
                &q.scores.h_f64(),
                settings.epsilon,
                enforced && e.assumption_holds,
            ));
            let equal = q.detected == classical.scores.anomalies;
            sets_equal = Some(equal);
            checks.push(BoundCheck {
                name: "detection".into(),
                max_error: if equal { 0.0 } else { 1.0 },
                bound: 0.0,
                ratio: if equal { 0.0 } else { f64::INFINITY },
                pass: equal,
                enforced: enforced
                    && e.assumption_holds
                    && threshold_margin > 2.0 * settings.epsilon,
            });
        }
        Err(_) => {
            checks.push(BoundCheck {
                name: "quantum_run".into(),
                max_error: f64::INFINITY,
                bound: 0.0,
                ratio: f64::INFINITY,
                pass: false,
                enforced: enforced && e.assumption_holds,
            });
        }
    }

    let appendix = match cfg.aa_mode {
        AaMode::Appendix { .. } => Some(appendix_report(
            ts,
            &cfg,
            &classical,
            quantum.as_ref().ok(),
        )?),
        AaMode::Postselect => None,
    };
    Ok(CompareOutcome {
        classical,
        e,
        budget,
        precision,
        format: cfg.format,
        stage_errors: stage,
        quantum,
        checks,
        sets_equal,
        threshold_margin,
        appendix,
    })
}

fn appendix_report(
    ts: &TimeSeries,
    cfg: &PipelineConfig,
    classical: &ClassicalRun,
    run: Option<&QuantumRun>,
) -> Result<AppendixReport> {
    let counts = &classical.paad.counts;
    let first = counts[0][0];
    let uniform_counts = counts.iter().flatten().all(|&c| c == first);
    let (ell, p_min, p_max) = match run {
        Some(r) => {
            let ps = r.paad.p_success.iter().flatten();
            let (lo, hi) = ps.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            });
            (r.paad.aa_iterations, lo, hi)
        }
        None => (0, f64::NAN, f64::NAN),
    };
    let mut post = cfg.clone();
    post.aa_mode = AaMode::Postselect;
    let max_abs_deviation = match (run, run_quantum(ts, &post)) {
        (Some(a), Ok(b)) => Some(max_abs_diff(
            a.scores.h_f64().iter(),
            b.scores.h_f64().iter(),
        )),
        _ => None,
    };
    Ok(AppendixReport {
        ell,
        uniform_counts,
        p_min,
        p_max,
        max_abs_deviation,
    })
}

/// A series whose every length-`n` window is a permutation of `0..n`, so
/// with `q | n` every subsection holds exactly `n / q` samples.
pub fn balanced_series(n: usize, k: usize) -> TimeSeries {
    TimeSeries::new((0..n + k - 1).map(|j| (j % n) as f64).collect())
        .expect("non-empty finite series")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub x: f64,
    pub y: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[ScalingPoint]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.x.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `O_X` calls of the amplification stage of step 1 (initial load plus the
/// amplification iterations).
pub fn aa_oracle_calls(counters: &OracleCounters) -> u64 {
    counters.get("1.3").ox + counters.get("1.5").ox
}

/// Amplification-stage `O_X` calls of step 1 on balanced instances.
pub fn aa_calls_vs_n(ns: &[usize], k: usize, q: usize, m: u32) -> Result<Vec<ScalingPoint>> {
    ns.iter()
        .map(|&n| {
            let ts = balanced_series(n, k);
            let cfg = PipelineConfig::new(n, q, 1.0, PrecisionPlan::uniform(m));
            let qram = build_qram(&ts, &cfg)?;
            let mut counters = OracleCounters::default();
            prepare_paad_state(&qram, &cfg, &mut counters)?;
            Ok(ScalingPoint {
                x: n as f64,
                y: aa_oracle_calls(&counters) as f64,
            })
        })
        .collect()
}

/// Classical similarity-term counts for `K` subsequences of length `n`.
pub fn classical_similarity_vs_k(ks: &[usize], n: usize, q: usize) -> Result<Vec<ScalingPoint>> {
    ks.iter()
        .map(|&k| {
            let ts = TimeSeries::new((0..n + k - 1).map(|j| ((j * 7) % 11) as f64).collect())?;
            let run = run_classical(&ts, n, 1, q, 1.0, Parallelism::Sequential)?;
            Ok(ScalingPoint {
                x: k as f64,
                y: run.ops.similarity_terms as f64,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRatio {
    pub m2: u32,
    pub eps2: f64,
    pub step1: u64,
    pub step2: u64,
    pub ratio: f64,
    /// `ratio * eps2`, constant when step 2 scales as `1/eps2`.
    pub scaled: f64,
}

/// Step-2 over step-1 oracle calls as the step-2 precision varies.
pub fn step_ratio_vs_m2(
    ts: &TimeSeries,
    cfg: &PipelineConfig,
    m2s: &[u32],
) -> Result<Vec<StepRatio>> {
    let qram = build_qram(ts, cfg)?;
    m2s.iter()
        .map(|&m2| {
            let mut c = cfg.clone();
            c.precision.m2 = m2;
            let mut counters = OracleCounters::default();
            let paad = prepare_paad_state(&qram, &c, &mut counters)?;
            let step1 = counters.stage(1);
            similarity_state(&paad, step1, &c, &mut counters)?;
            let step2 = counters.stage(2);
            let ratio = step2.total() as f64 / step1.total() as f64;
            Ok(StepRatio {
                m2,
                eps2: ae_error(m2),
                step1: step1.total(),
                step2: step2.total(),
                ratio,
                scaled: ratio * ae_error(m2),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub aa_vs_n: Vec<ScalingPoint>,
    pub aa_slope: f64,
    pub classical_vs_k: Vec<ScalingPoint>,
    pub classical_slope: f64,
    pub step_ratios: Vec<StepRatio>,
}

pub fn complexity_report() -> Result<ComplexityReport> {
    let aa_vs_n = aa_calls_vs_n(&[4, 8, 16, 32], 4, 4, 6)?;
    let classical_vs_k = classical_similarity_vs_k(&[4, 8, 16], 8, 4)?;
    let ts = balanced_series(8, 4);
    let cfg = PipelineConfig::new(8, 4, 1.0, PrecisionPlan::uniform(6));
    let step_ratios = step_ratio_vs_m2(&ts, &cfg, &[4, 6, 8, 10])?;
    Ok(ComplexityReport {
        aa_slope: loglog_slope(&aa_vs_n),
        aa_vs_n,
        classical_slope: loglog_slope(&classical_vs_k),
        classical_vs_k,
        step_ratios,
    })
}

/// Maximum stage errors of a compare run at uniform precision `m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorAtM {
    pub m: u32,
    pub mu: f64,
    pub similarity: f64,
    pub score: Option<f64>,
}

pub fn error_vs_m(
    ts: &TimeSeries,
    settings: &CompareSettings,
    ms: &[u32],
) -> Result<Vec<ErrorAtM>> {
    ms.iter()
        .map(|&m| {
            let mut s = settings.clone();
            s.precision = Some(m);
            let out = compare(ts, &s)?;
            let get = |name: &str| {
                out.checks
                    .iter()
                    .find(|c| c.name == name)
                    .map(|c| c.max_error)
            };
            Ok(ErrorAtM {
                m,
                mu: get("mu").unwrap_or(f64::NAN),
                similarity: get("similarity").unwrap_or(f64::NAN),
                score: get("score"),
            })
        })
        .collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::Csv {
        row: 0,
        message: e.to_string(),
    }
}

pub fn write_scores_csv<W: Write>(out: W, h: &[f64], h_hat: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "h_classical", "h_quantum"])
        .map_err(csv_error)?;
    for (i, v) in h.iter().enumerate() {
        let q = h_hat.map(|hq| hq[i].to_string()).unwrap_or_default();
        w.write_record([(i + 1).to_string(), v.to_string(), q])
            .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "scores.csv".into(),
        source: e,
    })
}

pub fn write_error_csv<W: Write>(out: W, rows: &[ErrorAtM]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "m",
        "ae_bound",
        "mu_error",
        "similarity_error",
        "score_error",
    ])
    .map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.m.to_string(),
            ae_error(r.m).to_string(),
            r.mu.to_string(),
            r.similarity.to_string(),
            r.score.map(|s| s.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "error_vs_m.csv".into(),
        source: e,
    })
}

/// One table for all counter data: the run's per-step calls and the
/// scaling sweeps.
pub fn write_counters_csv<W: Write>(
    out: W,
    run: Option<&OracleCounters>,
    report: &ComplexityReport,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["table", "parameter", "value", "ox", "os"])
        .map_err(csv_error)?;
    if let Some(c) = run {
        for (step, calls) in &c.steps {
            w.write_record([
                "run",
                "step",
                step,
                &calls.ox.to_string(),
                &calls.os.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    for p in &report.aa_vs_n {
        w.write_record(["aa_vs_n", "n", &p.x.to_string(), &p.y.to_string(), ""])
            .map_err(csv_error)?;
    }
    for p in &report.classical_vs_k {
        w.write_record([
            "classical_similarity_vs_k",
            "k",
            &p.x.to_string(),
            &p.y.to_string(),
            "",
        ])
        .map_err(csv_error)?;
    }
    for r in &report.step_ratios {
        w.write_record([
            "step2_over_step1_vs_m2",
            "m2",
            &r.m2.to_string(),
            &r.ratio.to_string(),
            "",
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "counters.csv".into(),
        source: e,
    })
}
