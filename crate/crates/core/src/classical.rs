//! Classical anomaly detection: PAAD representation, Euclidean similarity,
//! anomaly scores and threshold detection. This is the reference every
//! simulated quantum result is compared against.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{map_range, Parallelism};
use crate::timeseries::{in_subsection, subsequences, SubsectionPlan, TimeSeries, WindowPlan};

/// Subsection means of every subsequence.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PaadMatrix {
    pub mu: Vec<Vec<f64>>,
    pub counts: Vec<Vec<usize>>,
    pub empty: Vec<Vec<bool>>,
}

impl PaadMatrix {
    pub fn k(&self) -> usize {
        self.mu.len()
    }

    pub fn q(&self) -> usize {
        self.mu.first().map_or(0, Vec::len)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimilarityMatrix {
    pub s: Vec<Vec<f64>>,
    /// `s / (2 C sqrt(q))`.
    pub s_bar: Vec<Vec<f64>>,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreVector {
    pub h: Vec<f64>,
    pub delta: f64,
    /// 0-based indices with `h >= delta`.
    pub anomalies: Vec<usize>,
}

impl ScoreVector {
    pub fn count(&self) -> usize {
        self.anomalies.len()
    }
}

/// Elementary operation counts of the classical algorithm.
#[derive(Debug, Default, Serialize)]
pub struct ClassicalOps {
    /// Subsection membership tests while building PAAD rows.
    pub membership_tests: AtomicU64,
    /// Per-subsection squared-difference terms in the similarity matrix.
    pub similarity_terms: AtomicU64,
    /// Additions while accumulating anomaly scores.
    pub score_terms: AtomicU64,
}

impl ClassicalOps {
    pub fn snapshot(&self) -> ClassicalOpCounts {
        ClassicalOpCounts {
            membership_tests: self.membership_tests.load(Ordering::Relaxed),
            similarity_terms: self.similarity_terms.load(Ordering::Relaxed),
            score_terms: self.score_terms.load(Ordering::Relaxed),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ClassicalOpCounts {
    pub membership_tests: u64,
    pub similarity_terms: u64,
    pub score_terms: u64,
}

impl ClassicalOpCounts {
    pub fn total(&self) -> u64 {
        self.membership_tests + self.similarity_terms + self.score_terms
    }
}

/// Means and counts of one subsequence per subsection. Empty subsections
/// get mean 0.
pub fn paad_row(
    window: &[f64],
    bounds: &[f64],
    ops: Option<&ClassicalOps>,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let q = bounds.len() - 1;
    let (lo, hi) = (bounds[0], bounds[q]);
    if let Some(&x) = window.iter().find(|&&x| !(lo <= x && x <= hi)) {
        return Err(Error::OutOfDomain { x, lo, hi });
    }
    let mut mu = vec![0.0; q];
    let mut counts = vec![0; q];
    for t in 1..=q {
        let mut sum = 0.0;
        for &x in window {
            if in_subsection(x, bounds, t) {
                sum += x;
                counts[t - 1] += 1;
            }
        }
        if counts[t - 1] > 0 {
            mu[t - 1] = sum / counts[t - 1] as f64;
        }
    }
    if let Some(ops) = ops {
        ops.membership_tests
            .fetch_add((q * window.len()) as u64, Ordering::Relaxed);
    }
    Ok((mu, counts))
}

pub fn paad(
    windows: &[&[f64]],
    plan: &SubsectionPlan,
    par: Parallelism,
    ops: Option<&ClassicalOps>,
) -> Result<PaadMatrix> {
    let rows = map_range(windows.len(), par, |i| {
        paad_row(windows[i], &plan.bounds[i], ops)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (mu, counts): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let empty = counts
        .iter()
        .map(|row: &Vec<usize>| row.iter().map(|&c| c == 0).collect())
        .collect();
    Ok(PaadMatrix { mu, counts, empty })
}

/// Euclidean distance between two PAAD rows.
pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    Ok(acc.sqrt())
}

pub fn similarity_matrix(
    paad: &PaadMatrix,
    c: f64,
    par: Parallelism,
    ops: Option<&ClassicalOps>,
) -> Result<SimilarityMatrix> {
    if c <= 0.0 {
        return Err(Error::ZeroScale);
    }
    let k = paad.k();
    let q = paad.q();
    let s = map_range(k, par, |i| {
        (0..k)
            .map(|j| similarity(&paad.mu[i], &paad.mu[j]))
            .collect::<Result<Vec<_>>>()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    if let Some(ops) = ops {
        ops.similarity_terms
            .fetch_add((k * k * q) as u64, Ordering::Relaxed);
    }
    let norm = 2.0 * c * (q as f64).sqrt();
    let s_bar = s
        .iter()
        .map(|row| row.iter().map(|v| v / norm).collect())
        .collect();
    Ok(SimilarityMatrix { s, s_bar, c })
}

/// Row mean of `s` divided by the global mean.
pub fn anomaly_scores(s: &[Vec<f64>], ops: Option<&ClassicalOps>) -> Result<Vec<f64>> {
    let k = s.len();
    if k < 2 {
        return Err(Error::TooFewSubsequences(k));
    }
    let mut total = 0.0;
    for row in s {
        for &v in row {
            total += v;
        }
    }
    if total <= 0.0 {
        return Err(Error::DegenerateScores);
    }
    if let Some(ops) = ops {
        ops.score_terms.fetch_add((k * k) as u64, Ordering::Relaxed);
    }
    let kf = k as f64;
    let global = total / (kf * kf);
    Ok(s.iter()
        .map(|row| {
            let mut r = 0.0;
            for &v in row {
                r += v;
            }
            (r / kf) / global
        })
        .collect())
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "threshold must be finite, got {delta}"
        )))
    }
}

/// 0-based indices whose score reaches `delta`.
pub fn detect(h: &[f64], delta: f64) -> Vec<usize> {
    (0..h.len()).filter(|&i| h[i] >= delta).collect()
}

/// Largest absolute sample value over all windows.
pub fn normalizer(windows: &[&[f64]]) -> f64 {
    windows
        .iter()
        .flat_map(|w| w.iter())
        .fold(0.0, |m: f64, x| m.max(x.abs()))
}

/// Everything the classical pipeline produces for one input.
#[derive(Clone, Debug, Serialize)]
pub struct ClassicalRun {
    pub window: WindowPlan,
    pub subsections: SubsectionPlan,
    pub paad: PaadMatrix,
    pub similarity: SimilarityMatrix,
    pub scores: ScoreVector,
    pub ops: ClassicalOpCounts,
}

pub fn run_classical(
    ts: &TimeSeries,
    n: usize,
    step: usize,
    q: usize,
    delta: f64,
    par: Parallelism,
) -> Result<ClassicalRun> {
    check_delta(delta)?;
    let window = WindowPlan::new(ts.len(), n, step)?;
    let windows = subsequences(ts, &window)?;
    let subsections = SubsectionPlan::build(&windows, q)?;
    let ops = ClassicalOps::default();
    let paad = paad(&windows, &subsections, par, Some(&ops))?;
    let similarity = similarity_matrix(&paad, normalizer(&windows), par, Some(&ops))?;
    let h = anomaly_scores(&similarity.s, Some(&ops))?;
    let anomalies = detect(&h, delta);
    Ok(ClassicalRun {
        window,
        subsections,
        paad,
        similarity,
        scores: ScoreVector {
            h,
            delta,
            anomalies,
        },
        ops: ops.snapshot(),
    })
}
