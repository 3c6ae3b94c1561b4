//! The JSON anomaly report shared by all run modes.

use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{
    AppendixReport, BoundCheck, CompareOutcome, EInfo, ErrorBudget, StageErrors,
};
use crate::classical::{ClassicalOpCounts, ClassicalRun};
use crate::error::{Error, Result};
use crate::qadpaad::{OracleCounters, PrecisionPlan, QuantumRun};
use crate::qprimitives::SearchOutcome;
use crate::timeseries::TimeSeries;

/// SHA-256 of the samples as little-endian `f64` bytes, hex encoded.
pub fn series_digest(ts: &TimeSeries) -> String {
    let mut h = Sha256::new();
    for x in ts.as_slice() {
        h.update(x.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InputInfo {
    pub path: String,
    /// Digest of the samples as read, before any shift.
    pub digest: String,
    pub samples: usize,
    pub shift: f64,
}

impl InputInfo {
    pub fn new(path: &str, raw: &TimeSeries, shift: f64) -> Self {
        Self {
            path: path.to_string(),
            digest: series_digest(raw),
            samples: raw.len(),
            shift,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreRow {
    /// 1-based subsequence index.
    pub index: usize,
    pub h_classical: Option<f64>,
    pub h_quantum: Option<f64>,
    pub abs_delta: Option<f64>,
}

/// Detected subsequences, 1-based.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DetectedSets {
    pub classical: Option<Vec<usize>>,
    pub quantum: Option<Vec<usize>>,
    pub equal: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timing {
    pub started_at_unix_ms: u128,
    pub wall_time_ms: u128,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnomalyReport {
    pub input: InputInfo,
    pub config: serde_json::Value,
    pub subsequences: Vec<ScoreRow>,
    pub detected: DetectedSets,
    pub e: Option<EInfo>,
    pub budget: Option<ErrorBudget>,
    pub precision: Option<PrecisionPlan>,
    pub stage_errors: Option<StageErrors>,
    pub counters: Option<OracleCounters>,
    pub search: Option<SearchOutcome>,
    pub classical_ops: Option<ClassicalOpCounts>,
    pub checks: Vec<BoundCheck>,
    pub threshold_margin: Option<f64>,
    pub appendix: Option<AppendixReport>,
    pub errors: Vec<String>,
    /// Left out of reproducibility comparisons.
    pub timing: Option<Timing>,
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|i| i + 1).collect()
}

fn rows(h: Option<&[f64]>, h_hat: Option<&[f64]>) -> Vec<ScoreRow> {
    let k = h.or(h_hat).map_or(0, <[f64]>::len);
    (0..k)
        .map(|i| {
            let c = h.map(|v| v[i]);
            let q = h_hat.map(|v| v[i]);
            ScoreRow {
                index: i + 1,
                h_classical: c,
                h_quantum: q,
                abs_delta: c.zip(q).map(|(a, b)| (a - b).abs()),
            }
        })
        .collect()
}

impl AnomalyReport {
    pub fn new(input: InputInfo, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            input,
            config: serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?,
            subsequences: Vec::new(),
            detected: DetectedSets::default(),
            e: None,
            budget: None,
            precision: None,
            stage_errors: None,
            counters: None,
            search: None,
            classical_ops: None,
            checks: Vec::new(),
            threshold_margin: None,
            appendix: None,
            errors: Vec::new(),
            timing: None,
        })
    }

    pub fn with_classical(mut self, run: &ClassicalRun) -> Self {
        self.subsequences = rows(Some(&run.scores.h), None);
        self.detected.classical = Some(one_based(&run.scores.anomalies));
        self.classical_ops = Some(run.ops);
        self
    }

    pub fn with_quantum(mut self, run: &QuantumRun) -> Self {
        let h_hat = run.scores.h_f64();
        let h = self
            .subsequences
            .iter()
            .map(|r| r.h_classical)
            .collect::<Option<Vec<f64>>>()
            .filter(|v| !v.is_empty());
        self.subsequences = rows(h.as_deref(), Some(&h_hat));
        self.detected.quantum = Some(one_based(&run.detected));
        self.counters = Some(run.counters.clone());
        self.search = Some(run.search.clone());
        self
    }

    pub fn with_compare(mut self, out: &CompareOutcome) -> Self {
        self = self.with_classical(&out.classical);
        match &out.quantum {
            Ok(q) => self = self.with_quantum(q),
            Err(e) => self.errors.push(e.clone()),
        }
        self.detected.equal = out.sets_equal;
        self.e = Some(out.e.clone());
        self.budget = out.budget;
        self.precision = Some(out.precision);
        self.stage_errors = Some(out.stage_errors);
        self.checks = out.checks.clone();
        self.threshold_margin = Some(out.threshold_margin);
        self.appendix = out.appendix.clone();
        self
    }

    pub fn with_budget(
        mut self,
        e: EInfo,
        budget: Option<ErrorBudget>,
        precision: PrecisionPlan,
    ) -> Self {
        self.e = Some(e);
        self.budget = budget;
        self.precision = Some(precision);
        self
    }

    pub fn with_error(mut self, message: String) -> Self {
        self.errors.push(message);
        self
    }

    pub fn finish(mut self, started: SystemTime, elapsed: Duration) -> Self {
        self.timing = Some(Timing {
            started_at_unix_ms: started
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis()),
            wall_time_ms: elapsed.as_millis(),
        });
        self
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}
