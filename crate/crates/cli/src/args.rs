use std::path::PathBuf;

use adpaad_core::analysis::BudgetAllocation;
use adpaad_core::qadpaad::AaMode;
use adpaad_core::qarith::MembershipMode;
use adpaad_core::qprimitives::{AeMode, SearchStrategy};
use clap::{Parser, ValueEnum};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Classical,
    Quantum,
    Compare,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AaArg {
    Postselect,
    Appendix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MembershipArg {
    HalfOpen,
    PaperLiteral,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AeArg {
    Deterministic,
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchArg {
    Known,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetArg {
    /// eps4 = eps.
    Standard,
    /// eps4 = E * eps / 3.
    Amended,
}

/// Sequence anomaly detection with ADPAAD, classically and on a simulated
/// quantum pipeline. Every flag can also be set through `ADPAAD_<FLAG>`.
#[derive(Clone, Debug, Parser, Serialize)]
#[command(name = "adpaad", version)]
pub struct RunConfig {
    /// CSV file with one numeric sample per row.
    #[arg(long, env = "ADPAAD_INPUT")]
    pub input: PathBuf,
    /// Header name of the column to read; the first column by default.
    #[arg(long, env = "ADPAAD_COLUMN")]
    pub column: Option<String>,
    /// Subsequence length n.
    #[arg(long, env = "ADPAAD_WINDOW")]
    pub window: usize,
    #[arg(long, env = "ADPAAD_STRIDE", default_value_t = 1)]
    pub stride: usize,
    /// Number of subsections q.
    #[arg(long, env = "ADPAAD_SUBSECTIONS", default_value_t = 4)]
    pub subsections: usize,
    /// Anomaly threshold on h.
    #[arg(
        long,
        env = "ADPAAD_DELTA",
        default_value_t = 1.0,
        allow_negative_numbers = true
    )]
    pub delta: f64,
    #[arg(long, env = "ADPAAD_MODE", value_enum, default_value_t = Mode::Classical)]
    pub mode: Mode,
    #[arg(long, env = "ADPAAD_AA_MODE", value_enum, default_value_t = AaArg::Postselect)]
    pub aa_mode: AaArg,
    /// Global iteration count in appendix mode.
    #[arg(long, env = "ADPAAD_AA_ITERATIONS")]
    pub aa_iterations: Option<u64>,
    #[arg(long, env = "ADPAAD_MEMBERSHIP", value_enum, default_value_t = MembershipArg::HalfOpen)]
    pub membership: MembershipArg,
    /// Uniform AE precision; derived from the error budget when unset.
    #[arg(long, env = "ADPAAD_PRECISION_QUBITS")]
    pub precision_qubits: Option<u32>,
    #[arg(long, env = "ADPAAD_EPSILON", default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, env = "ADPAAD_FIXED_POINT_BITS", default_value_t = 32)]
    pub fixed_point_bits: u32,
    #[arg(long, env = "ADPAAD_FRAC_BITS", default_value_t = 16)]
    pub frac_bits: u32,
    #[arg(long, env = "ADPAAD_AE_MODE", value_enum, default_value_t = AeArg::Deterministic)]
    pub ae_mode: AeArg,
    #[arg(long, env = "ADPAAD_SEED", default_value_t = 42)]
    pub seed: u64,
    /// Grover search strategy for the detection step.
    #[arg(long, env = "ADPAAD_SEARCH", value_enum, default_value_t = SearchArg::Known)]
    pub search: SearchArg,
    /// Error budget allocation used to pick precision.
    #[arg(long, env = "ADPAAD_BUDGET", value_enum, default_value_t = BudgetArg::Standard)]
    pub budget: BudgetArg,
    /// Write the JSON report here instead of stdout.
    #[arg(long, env = "ADPAAD_REPORT")]
    pub report: Option<PathBuf>,
    /// Directory for scores.csv, error_vs_m.csv and counters.csv.
    #[arg(long, env = "ADPAAD_EMIT_PLOT_DATA")]
    pub emit_plot_data: Option<PathBuf>,
}

impl RunConfig {
    /// Checks every numeric parameter against the series length.
    pub fn validate(&self, samples: usize) -> Result<(), String> {
        let n = self.window;
        let q = self.subsections;
        if n == 0 {
            return Err("--window must be at least 1".into());
        }
        if n > samples {
            return Err(format!("--window {n} exceeds the series length {samples}"));
        }
        if q == 0 || q > n {
            return Err(format!(
                "--subsections must lie in 1..=window, got q={q} n={n}"
            ));
        }
        if self.stride == 0 {
            return Err("--stride must be at least 1".into());
        }
        if !self.delta.is_finite() {
            return Err(format!("--delta must be finite, got {}", self.delta));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(format!(
                "--epsilon must lie in (0, 1), got {}",
                self.epsilon
            ));
        }
        if self.frac_bits >= self.fixed_point_bits || self.fixed_point_bits > 63 {
            return Err(format!(
                "fixed-point format needs frac-bits < fixed-point-bits <= 63, got {}/{}",
                self.fixed_point_bits, self.frac_bits
            ));
        }
        if let Some(m) = self.precision_qubits {
            let limit = if self.ae_mode == AeArg::Sampled {
                22
            } else {
                60
            };
            if m == 0 || m > limit {
                return Err(format!(
                    "--precision-qubits must lie in 1..={limit}, got {m}"
                ));
            }
        }
        if self.aa_iterations.is_some() && self.aa_mode != AaArg::Appendix {
            return Err("--aa-iterations only applies with --aa-mode appendix".into());
        }
        Ok(())
    }

    pub fn aa(&self) -> AaMode {
        match self.aa_mode {
            AaArg::Postselect => AaMode::Postselect,
            AaArg::Appendix => AaMode::Appendix {
                ell: self.aa_iterations,
            },
        }
    }

    pub fn membership(&self) -> MembershipMode {
        match self.membership {
            MembershipArg::HalfOpen => MembershipMode::HalfOpen,
            MembershipArg::PaperLiteral => MembershipMode::PaperLiteral,
        }
    }

    pub fn ae(&self) -> AeMode {
        match self.ae_mode {
            AeArg::Deterministic => AeMode::Deterministic,
            AeArg::Sampled => AeMode::Sampled,
        }
    }

    pub fn strategy(&self) -> SearchStrategy {
        match self.search {
            SearchArg::Known => SearchStrategy::KnownCount,
            SearchArg::Unknown => SearchStrategy::UnknownCount,
        }
    }

    pub fn allocation(&self) -> BudgetAllocation {
        match self.budget {
            BudgetArg::Standard => BudgetAllocation::Standard,
            BudgetArg::Amended => BudgetAllocation::Amended,
        }
    }
}
