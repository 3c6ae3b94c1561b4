mod args;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Instant, SystemTime};

use adpaad_core::analysis::{
    compare, complexity_report, error_vs_m, estimate_e, format_for_tolerance, plan_precision,
    write_counters_csv, write_error_csv, write_scores_csv, CompareSettings,
};
use adpaad_core::classical::run_classical;
use adpaad_core::qadpaad::{run_quantum, OracleCounters, PipelineConfig, PrecisionPlan};
use adpaad_core::qarith::FixedPointFormat;
use adpaad_core::report::{AnomalyReport, InputInfo};
use adpaad_core::timeseries::{load_series, TimeSeries};
use adpaad_core::Parallelism;
use args::{Mode, RunConfig};
use clap::Parser;
use serde::Serialize;

/// Precision values swept for `error_vs_m.csv`.
const SWEEP_M: [u32; 5] = [4, 6, 8, 10, 12];

/// Shifts the series up by `-min` when it has negative samples.
fn preprocess(ts: &TimeSeries) -> (TimeSeries, f64) {
    let min = ts.min();
    if min < 0.0 {
        (ts.shifted(-min), -min)
    } else {
        (ts.clone(), 0.0)
    }
}

#[derive(Serialize)]
struct EffectiveConfig<'a> {
    cli: &'a RunConfig,
    pipeline: &'a PipelineConfig,
    epsilon: f64,
    allocation: adpaad_core::analysis::BudgetAllocation,
    sweep_m: &'a [u32],
}

struct Outcome {
    report: AnomalyReport,
    h: Option<Vec<f64>>,
    h_hat: Option<Vec<f64>>,
    counters: Option<OracleCounters>,
    settings: CompareSettings,
    failed: bool,
}

fn pipeline(cfg: &RunConfig) -> adpaad_core::Result<PipelineConfig> {
    let mut p = PipelineConfig::new(
        cfg.window,
        cfg.subsections,
        cfg.delta,
        PrecisionPlan::uniform(1),
    );
    p.stride = cfg.stride;
    p.aa_mode = cfg.aa();
    p.membership = cfg.membership();
    p.format = FixedPointFormat::new(cfg.fixed_point_bits, cfg.frac_bits, true)?;
    p.ae_mode = cfg.ae();
    p.search = cfg.strategy();
    p.seed = cfg.seed;
    p.parallelism = Parallelism::default();
    Ok(p)
}

fn execute(
    cfg: &RunConfig,
    raw: &TimeSeries,
    ts: &TimeSeries,
    shift: f64,
) -> adpaad_core::Result<Outcome> {
    let input = InputInfo::new(&cfg.input.display().to_string(), raw, shift);
    let mut settings = CompareSettings::new(pipeline(cfg)?, cfg.epsilon);
    settings.allocation = cfg.allocation();
    settings.precision = cfg.precision_qubits;
    let p = settings.pipeline.clone();

    match cfg.mode {
        Mode::Classical => {
            let run = run_classical(
                ts,
                p.window,
                p.stride,
                p.subsections,
                p.delta,
                p.parallelism,
            )?;
            let report =
                AnomalyReport::new(input, &effective(cfg, &settings))?.with_classical(&run);
            Ok(Outcome {
                report,
                h: Some(run.scores.h),
                h_hat: None,
                counters: None,
                settings,
                failed: false,
            })
        }
        Mode::Quantum => {
            // E is a property of the data; the classical PAAD supplies it for
            // the precision plan only.
            let reference = run_classical(
                ts,
                p.window,
                p.stride,
                p.subsections,
                p.delta,
                p.parallelism,
            )?;
            let e = estimate_e(&reference.paad, reference.similarity.c);
            let (budget, precision, stage) = plan_precision(&settings, &e)?;
            let tol = (reference.similarity.c * stage.eps1)
                .min(stage.eps2)
                .min(stage.eps3)
                .min(stage.eps4);
            settings.pipeline.precision = precision;
            settings.pipeline.format = format_for_tolerance(p.format, tol)?;
            let report = AnomalyReport::new(input, &effective(cfg, &settings))?
                .with_budget(e, budget, precision);
            match run_quantum(ts, &settings.pipeline) {
                Ok(run) => Ok(Outcome {
                    report: report.with_quantum(&run),
                    h: None,
                    h_hat: Some(run.scores.h_f64()),
                    counters: Some(run.counters),
                    settings,
                    failed: false,
                }),
                Err(err) => Ok(Outcome {
                    report: report.with_error(err.to_string()),
                    h: None,
                    h_hat: None,
                    counters: None,
                    settings,
                    failed: true,
                }),
            }
        }
        Mode::Compare => {
            let out = compare(ts, &settings)?;
            let mut effective_settings = settings.clone();
            effective_settings.pipeline.precision = out.precision;
            effective_settings.pipeline.format = out.format;
            let failed = out.quantum.is_err() || !out.enforced_failures().is_empty();
            let report =
                AnomalyReport::new(input, &effective(cfg, &effective_settings))?.with_compare(&out);
            Ok(Outcome {
                report,
                h: Some(out.classical.scores.h.clone()),
                h_hat: out.quantum_h(),
                counters: out.quantum.as_ref().ok().map(|q| q.counters.clone()),
                settings,
                failed,
            })
        }
    }
}

fn effective<'a>(cfg: &'a RunConfig, settings: &'a CompareSettings) -> EffectiveConfig<'a> {
    EffectiveConfig {
        cli: cfg,
        pipeline: &settings.pipeline,
        epsilon: settings.epsilon,
        allocation: settings.allocation,
        sweep_m: &SWEEP_M,
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, String> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn emit_plot_data(
    dir: &Path,
    cfg: &RunConfig,
    ts: &TimeSeries,
    out: &Outcome,
) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let h = out.h.as_ref().or(out.h_hat.as_ref());
    if let Some(h) = h {
        let h_hat = out.h.as_ref().and(out.h_hat.as_deref());
        write_scores_csv(create(dir, "scores.csv")?, h, h_hat).map_err(|e| e.to_string())?;
    }
    if cfg.mode == Mode::Compare {
        let rows = error_vs_m(ts, &out.settings, &SWEEP_M).map_err(|e| e.to_string())?;
        write_error_csv(create(dir, "error_vs_m.csv")?, &rows).map_err(|e| e.to_string())?;
    }
    let sweeps = complexity_report().map_err(|e| e.to_string())?;
    write_counters_csv(create(dir, "counters.csv")?, out.counters.as_ref(), &sweeps)
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cfg = RunConfig::parse();
    let started = SystemTime::now();
    let clock = Instant::now();

    let raw = match load_series(&cfg.input, cfg.column.as_deref()) {
        Ok(ts) => ts,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = cfg.validate(raw.len()) {
        eprintln!("error: invalid configuration: {e}");
        return ExitCode::from(2);
    }
    let (ts, shift) = preprocess(&raw);

    let out = match execute(&cfg, &raw, &ts, shift) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for err in &out.report.errors {
        eprintln!("error: quantum run failed: {err}");
    }
    for c in out.report.checks.iter().filter(|c| c.enforced && !c.pass) {
        eprintln!(
            "error: bound check '{}' failed: max error {} exceeds bound {}",
            c.name, c.max_error, c.bound
        );
    }
    if let Some(dir) = &cfg.emit_plot_data {
        if let Err(e) = emit_plot_data(dir, &cfg, &ts, &out) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }

    let failed = out.failed;
    let report = out.report.finish(started, clock.elapsed());
    let json = match report.to_json() {
        Ok(j) => j,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match &cfg.report {
        Some(path) => {
            if let Err(e) = fs::write(path, json + "\n") {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
        None => println!("{json}"),
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
