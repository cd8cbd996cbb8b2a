//! One sub-run per axis value, aggregated into `sweep.csv`.

use rayon::prelude::*;

use ergodyn::numeric::format_float;

use crate::config::{ExperimentKind, SweepAxis};
use crate::error::CliError;
use crate::run::{create, late_mean, write_json, Experiment, RunOutcome, METADATA_JSON};

pub const SWEEP_CSV: &str = "sweep.csv";

pub const SWEEP_COLUMNS: [&str; 12] = [
    "axis",
    "value",
    "status",
    "exit_code",
    "diagnosed",
    "final_loss",
    "final_grad_norm",
    "late_loss",
    "late_grad_norm",
    "late_noise",
    "late_sharpness",
    "message",
];

fn axis_key(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::Seed => "seed",
        SweepAxis::Eta => "eta0",
        SweepAxis::SampleSize => "sample_size",
    }
}

fn axis_name(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::Seed => "seed",
        SweepAxis::Eta => "eta",
        SweepAxis::SampleSize => "sample_size",
    }
}

fn row(axis: SweepAxis, value: &str, result: &Result<RunOutcome, CliError>) -> Vec<String> {
    let na = || "NA".to_string();
    let mut cells = vec![axis_name(axis).to_string(), value.to_string()];
    match result {
        Ok(out) => {
            cells.push(if out.diverged { "diverged" } else { "ok" }.to_string());
            cells.push(out.exit_code.to_string());
            match out.diagnostics.as_deref() {
                Some(recs) if !recs.is_empty() => {
                    let last = recs.last().unwrap();
                    cells.push(recs.len().to_string());
                    cells.push(format_float(last.loss));
                    cells.push(format_float(last.grad_norm));
                    cells.push(format_float(late_mean(recs, |r| r.loss)));
                    cells.push(format_float(late_mean(recs, |r| r.grad_norm)));
                    cells.push(format_float(late_mean(recs, |r| r.noise)));
                    cells.push(if recs.iter().all(|r| r.sharpness.is_some()) {
                        format_float(late_mean(recs, |r| r.sharpness.unwrap()))
                    } else {
                        na()
                    });
                }
                _ => {
                    cells.push("0".to_string());
                    cells.extend(std::iter::repeat_with(na).take(6));
                }
            }
            cells.push(out.summary.clone());
        }
        Err(e) => {
            cells.push("error".to_string());
            cells.push(e.code.to_string());
            cells.push("0".to_string());
            cells.extend(std::iter::repeat_with(na).take(6));
            cells.push(e.message.clone());
        }
    }
    cells
}

/// Runs the configured experiment once per `sweep_values` entry, `workers`
/// at a time. A failing sub-run is recorded in its row and the sweep goes on.
pub fn sweep(exp: &Experiment) -> Result<RunOutcome, CliError> {
    let cfg = &exp.config;
    let axis = cfg.sweep_axis.ok_or_else(|| CliError::usage("`sweep_axis` is required for a sweep"))?;
    if cfg.sweep_values.is_empty() {
        return Err(CliError::usage("`sweep_values` must list at least one value"));
    }
    let kind = match cfg.experiment {
        ExperimentKind::Sweep | ExperimentKind::Theorem => ExperimentKind::Diagnose,
        k => k,
    };
    std::fs::create_dir_all(&exp.out_dir)?;
    let runs: Vec<Experiment> = cfg
        .sweep_values
        .iter()
        .map(|v| exp.with_override(axis_key(axis), v, exp.out_dir.join(format!("{}_{v}", axis_name(axis)))))
        .collect::<Result<_, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::runtime(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let results: Vec<Result<RunOutcome, CliError>> = pool.install(|| runs.par_iter().map(|r| r.run(kind, None)).collect());

    let mut w = csv::Writer::from_writer(create(&exp.out_dir.join(SWEEP_CSV))?);
    w.write_record(SWEEP_COLUMNS).map_err(csv_error)?;
    for (value, result) in cfg.sweep_values.iter().zip(&results) {
        w.write_record(row(axis, value, result)).map_err(csv_error)?;
    }
    w.flush()?;
    write_json(
        &exp.out_dir.join(METADATA_JSON),
        &serde_json::json!({
            "command": "sweep",
            "config": exp.raw.entries,
            "overrides": exp.overrides,
            "axis": axis,
            "values": cfg.sweep_values,
            "sub_run": kind,
        }),
    )?;
    let failed = results.iter().filter(|r| !matches!(r, Ok(o) if o.exit_code == 0)).count();
    Ok(RunOutcome {
        exit_code: i32::from(failed > 0),
        summary: format!("sweep over {} {} values: {} succeeded, {failed} failed", results.len(), axis_name(axis), results.len() - failed),
        ..Default::default()
    })
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::runtime(format!("csv error: {e}"))
}
