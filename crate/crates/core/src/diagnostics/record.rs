use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::quantities::full_quantities;
use super::sharpness::{sharpness, PowerIteration};
use crate::dynamics::{Trajectory, UpdateMap};
use crate::error::{Error, Result};
use crate::numeric::format_float;
use crate::objectives::full_batch;
use crate::rng::derived_rng;

/// Diagnostics at one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub eta: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub noise: f64,
    /// Signed dominant Hessian eigenvalue, when computed.
    pub sharpness: Option<f64>,
    /// Second moment of the stochastic gradient.
    pub g2: f64,
    pub sample_size: usize,
}

impl DiagnosticsRecord {
    pub fn eos_ratio(&self) -> Option<f64> {
        eos_ratio(self)
    }
}

/// `‖∇‖² / (η |𝓛| G²)`, or `None` when the denominator is not positive.
pub fn eos_ratio(record: &DiagnosticsRecord) -> Option<f64> {
    let lambda = record.sharpness?.abs();
    let denom = record.eta * lambda * record.g2;
    (denom > 0.0 && denom.is_finite()).then(|| record.grad_norm * record.grad_norm / denom)
}

pub const DIAGNOSTICS_COLUMNS: [&str; 9] = [
    "step",
    "eta",
    "loss",
    "grad_norm",
    "noise",
    "sharpness",
    "g2",
    "eos_ratio",
    "sample_size",
];

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), format_float)
}

/// Writes the diagnostics CSV; undefined entries are `NA`.
pub fn write_diagnostics_csv<W: Write>(w: W, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(DIAGNOSTICS_COLUMNS)?;
    for r in records {
        out.write_record([
            r.step.to_string(),
            format_float(r.eta),
            format_float(r.loss),
            format_float(r.grad_norm),
            format_float(r.noise),
            opt(r.sharpness),
            format_float(r.g2),
            opt(r.eos_ratio()),
            r.sample_size.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnoseOptions {
    /// Evaluate every `every`-th stored iterate (the final one is always kept).
    pub every: usize,
    /// Examples per estimate; `None` means the whole dataset.
    pub sample_size: Option<usize>,
    /// Power-iteration settings, or `None` to skip sharpness.
    pub sharpness: Option<PowerIteration>,
    pub seed: u64,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self {
            every: 1,
            sample_size: None,
            sharpness: Some(PowerIteration::default()),
            seed: 0,
        }
    }
}

/// Diagnostics at selected stored iterates, computed in parallel.
///
/// Each iterate draws from its own stream derived from `(seed, step)`, so
/// the output does not depend on the thread count. Quantities refer to the
/// unregularized objective; the step size is the one used from that iterate
/// (the last recorded one for the final iterate).
pub fn diagnose_trajectory(traj: &Trajectory, map: &UpdateMap, options: &DiagnoseOptions) -> Result<Vec<DiagnosticsRecord>> {
    if options.every == 0 {
        return Err(Error::rejected("diagnostic interval must be positive"));
    }
    let obj = map.base().as_ref();
    let n = obj.num_examples();
    let sample_size = options.sample_size.unwrap_or(n);
    let count = traj.num_stored();
    let picks: Vec<usize> = (0..count).filter(|i| i % options.every == 0 || *i == count - 1).collect();
    let batch = full_batch(n);
    picks
        .par_iter()
        .map(|&i| {
            let step = traj.stored_steps()[i];
            let mut rng = derived_rng(options.seed, step as u64);
            let theta = traj.stored(i);
            let q = full_quantities(obj, theta, sample_size, &mut rng)?;
            let eta = traj
                .records()
                .get(step)
                .or(traj.records().last())
                .map_or(traj.metadata().schedule.eta0(), |r| r.eta);
            let lambda = match options.sharpness {
                Some(cfg) => Some(sharpness(obj, theta, &batch, cfg, &mut rng)?.value),
                None => None,
            };
            Ok(DiagnosticsRecord {
                step,
                eta,
                loss: q.loss,
                grad_norm: q.grad_norm,
                noise: q.noise,
                sharpness: lambda,
                g2: q.second_moment(map.batch_size(), map.sampling()),
                sample_size: q.sample_size,
            })
        })
        .collect()
}
