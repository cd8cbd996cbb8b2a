use std::io::Write;

use serde::Serialize;

use super::quantities::full_quantities;
use crate::error::{Error, Result};
use crate::numeric::{format_float, mean_and_stderr};
use crate::objectives::Objective;
use crate::rng::Rng;

/// Mean and standard error of subsampled estimates at one sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrecisionRow {
    pub sample_size: usize,
    pub resamples: usize,
    pub loss: f64,
    pub loss_stderr: f64,
    pub grad_norm: f64,
    pub grad_norm_stderr: f64,
    pub noise: f64,
    pub noise_stderr: f64,
}

/// Re-estimates loss, gradient norm and noise from `resamples` independent
/// subsamples at each size; the full size is evaluated once, exactly.
pub fn precision_sweep(obj: &dyn Objective, theta: &[f64], sizes: &[usize], resamples: usize, rng: &mut Rng) -> Result<Vec<PrecisionRow>> {
    if sizes.is_empty() || resamples == 0 {
        return Err(Error::rejected("need at least one sample size and one resample"));
    }
    let n = obj.num_examples();
    sizes
        .iter()
        .map(|&s| {
            let reps = if s == n { 1 } else { resamples };
            let mut loss = Vec::with_capacity(reps);
            let mut grad = Vec::with_capacity(reps);
            let mut noise = Vec::with_capacity(reps);
            for _ in 0..reps {
                let q = full_quantities(obj, theta, s, rng)?;
                loss.push(q.loss);
                grad.push(q.grad_norm);
                noise.push(q.noise);
            }
            let (l, ls) = mean_and_stderr(&loss);
            let (g, gs) = mean_and_stderr(&grad);
            let (z, zs) = mean_and_stderr(&noise);
            Ok(PrecisionRow {
                sample_size: s,
                resamples: reps,
                loss: l,
                loss_stderr: ls,
                grad_norm: g,
                grad_norm_stderr: gs,
                noise: z,
                noise_stderr: zs,
            })
        })
        .collect()
}

pub fn write_precision_csv<W: Write>(w: W, rows: &[PrecisionRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sample_size", "resamples", "loss", "loss_stderr", "grad_norm", "grad_norm_stderr", "noise", "noise_stderr"])?;
    for r in rows {
        out.write_record([
            r.sample_size.to_string(),
            r.resamples.to_string(),
            format_float(r.loss),
            format_float(r.loss_stderr),
            format_float(r.grad_norm),
            format_float(r.grad_norm_stderr),
            format_float(r.noise),
            format_float(r.noise_stderr),
        ])?;
    }
    out.flush()?;
    Ok(())
}
