use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::numeric::{self, quantile};
use crate::objectives::{full_loss, Objective};

/// Consecutive quiet windows required.
pub const QUIET_WINDOWS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InvarianceTolerance {
    Absolute { tol: f64 },
    /// `fraction` times the interquartile range of the loss in each window.
    IqrFraction { fraction: f64 },
}

impl Default for InvarianceTolerance {
    fn default() -> Self {
        InvarianceTolerance::IqrFraction { fraction: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceDetection {
    pub reached: bool,
    /// Start step of the first window of the quiet streak.
    pub step: Option<usize>,
    pub window: usize,
    pub tolerance: InvarianceTolerance,
    /// Drift statistic and threshold of the last window examined.
    pub last_statistic: f64,
    pub last_threshold: f64,
}

/// Splits `(steps, losses)` into consecutive windows of `window` steps and
/// finds the first run of [`QUIET_WINDOWS`] windows whose mean loss differs
/// from the previous window's by at most `tolerance · window`, i.e. whose
/// mean per-step drift is within tolerance. `steps` must be increasing.
///
/// The reported step is the start of the first quiet window of the run.
pub fn detect_invariance_in_series(steps: &[usize], losses: &[f64], window: usize, tolerance: InvarianceTolerance) -> Result<InvarianceDetection> {
    if window < 2 {
        return Err(Error::rejected("invariance window must be at least 2 steps"));
    }
    if steps.len() != losses.len() || steps.is_empty() {
        return Err(Error::rejected("need one loss per step"));
    }
    let first = steps[0];
    let last_step = *steps.last().unwrap();
    let bounds = |k: usize| {
        let lo = steps.partition_point(|&s| s < first + (k - 1) * window);
        let hi = steps.partition_point(|&s| s < first + k * window);
        lo..hi
    };
    let mut streak = 0;
    let mut streak_start = None;
    let mut last = (f64::NAN, f64::NAN);
    let mut prev = bounds(1);
    let mut k = 2;
    while first + k * window <= last_step {
        let cur = bounds(k);
        let stat = (numeric::mean(&losses[cur.clone()]) - numeric::mean(&losses[prev.clone()])).abs() / window as f64;
        let threshold = match tolerance {
            InvarianceTolerance::Absolute { tol } => tol,
            InvarianceTolerance::IqrFraction { fraction } => {
                let w = &losses[prev.start..cur.end];
                fraction * (quantile(w, 0.75) - quantile(w, 0.25))
            }
        };
        last = (stat, threshold);
        if stat <= threshold {
            streak += 1;
            if streak == 1 {
                streak_start = Some(first + (k - 1) * window);
            }
            if streak == QUIET_WINDOWS {
                return Ok(InvarianceDetection {
                    reached: true,
                    step: streak_start,
                    window,
                    tolerance,
                    last_statistic: stat,
                    last_threshold: threshold,
                });
            }
        } else {
            streak = 0;
            streak_start = None;
        }
        prev = cur;
        k += 1;
    }
    Ok(InvarianceDetection {
        reached: false,
        step: None,
        window,
        tolerance,
        last_statistic: last.0,
        last_threshold: last.1,
    })
}

/// [`detect_invariance_in_series`] on the full-dataset loss of the stored
/// iterates. `window` must be a multiple of the storage stride.
pub fn detect_invariance(traj: &Trajectory, obj: &dyn Objective, window: usize, tolerance: InvarianceTolerance) -> Result<InvarianceDetection> {
    if window % traj.stride() != 0 {
        return Err(Error::rejected(format!("window {window} is not a multiple of the stride {}", traj.stride())));
    }
    let steps = traj.stored_steps();
    let losses: Vec<f64> = (0..steps.len()).map(|i| full_loss(obj, traj.stored(i))).collect::<Result<_>>()?;
    detect_invariance_in_series(steps, &losses, window, tolerance)
}
