use std::io::Write;

use serde::Serialize;

use super::measure::{evaluate_atoms, EmpiricalMeasure};
use super::observable::Observable;
use crate::dynamics::{Trajectory, UpdateMap};
use crate::error::{Error, Result};
use crate::numeric::{format_float, mean_and_stderr, ols_slope, NeumaierSum};
use crate::objectives::ParamVector;
use crate::rng::Rng;

/// How `φ(F(θ_t))` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeEstimator {
    /// One fresh step from `θ_t` with independent randomness.
    Resample,
    /// The recorded next iterate `θ_{t+1}`; the statistic telescopes.
    Reuse,
}

/// Where the Hoeffding bound `M` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSource {
    Supplied,
    /// Twice the largest observed `|φ|`.
    Observed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VanishingChangeRow {
    pub n: usize,
    /// `Δₙ`
    pub statistic: f64,
    pub envelope: f64,
    pub inside: bool,
    /// `(φ(θ₁) − φ(θ_{n+1}))/n`, for deterministic maps.
    pub telescoped: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VanishingChangeReport {
    pub observable: String,
    pub estimator: ChangeEstimator,
    pub deterministic: bool,
    pub confidence_delta: f64,
    pub bound: f64,
    pub bound_source: BoundSource,
    pub seed: u64,
    pub rows: Vec<VanishingChangeRow>,
    /// Least-squares slope of `log|Δₙ|` against `log n`.
    pub slope: Option<f64>,
    pub warnings: Vec<String>,
}

impl VanishingChangeReport {
    /// Columns `n,delta,envelope`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n", "delta", "envelope"])?;
        for r in &self.rows {
            out.write_record([r.n.to_string(), format_float(r.statistic), format_float(r.envelope)])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn all_inside(&self) -> bool {
        self.rows.iter().all(|r| r.inside)
    }
}

/// `M √(2 log(2/δ) / n) + 2M/n`.
pub fn hoeffding_envelope(bound: f64, delta: f64, n: usize) -> f64 {
    let n = n as f64;
    bound * (2.0 * (2.0 / delta).ln() / n).sqrt() + 2.0 * bound / n
}

/// Slope of `log|Δₙ|` against `log n`, ignoring exact zeros.
pub fn log_log_slope(ns: &[usize], stats: &[f64]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = ns
        .iter()
        .zip(stats)
        .filter(|(_, s)| **s != 0.0 && s.is_finite())
        .map(|(&n, s)| ((n as f64).ln(), s.abs().ln()))
        .unzip();
    if xs.len() < 2 {
        None
    } else {
        ols_slope(&xs, &ys)
    }
}

fn checked(phi: &Observable, v: f64, index: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteObservable {
            name: phi.name().to_string(),
            index,
        })
    }
}

/// The time-averaged one-step change `Δₙ = (1/n) Σ_{t=1..n} [φ(θ_t) − φ(F(θ_t))]`
/// for every `n` in `grid`.
///
/// For a deterministic map `F(θ_t)` is the stored `θ_{t+1}` and the
/// identity `Δₙ = (φ(θ₁) − φ(θ_{n+1}))/n` is checked; a violation is an
/// error. Otherwise `estimator` picks between a fresh resampled step and
/// the recorded next iterate. The trajectory must store every iterate and
/// run at least `max(grid) + 1` steps.
pub fn vanishing_change(
    traj: &Trajectory,
    map: &UpdateMap,
    phi: &Observable,
    delta: f64,
    grid: &[usize],
    estimator: ChangeEstimator,
    rng: &mut Rng,
) -> Result<VanishingChangeReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::rejected(format!("confidence δ must lie in (0, 1), got {delta}")));
    }
    if grid.is_empty() || grid.contains(&0) {
        return Err(Error::rejected("sample sizes must be positive and non-empty"));
    }
    if traj.stride() != 1 {
        return Err(Error::rejected("the vanishing-change statistic needs every iterate (stride 1)"));
    }
    let deterministic = map.is_deterministic();
    let estimator = if deterministic { ChangeEstimator::Reuse } else { estimator };
    let n_max = *grid.iter().max().unwrap();
    if traj.num_steps() <= n_max {
        return Err(Error::rejected(format!(
            "trajectory has {} steps but n = {n_max} needs {}",
            traj.num_steps(),
            n_max + 1
        )));
    }
    let mut sorted: Vec<usize> = grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let mut max_abs: f64 = 0.0;
    let mut sum = NeumaierSum::new();
    let mut abs_diff = NeumaierSum::new();
    let mut rows = Vec::with_capacity(sorted.len());
    let mut next_grid = sorted.iter().peekable();
    let mut phi_first = f64::NAN;
    let mut phi_next = checked(phi, phi.eval(traj.stored(1))?, 1)?;
    for t in 1..=n_max {
        let here = phi_next;
        if t == 1 {
            phi_first = here;
        }
        let after = match estimator {
            ChangeEstimator::Reuse => {
                phi_next = checked(phi, phi.eval(traj.stored(t + 1))?, t + 1)?;
                phi_next
            }
            ChangeEstimator::Resample => {
                let theta = ParamVector::new(traj.stored(t).to_vec(), traj.blocks().clone())?;
                let eta = traj.records()[t].eta;
                let moved = map.sample(&theta, eta, rng)?;
                if t < n_max {
                    phi_next = checked(phi, phi.eval(traj.stored(t + 1))?, t + 1)?;
                }
                checked(phi, phi.eval(moved.values())?, t)?
            }
        };
        max_abs = max_abs.max(here.abs()).max(after.abs());
        let d = here - after;
        sum.add(d);
        abs_diff.add(d.abs());
        if next_grid.peek() == Some(&&t) {
            next_grid.next();
            let statistic = sum.value() / t as f64;
            let telescoped = deterministic.then(|| (phi_first - after) / t as f64);
            if let Some(tel) = telescoped {
                let tol = 1e-12 * tel.abs() + 2.0 * f64::EPSILON * abs_diff.value() / t as f64;
                if (statistic - tel).abs() > tol {
                    return Err(Error::Telescoping {
                        direct: statistic,
                        telescoped: tel,
                    });
                }
            }
            rows.push(VanishingChangeRow {
                n: t,
                statistic,
                envelope: 0.0,
                inside: false,
                telescoped,
            });
        }
    }

    let mut warnings = Vec::new();
    let (bound, bound_source) = match phi.bound() {
        Some(m) => (m, BoundSource::Supplied),
        None => {
            warnings.push(format!(
                "no analytic bound for `{}`; using twice the largest observed |φ| ({:e})",
                phi.name(),
                2.0 * max_abs
            ));
            (2.0 * max_abs, BoundSource::Observed)
        }
    };
    for r in &mut rows {
        r.envelope = hoeffding_envelope(bound, delta, r.n);
        r.inside = r.statistic.abs() <= r.envelope;
    }
    let ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    let stats: Vec<f64> = rows.iter().map(|r| r.statistic).collect();
    Ok(VanishingChangeReport {
        observable: phi.name().to_string(),
        estimator,
        deterministic,
        confidence_delta: delta,
        bound,
        bound_source,
        seed: traj.seed(),
        slope: log_log_slope(&ns, &stats),
        rows,
        warnings,
    })
}

/// `μ(φ) − (1/R) Σ_r μ(φ ∘ F_r)` with its standard error over the `R`
/// resamples, each `F_r` drawing fresh minibatches for every atom.
pub fn invariance_residual(
    measure: &EmpiricalMeasure,
    map: &UpdateMap,
    eta: f64,
    phi: &Observable,
    num_resamples: usize,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    if num_resamples == 0 {
        return Err(Error::rejected("at least one resample is required"));
    }
    let before: f64 = evaluate_atoms(measure, phi)?
        .iter()
        .zip(measure.weights())
        .map(|(v, w)| v * w)
        .collect::<NeumaierSum>()
        .value();
    let resamples = if map.is_deterministic() { 1 } else { num_resamples };
    let mut pushed = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut acc = NeumaierSum::new();
        for (i, w) in measure.weights().iter().enumerate() {
            let moved = map.sample(&measure.atom(i), eta, rng)?;
            acc.add(w * checked(phi, phi.eval(moved.values())?, i)?);
        }
        pushed.push(acc.value());
    }
    let (after, stderr) = mean_and_stderr(&pushed);
    Ok((before - after, stderr))
}
