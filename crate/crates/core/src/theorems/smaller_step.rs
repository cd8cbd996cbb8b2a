use rand::distributions::{Distribution, WeightedIndex};
use rand_distr::StandardNormal;
use serde::Serialize;

use super::verdict::{Report, Verdict};
use crate::dynamics::UpdateMap;
use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;
use crate::numeric::{dot, mean_and_stderr, norm, NeumaierSum};
use crate::objectives::{full_batch, hvp_into, Objective, HVP_EPS};
use crate::rng::Rng;

pub const DEFAULT_C_GRID: [f64; 6] = [0.5, 0.2, 0.1, 0.05, 0.02, 0.01];

/// Mean squared gradient norm below which the measure counts as supported
/// on stationary points.
pub const STATIONARY_EPS: f64 = 1e-6;

pub const MIN_ATOMS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallerStepConfig {
    /// Descending step multipliers.
    pub c_grid: Vec<f64>,
    pub samples: usize,
    pub stationary_eps: f64,
    /// Atom pairs used for the curvature-fluctuation proxy; 0 skips it.
    pub curvature_pairs: usize,
}

impl Default for SmallerStepConfig {
    fn default() -> Self {
        Self {
            c_grid: DEFAULT_C_GRID.to_vec(),
            samples: 1000,
            stationary_eps: STATIONARY_EPS,
            curvature_pairs: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallerStepRow {
    pub c: f64,
    /// Estimated `𝔼[L(θ − cη g(θ)) − L(θ)]`.
    pub mean_change: f64,
    pub stderr: f64,
    /// `mean + 2·stderr < 0`
    pub negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallerStepReport {
    pub config: SmallerStepConfig,
    pub eta: f64,
    pub atoms: usize,
    /// `𝔼_μ ‖∇L‖²`
    pub mean_sq_grad: f64,
    pub not_applicable: bool,
    /// Largest sampled stochastic-gradient norm.
    pub g_max: f64,
    /// Estimate of the curvature-fluctuation constant, from sampled atom
    /// pairs; never used for the verdict.
    pub m_hat_estimate: Option<f64>,
    pub rows: Vec<SmallerStepRow>,
    pub largest_passing_c: Option<f64>,
    /// Over the descending grid, a non-negative prefix then a negative suffix.
    pub single_sign_change: bool,
    pub verdict: Verdict,
}

impl Report for SmallerStepReport {
    fn name(&self) -> &'static str {
        "smallerstep"
    }

    fn verdict(&self) -> Verdict {
        self.verdict
    }

    fn summary(&self) -> String {
        if self.not_applicable {
            return format!(
                "{} smaller step: 𝔼‖∇L‖² = {:.3e} ≤ {:.1e}, measure sits on stationary points",
                self.verdict, self.mean_sq_grad, self.config.stationary_eps
            );
        }
        match self.largest_passing_c.and_then(|c| self.rows.iter().find(|r| r.c == c)) {
            Some(r) => format!(
                "{} smaller step: c = {} gives Δ = {:.6e} ± {:.3e} (margin {:.3e} at 2 s.e.)",
                self.verdict,
                r.c,
                r.mean_change,
                r.stderr,
                -(r.mean_change + 2.0 * r.stderr)
            ),
            None => format!("{} smaller step: no c in the grid gives a decrease at 2 s.e.", self.verdict),
        }
    }
}

fn sample_atoms(measure: &EmpiricalMeasure, count: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let k = measure.len();
    let w = measure.weights();
    if w.iter().all(|&x| x == w[0]) {
        let offset = rand::Rng::gen_range(rng, 0..k);
        Ok((0..count).map(|s| (s + offset) % k).collect())
    } else {
        let dist = WeightedIndex::new(w).map_err(|e| Error::rejected(format!("measure weights: {e}")))?;
        Ok((0..count).map(|_| dist.sample(rng)).collect())
    }
}

/// Operator norm of `H_B(θ_i) − H(θ_j)` by power iteration on
/// Hessian-vector products.
fn curvature_gap(obj: &dyn Objective, a: &[f64], batch: &[usize], b: &[f64], full: &[usize], rng: &mut Rng) -> Result<f64> {
    let p = a.len();
    let mut v: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let (mut ha, mut hb) = (vec![0.0; p], vec![0.0; p]);
    let mut est = 0.0;
    for _ in 0..50 {
        hvp_into(obj, a, &v, batch, HVP_EPS, &mut ha)?;
        hvp_into(obj, b, &v, full, HVP_EPS, &mut hb)?;
        ha.iter_mut().zip(&hb).for_each(|(x, y)| *x -= y);
        est = norm(&ha);
        if est == 0.0 {
            break;
        }
        v.iter_mut().zip(&ha).for_each(|(vi, d)| *vi = d / est);
    }
    Ok(est)
}

/// Estimates the one-step change of the regularized loss when the step is
/// shrunk by each `c`, from atoms of `measure` with fresh minibatches.
///
/// The same `(atom, batch)` draws are reused for every `c`.
pub fn check_smaller_step(
    measure: &EmpiricalMeasure,
    map: &UpdateMap,
    eta: f64,
    config: &SmallerStepConfig,
    rng: &mut Rng,
) -> Result<SmallerStepReport> {
    if measure.len() < MIN_ATOMS {
        return Err(Error::rejected(format!("measure has {} atoms, at least {MIN_ATOMS} are required", measure.len())));
    }
    if config.samples < 100 {
        return Err(Error::rejected("at least 100 one-step samples per c are required"));
    }
    if config.c_grid.is_empty() || config.c_grid.iter().any(|&c| !(c > 0.0 && c < 1.0)) {
        return Err(Error::rejected("c grid values must lie in (0, 1)"));
    }
    let obj = map.objective();
    let full = full_batch(obj.num_examples());
    let p = obj.dim();

    let mut grad = vec![0.0; p];
    let mut losses = Vec::with_capacity(measure.len());
    let mut sq = NeumaierSum::new();
    for (atom, w) in measure.atoms().iter().zip(measure.weights()) {
        losses.push(obj.loss_grad(atom, &full, &mut grad)?);
        sq.add(w * dot(&grad, &grad));
    }
    let mean_sq_grad = sq.value();
    let mut report = SmallerStepReport {
        config: config.clone(),
        eta,
        atoms: measure.len(),
        mean_sq_grad,
        not_applicable: false,
        g_max: 0.0,
        m_hat_estimate: None,
        rows: Vec::new(),
        largest_passing_c: None,
        single_sign_change: true,
        verdict: Verdict::NotApplicable,
    };
    if mean_sq_grad <= config.stationary_eps {
        report.not_applicable = true;
        return Ok(report);
    }

    let picks = sample_atoms(measure, config.samples, rng)?;
    let sampler = map.sampler();
    let mut changes = vec![Vec::with_capacity(config.samples); config.c_grid.len()];
    let mut moved = vec![0.0; p];
    for &i in &picks {
        let atom = &measure.atoms()[i];
        let batch = sampler.fresh_batch(rng);
        obj.loss_grad(atom, batch.as_deref().unwrap_or(&full), &mut grad)?;
        report.g_max = report.g_max.max(norm(&grad));
        for (k, &c) in config.c_grid.iter().enumerate() {
            for ((m, a), g) in moved.iter_mut().zip(atom).zip(&grad) {
                *m = a - c * eta * g;
            }
            changes[k].push(obj.loss(&moved, &full)? - losses[i]);
        }
    }
    for (k, &c) in config.c_grid.iter().enumerate() {
        let (mean, se) = mean_and_stderr(&changes[k]);
        report.rows.push(SmallerStepRow {
            c,
            mean_change: mean,
            stderr: se,
            negative: mean + 2.0 * se < 0.0,
        });
    }
    report.largest_passing_c = report.rows.iter().find(|r| r.negative).map(|r| r.c);
    let first_negative = report.rows.iter().position(|r| r.mean_change < 0.0).unwrap_or(report.rows.len());
    report.single_sign_change = report.rows[first_negative..].iter().all(|r| r.mean_change < 0.0);

    if config.curvature_pairs > 0 {
        let mut m_hat: f64 = 0.0;
        for _ in 0..config.curvature_pairs {
            let i = rand::Rng::gen_range(rng, 0..measure.len());
            let j = rand::Rng::gen_range(rng, 0..measure.len());
            let batch = sampler.fresh_batch(rng);
            let gap = curvature_gap(obj, &measure.atoms()[i], batch.as_deref().unwrap_or(&full), &measure.atoms()[j], &full, rng)?;
            m_hat = m_hat.max(gap * gap);
        }
        report.m_hat_estimate = Some(m_hat);
    }
    report.verdict = Verdict::from_bool(report.largest_passing_c.is_some());
    Ok(report)
}
