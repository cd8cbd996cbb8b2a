use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::sampler::{fresh_batch, steps_per_epoch, MinibatchSampler, SamplingMode};
use crate::error::{Error, Result};
use crate::numeric::norm;
use crate::objectives::{check_theta, full_batch, Objective, ParamVector, RegularizedObjective};
use crate::rng::Rng;

/// Iterates with a larger Euclidean norm count as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// One SGD step as it was taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub eta: f64,
    /// Minibatch indices; `None` for a full-dataset step.
    pub batch: Option<Vec<usize>>,
    /// Unregularized minibatch loss at the pre-step iterate.
    pub loss: f64,
}

/// The stochastic map `F(θ) = θ − η (∇L_B(θ) + γθ)`.
#[derive(Clone)]
pub struct UpdateMap {
    objective: RegularizedObjective,
    batch_size: usize,
    sampling: SamplingMode,
    seed: u64,
    all: Arc<[usize]>,
}

impl UpdateMap {
    pub fn new(
        base: Arc<dyn Objective>,
        weight_decay: f64,
        batch_size: usize,
        sampling: SamplingMode,
        seed: u64,
    ) -> Result<Self> {
        let n = base.num_examples();
        MinibatchSampler::new(n, batch_size, sampling)?;
        Ok(Self {
            objective: RegularizedObjective::new(base, weight_decay)?,
            batch_size,
            sampling,
            seed,
            all: Arc::from(full_batch(n)),
        })
    }

    /// Deterministic full-batch gradient descent.
    pub fn gradient_descent(base: Arc<dyn Objective>, weight_decay: f64) -> Result<Self> {
        let n = base.num_examples();
        Self::new(base, weight_decay, n, SamplingMode::FullBatch, 0)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn objective(&self) -> &RegularizedObjective {
        &self.objective
    }

    pub fn base(&self) -> &Arc<dyn Objective> {
        self.objective.base()
    }

    pub fn weight_decay(&self) -> f64 {
        self.objective.weight_decay()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn sampling(&self) -> SamplingMode {
        self.sampling
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn num_examples(&self) -> usize {
        self.all.len()
    }

    pub fn is_deterministic(&self) -> bool {
        self.sampling == SamplingMode::FullBatch
    }

    pub fn steps_per_epoch(&self) -> usize {
        steps_per_epoch(self.num_examples(), self.batch_size, self.sampling)
    }

    pub fn sampler(&self) -> MinibatchSampler {
        MinibatchSampler::new(self.num_examples(), self.batch_size, self.sampling)
            .expect("sampler configuration validated at construction")
    }

    fn indices<'a>(&'a self, batch: Option<&'a [usize]>) -> &'a [usize] {
        batch.unwrap_or(&self.all)
    }

    /// Writes `F(θ)` for the given batch into `out`, using `grad` as scratch,
    /// and returns the unregularized batch loss at `θ`.
    pub fn apply_into(
        &self,
        theta: &[f64],
        eta: f64,
        batch: Option<&[usize]>,
        grad: &mut [f64],
        out: &mut [f64],
    ) -> Result<f64> {
        let loss = self.base().loss_grad(theta, self.indices(batch), grad)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::non_finite("minibatch gradient"));
        }
        let shrink = 1.0 - eta * self.weight_decay();
        for ((o, &t), &g) in out.iter_mut().zip(theta).zip(grad.iter()) {
            *o = shrink * t - eta * g;
        }
        Ok(loss)
    }

    /// `F(θ)` for the given batch together with the batch loss at `θ`.
    pub fn apply(&self, theta: &ParamVector, eta: f64, batch: Option<&[usize]>) -> Result<(ParamVector, f64)> {
        check_theta(theta.values(), self.dim())?;
        let mut grad = vec![0.0; theta.len()];
        let mut out = vec![0.0; theta.len()];
        let loss = self.apply_into(theta.values(), eta, batch, &mut grad, &mut out)?;
        Ok((theta.with_values(out), loss))
    }

    /// One step with a freshly drawn batch that has the marginal law of a
    /// step of this map.
    pub fn sample(&self, theta: &ParamVector, eta: f64, rng: &mut Rng) -> Result<ParamVector> {
        let batch = fresh_batch(self.num_examples(), self.batch_size, self.sampling, rng);
        self.apply(theta, eta, batch.as_deref()).map(|(t, _)| t)
    }
}

pub(crate) fn check_eta(eta: f64) -> Result<()> {
    if eta >= 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::rejected(format!("step size must be a finite non-negative real, got {eta}")))
    }
}

pub(crate) fn divergence_reason(theta: &[f64]) -> Option<String> {
    if theta.iter().any(|v| !v.is_finite()) {
        return Some("non-finite iterate".into());
    }
    let n = norm(theta);
    (n > DIVERGENCE_NORM).then(|| format!("iterate norm {n:e} exceeds {DIVERGENCE_NORM:e}"))
}

/// One step of `map` from `θ`, drawing the batch from `sampler`.
///
/// A step size of zero is accepted and leaves `θ` unchanged up to the batch
/// draw.
pub fn sgd_step(
    map: &UpdateMap,
    theta: &ParamVector,
    eta: f64,
    step: usize,
    sampler: &mut MinibatchSampler,
    rng: &mut Rng,
) -> Result<(ParamVector, StepRecord)> {
    check_eta(eta)?;
    let batch = sampler.next_batch(rng);
    let (next, loss) = map.apply(theta, eta, batch.as_deref()).map_err(|e| match e {
        Error::NonFinite { context } => Error::Diverged { step, reason: format!("non-finite {context}") },
        other => other,
    })?;
    if let Some(reason) = divergence_reason(next.values()) {
        return Err(Error::Diverged { step, reason });
    }
    Ok((next, StepRecord { step, eta, batch, loss }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{Quadratic, SinProduct, ZeroObjective, Block};
    use crate::rng::rng_from_seed;
    use std::f64::consts::FRAC_PI_2;

    fn step(map: &UpdateMap, theta: &[f64], eta: f64) -> Vec<f64> {
        let t = ParamVector::from_vec(theta.to_vec()).unwrap();
        let mut s = map.sampler();
        sgd_step(map, &t, eta, 0, &mut s, &mut rng_from_seed(0)).unwrap().0.into_values()
    }

    #[test]
    fn stationary_point_is_fixed() {
        let map = UpdateMap::gradient_descent(Arc::new(SinProduct::default()), 0.0).unwrap();
        assert_eq!(step(&map, &[0.0, 0.0], 0.3), vec![0.0, 0.0]);
        // cos(π/2) rounds to 6e-17, so the peak is stationary only to rounding
        for v in step(&map, &[FRAC_PI_2, FRAC_PI_2], 0.3) {
            assert!((v - FRAC_PI_2).abs() < 1e-14);
        }
    }

    #[test]
    fn full_decay_step_zeroes_parameters() {
        let zero = ZeroObjective::new(vec![Block::Vector { len: 3 }]);
        let map = UpdateMap::gradient_descent(Arc::new(zero), 1.0).unwrap();
        assert_eq!(step(&map, &[1.0, -2.0, 0.5], 1.0), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn quadratic_two_cycle() {
        let map = UpdateMap::gradient_descent(Arc::new(Quadratic::diagonal(&[1.0]).unwrap()), 0.0).unwrap();
        assert_eq!(step(&map, &[1.0], 2.0), vec![-1.0]);
        assert_eq!(step(&map, &[-1.0], 2.0), vec![1.0]);
    }

    #[test]
    fn decay_matches_shrink_form() {
        let map = UpdateMap::gradient_descent(Arc::new(Quadratic::diagonal(&[2.0, 3.0]).unwrap()), 0.1).unwrap();
        let out = step(&map, &[1.0, 1.0], 0.05);
        // (1 − ηγ)θ − η∇L
        assert!((out[0] - (0.995 - 0.1)).abs() < 1e-15);
        assert!((out[1] - (0.995 - 0.15)).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_eta_and_flags_divergence() {
        let map = UpdateMap::gradient_descent(Arc::new(Quadratic::diagonal(&[1.0]).unwrap()), 0.0).unwrap();
        let t = ParamVector::from_vec(vec![1e11]).unwrap();
        let mut s = map.sampler();
        let mut rng = rng_from_seed(0);
        assert!(matches!(sgd_step(&map, &t, -0.1, 0, &mut s, &mut rng), Err(Error::RejectedInput(_))));
        assert!(matches!(sgd_step(&map, &t, 100.0, 7, &mut s, &mut rng), Err(Error::Diverged { step: 7, .. })));
    }
}
