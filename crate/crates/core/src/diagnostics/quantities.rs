use serde::Serialize;

use crate::dynamics::SamplingMode;
use crate::error::{Error, Result};
use crate::numeric::{dot, NeumaierSum};
use crate::objectives::{full_batch, Objective};
use crate::rng::Rng;

/// Loss, gradient norm and gradient noise over a sample of examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantities {
    pub loss: f64,
    /// `‖(1/s) Σ ∇ℓᵢ‖`
    pub grad_norm: f64,
    /// `√((1/s) Σ ‖∇ℓᵢ − ∇L‖²)`
    pub noise: f64,
    /// `(1/s) Σ ‖∇ℓᵢ‖²`
    pub mean_sq_grad: f64,
    pub sample_size: usize,
    pub num_examples: usize,
}

impl Quantities {
    pub fn is_exact(&self) -> bool {
        self.sample_size == self.num_examples
    }

    /// Second moment of the stochastic gradient a step actually uses:
    /// `‖∇L‖²` for full-batch steps, otherwise `‖∇L‖² + κ σ²` with
    /// `κ = 1/m` for i.i.d. batches and `(N−m)/(m(N−1))` without replacement.
    pub fn second_moment(&self, batch_size: usize, mode: SamplingMode) -> f64 {
        let g2 = self.grad_norm * self.grad_norm;
        let s2 = self.noise * self.noise;
        let n = self.num_examples as f64;
        let m = batch_size as f64;
        match mode {
            SamplingMode::FullBatch => g2,
            SamplingMode::Iid => g2 + s2 / m,
            SamplingMode::EpochShuffle if self.num_examples > 1 => g2 + s2 * (n - m) / (m * (n - 1.0)),
            SamplingMode::EpochShuffle => g2,
        }
    }
}

/// Exact quantities over the listed examples.
pub fn quantities_on(obj: &dyn Objective, theta: &[f64], indices: &[usize]) -> Result<Quantities> {
    if indices.is_empty() {
        return Err(Error::rejected("sample size must be positive"));
    }
    let p = theta.len();
    let s = indices.len() as f64;
    let mut grads = vec![0.0; p * indices.len()];
    let mut loss = NeumaierSum::new();
    for (k, &i) in indices.iter().enumerate() {
        loss.add(obj.loss_grad(theta, &[i], &mut grads[k * p..(k + 1) * p])?);
    }
    let mut mean = vec![0.0; p];
    for g in grads.chunks(p) {
        for (m, v) in mean.iter_mut().zip(g) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= s);
    let mut dev = NeumaierSum::new();
    let mut sq = NeumaierSum::new();
    for g in grads.chunks(p) {
        sq.add(dot(g, g));
        dev.add(g.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum());
    }
    Ok(Quantities {
        loss: loss.value() / s,
        grad_norm: dot(&mean, &mean).sqrt(),
        noise: (dev.value() / s).sqrt(),
        mean_sq_grad: sq.value() / s,
        sample_size: indices.len(),
        num_examples: obj.num_examples(),
    })
}

/// Quantities over all examples when `sample_size = N`, otherwise over a
/// uniform subsample drawn without replacement.
pub fn full_quantities(obj: &dyn Objective, theta: &[f64], sample_size: usize, rng: &mut Rng) -> Result<Quantities> {
    let n = obj.num_examples();
    if sample_size == 0 || sample_size > n {
        return Err(Error::rejected(format!("sample size must lie in 1..={n}, got {sample_size}")));
    }
    let indices = if sample_size == n {
        full_batch(n)
    } else {
        let mut idx = rand::seq::index::sample(rng, n, sample_size).into_vec();
        idx.sort_unstable();
        idx
    };
    quantities_on(obj, theta, &indices)
}
