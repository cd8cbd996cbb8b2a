//! Differentiable objects the dynamics act on.
//!
//! Every objective is an average of per-example losses over a dataset of
//! `num_examples()` entries (closed-form functions have a single "example").
//! Batches are lists of example indices; duplicates are allowed and weigh
//! the example accordingly.

mod batchnorm;
mod dataset;
mod linalg;
mod loss;
mod mlp;
mod param;
mod synthetic;

use std::sync::Arc;

pub use batchnorm::{batchnorm_forward, DEFAULT_BN_EPSILON, BatchNormLayer, BatchNormOutput, BnForward, BnMlp};
pub use dataset::{BlobSpec, Dataset};
pub use linalg::{matrix_operator_norm, operator_norm, OperatorNorm};
pub use loss::{cross_entropy, training_cross_entropy};
pub use mlp::{init_weights, mlp_forward, Activation, ForwardTrace, InitScheme, Mlp, MlpSpec};
pub use param::{block_ranges, total_len, Block, ParamVector};
pub use synthetic::{sin_product_eval, Quadratic, SinProduct, SinProductEval, ZeroObjective};

use crate::error::{Error, Result};

/// Default cap on the dataset size for exact per-example gradients.
pub const PER_EXAMPLE_CAP: usize = 10_000;

/// Default relative finite-difference step for Hessian-vector products.
pub const HVP_EPS: f64 = 1e-4;

/// Loss, gradient and derived quantities over a dataset.
pub trait Objective: Send + Sync {
    /// Parameter layout.
    fn blocks(&self) -> Arc<[Block]>;

    fn dim(&self) -> usize {
        total_len(&self.blocks())
    }

    /// Number of examples batches index into.
    fn num_examples(&self) -> usize;

    /// Mean loss over `batch`.
    fn loss(&self, theta: &[f64], batch: &[usize]) -> Result<f64>;

    /// Mean loss over `batch`; overwrites `grad` with its gradient.
    fn loss_grad(&self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64>;

    /// Short human-readable descriptor stored in trajectory metadata.
    fn describe(&self) -> String;

    /// Number of output classes, when the loss is a classification loss.
    fn num_classes(&self) -> Option<usize> {
        None
    }
}

pub(crate) fn check_batch(batch: &[usize], n: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::rejected("empty batch"));
    }
    if let Some(&i) = batch.iter().find(|&&i| i >= n) {
        return Err(Error::rejected(format!(
            "batch index {i} out of range for {n} examples"
        )));
    }
    Ok(())
}

pub(crate) fn check_theta(theta: &[f64], dim: usize) -> Result<()> {
    if theta.len() != dim {
        return Err(Error::config(format!(
            "parameter length {} does not match objective dimension {dim}",
            theta.len()
        )));
    }
    Ok(())
}

/// Indices `0..n`.
pub fn full_batch(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Loss and gradient as a [`ParamVector`] pair.
pub fn loss_and_grad(
    obj: &dyn Objective,
    theta: &ParamVector,
    batch: &[usize],
) -> Result<(f64, ParamVector)> {
    let mut grad = vec![0.0; theta.len()];
    let loss = obj.loss_grad(theta.values(), batch, &mut grad)?;
    Ok((loss, theta.with_values(grad)))
}

/// Full-dataset loss.
pub fn full_loss(obj: &dyn Objective, theta: &[f64]) -> Result<f64> {
    obj.loss(theta, &full_batch(obj.num_examples()))
}

/// Base objective plus `(γ/2)‖θ‖²`.
#[derive(Clone)]
pub struct RegularizedObjective {
    base: Arc<dyn Objective>,
    weight_decay: f64,
}

impl RegularizedObjective {
    pub fn new(base: Arc<dyn Objective>, weight_decay: f64) -> Result<Self> {
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::config(format!(
                "weight decay must be a non-negative real, got {weight_decay}"
            )));
        }
        Ok(Self { base, weight_decay })
    }

    pub fn base(&self) -> &Arc<dyn Objective> {
        &self.base
    }

    pub fn weight_decay(&self) -> f64 {
        self.weight_decay
    }

    /// Regularized minibatch loss and its exact (sub)gradient.
    pub fn loss_and_grad(
        &self,
        theta: &ParamVector,
        batch: &[usize],
    ) -> Result<(f64, ParamVector)> {
        loss_and_grad(self, theta, batch)
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        if self.weight_decay == 0.0 {
            0.0
        } else {
            0.5 * self.weight_decay * crate::numeric::dot(theta, theta)
        }
    }
}

impl Objective for RegularizedObjective {
    fn blocks(&self) -> Arc<[Block]> {
        self.base.blocks()
    }

    fn num_examples(&self) -> usize {
        self.base.num_examples()
    }

    fn loss(&self, theta: &[f64], batch: &[usize]) -> Result<f64> {
        Ok(self.base.loss(theta, batch)? + self.penalty(theta))
    }

    fn loss_grad(&self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64> {
        let base = self.base.loss_grad(theta, batch, grad)?;
        if self.weight_decay != 0.0 {
            crate::numeric::axpy(self.weight_decay, theta, grad);
        }
        Ok(base + self.penalty(theta))
    }

    fn describe(&self) -> String {
        format!("{} + weight_decay({})", self.base.describe(), self.weight_decay)
    }

    fn num_classes(&self) -> Option<usize> {
        self.base.num_classes()
    }
}

/// Gradient of each listed example's loss.
pub fn per_example_grads_for(
    obj: &dyn Objective,
    theta: &ParamVector,
    indices: &[usize],
) -> Result<Vec<ParamVector>> {
    check_theta(theta.values(), obj.dim())?;
    indices
        .iter()
        .map(|&i| loss_and_grad(obj, theta, &[i]).map(|(_, g)| g))
        .collect()
}

/// Gradient of every example's loss, in dataset order.
///
/// Refuses datasets larger than `cap`; use the subsampled estimators in
/// [`crate::diagnostics`] there.
pub fn per_example_grads(
    obj: &dyn Objective,
    theta: &ParamVector,
    cap: usize,
) -> Result<Vec<ParamVector>> {
    let n = obj.num_examples();
    if n > cap {
        return Err(Error::rejected(format!(
            "{n} examples exceed the exact per-example cap {cap}; use a subsampled estimate"
        )));
    }
    per_example_grads_for(obj, theta, &full_batch(n))
}

/// Hessian-vector product by central differences of the gradient.
///
/// Uses `r = eps·(1+‖θ‖)/‖v‖` and returns `(∇L(θ+rv) − ∇L(θ−rv)) / 2r`.
pub fn hvp(
    obj: &dyn Objective,
    theta: &ParamVector,
    v: &[f64],
    batch: &[usize],
    eps: f64,
) -> Result<ParamVector> {
    let mut out = vec![0.0; theta.len()];
    hvp_into(obj, theta.values(), v, batch, eps, &mut out)?;
    Ok(theta.with_values(out))
}

pub(crate) fn hvp_into(
    obj: &dyn Objective,
    theta: &[f64],
    v: &[f64],
    batch: &[usize],
    eps: f64,
    out: &mut [f64],
) -> Result<()> {
    check_theta(theta, obj.dim())?;
    if v.len() != theta.len() {
        return Err(Error::config("direction length does not match parameters"));
    }
    let vnorm = crate::numeric::norm(v);
    if vnorm == 0.0 {
        return Err(Error::rejected("Hessian-vector product with a zero direction"));
    }
    let r = eps * (1.0 + crate::numeric::norm(theta)) / vnorm;
    let plus: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t + r * d).collect();
    let minus: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t - r * d).collect();
    let mut g_minus = vec![0.0; theta.len()];
    obj.loss_grad(&plus, batch, out)?;
    obj.loss_grad(&minus, batch, &mut g_minus)?;
    for (o, gm) in out.iter_mut().zip(&g_minus) {
        *o = (*o - gm) / (2.0 * r);
    }
    Ok(())
}
