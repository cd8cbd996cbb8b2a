//! Batch normalization and an MLP whose last layer is batch-normalized.

use std::sync::Arc;

use rand::Rng as _;

use super::loss::nll;
use super::mlp::{backward_into, forward_into, Workspace};
use super::{check_batch, check_theta, init_weights, Block, Dataset, InitScheme, MlpSpec, Objective, ParamVector};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Conventional BN stabilizer.
pub const DEFAULT_BN_EPSILON: f64 = 1e-5;

/// Trainable scale `a` and shift `b` applied after normalizing a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub epsilon: f64,
    pub batch_size: usize,
}

impl BatchNormLayer {
    pub fn new(scale: Vec<f64>, shift: Vec<f64>, epsilon: f64, batch_size: usize) -> Result<Self> {
        if scale.len() != shift.len() || scale.is_empty() {
            return Err(Error::config("BN scale and shift must have the same positive length"));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::config(format!("BN epsilon must be positive, got {epsilon}")));
        }
        if batch_size < 2 {
            return Err(Error::config(format!(
                "batch normalization needs a batch of at least 2, got {batch_size}"
            )));
        }
        Ok(Self {
            scale,
            shift,
            epsilon,
            batch_size,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormOutput {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// `x̂ⁱ`, one row per batch element.
    pub normalized: Vec<Vec<f64>>,
    /// `a·x̂ⁱ + b`.
    pub output: Vec<Vec<f64>>,
}

/// Normalizes each coordinate by the batch mean and biased batch variance,
/// `x̂ = (x − μ_B)/√(σ_B² + ε)`, then applies `a·x̂ + b`.
///
/// Every coordinate satisfies `|x̂| ≤ √(m−1) < √m`.
pub fn batchnorm_forward(layer: &BatchNormLayer, batch: &[Vec<f64>]) -> Result<BatchNormOutput> {
    if batch.len() != layer.batch_size {
        return Err(Error::rejected(format!(
            "batch has {} elements, layer expects {}",
            batch.len(),
            layer.batch_size
        )));
    }
    let d = layer.scale.len();
    if batch.iter().any(|x| x.len() != d) {
        return Err(Error::config(format!("BN inputs must have dimension {d}")));
    }
    let flat: Vec<f64> = batch.iter().flatten().copied().collect();
    let mut xhat = vec![0.0; flat.len()];
    let (mean, var) = normalize(&flat, batch.len(), d, layer.epsilon, &mut xhat);
    let normalized: Vec<Vec<f64>> = xhat.chunks(d).map(<[f64]>::to_vec).collect();
    let output = normalized
        .iter()
        .map(|row| {
            row.iter()
                .zip(&layer.scale)
                .zip(&layer.shift)
                .map(|((x, a), b)| a * x + b)
                .collect()
        })
        .collect();
    Ok(BatchNormOutput {
        mean,
        variance: var,
        normalized,
        output,
    })
}

/// Column statistics of an `m × d` row-major batch; writes `x̂` into `out`.
fn normalize(x: &[f64], m: usize, d: usize, eps: f64, out: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; d];
    for row in x.chunks(d) {
        for (mu, v) in mean.iter_mut().zip(row) {
            *mu += v;
        }
    }
    mean.iter_mut().for_each(|mu| *mu /= m as f64);
    let mut var = vec![0.0; d];
    for row in x.chunks(d) {
        for ((s, v), mu) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - mu) * (v - mu);
        }
    }
    var.iter_mut().for_each(|s| *s /= m as f64);
    for (orow, row) in out.chunks_mut(d).zip(x.chunks(d)) {
        for k in 0..d {
            orow[k] = (row[k] - mean[k]) / (var[k] + eps).sqrt();
        }
    }
    (mean, var)
}

/// Batch-level forward values of a [`BnMlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct BnForward {
    pub batch_size: usize,
    pub classes: usize,
    /// `m × d` normalized pre-logits.
    pub normalized: Vec<f64>,
    /// `m × d` logits `a·x̂ + b`.
    pub logits: Vec<f64>,
}

impl BnForward {
    pub fn max_abs_normalized(&self) -> f64 {
        self.normalized.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// MLP whose output layer is followed by batch normalization with trainable
/// per-class scale `a_L` and shift `b_L`. Parameters are
/// `W_0…W_{L−1}, a_L, b_L`. The loss of a batch depends on the batch jointly,
/// so every batch needs at least two examples.
#[derive(Debug, Clone)]
pub struct BnMlp {
    spec: MlpSpec,
    data: Arc<Dataset>,
    epsilon: f64,
    blocks: Arc<[Block]>,
}

impl BnMlp {
    pub fn new(spec: MlpSpec, data: Arc<Dataset>, epsilon: f64) -> Result<Self> {
        if data.dim() != spec.input_dim() || data.num_classes() != spec.output_dim() {
            return Err(Error::config(format!(
                "dataset ({}-dim, {} classes) does not fit widths {:?}",
                data.dim(),
                data.num_classes(),
                spec.widths()
            )));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::config(format!("BN epsilon must be positive, got {epsilon}")));
        }
        let d = spec.output_dim();
        let mut blocks = spec.blocks();
        blocks.push(Block::Vector { len: d });
        blocks.push(Block::Vector { len: d });
        Ok(Self {
            spec,
            data,
            epsilon,
            blocks: Arc::from(blocks),
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Block index of the BN scale `a_L`.
    pub fn scale_block(&self) -> usize {
        self.spec.num_layers()
    }

    /// Block index of the BN shift `b_L`.
    pub fn shift_block(&self) -> usize {
        self.spec.num_layers() + 1
    }

    /// Weights under `weights`, `a_L ~ Uniform[−scale_bound, scale_bound]`
    /// per coordinate, `b_L = 0`.
    pub fn init(&self, weights: InitScheme, scale_bound: f64, rng: &mut Rng) -> Result<ParamVector> {
        let w = init_weights(&self.spec, weights, rng)?;
        let d = self.spec.output_dim();
        let mut values = w.into_values();
        for _ in 0..d {
            values.push(rng.gen_range(-scale_bound..=scale_bound));
        }
        values.extend(std::iter::repeat(0.0).take(d));
        ParamVector::new(values, Arc::clone(&self.blocks))
    }

    fn check(&self, theta: &[f64], batch: &[usize]) -> Result<()> {
        check_theta(theta, self.dim())?;
        check_batch(batch, self.data.len())?;
        if batch.len() < 2 {
            return Err(Error::rejected(format!(
                "batch normalization needs a batch of at least 2, got {}",
                batch.len()
            )));
        }
        Ok(())
    }

    fn forward_all(&self, theta: &[f64], batch: &[usize]) -> (Vec<Workspace>, BnForward, Vec<f64>) {
        let layers = self.spec.num_layers();
        let d = self.spec.output_dim();
        let m = batch.len();
        let mut spaces = Vec::with_capacity(m);
        let mut pre = Vec::with_capacity(m * d);
        for &i in batch {
            let mut ws = Workspace::new(self.spec.widths());
            forward_into(&self.spec, theta, self.data.input(i), &mut ws);
            pre.extend_from_slice(ws.x(layers));
            spaces.push(ws);
        }
        let mut xhat = vec![0.0; m * d];
        let (_, var) = normalize(&pre, m, d, self.epsilon, &mut xhat);
        let nw = self.spec.num_params();
        let a = &theta[nw..nw + d];
        let b = &theta[nw + d..nw + 2 * d];
        let logits: Vec<f64> = xhat
            .chunks(d)
            .flat_map(|row| (0..d).map(move |k| a[k] * row[k] + b[k]))
            .collect();
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        (
            spaces,
            BnForward {
                batch_size: m,
                classes: d,
                normalized: xhat,
                logits,
            },
            inv_std,
        )
    }

    /// Forward pass of a batch, exposing `x̂` and the logits.
    pub fn forward_batch(&self, theta: &[f64], batch: &[usize]) -> Result<BnForward> {
        self.check(theta, batch)?;
        Ok(self.forward_all(theta, batch).1)
    }
}

impl Objective for BnMlp {
    fn blocks(&self) -> Arc<[Block]> {
        Arc::clone(&self.blocks)
    }

    fn num_examples(&self) -> usize {
        self.data.len()
    }

    fn loss(&self, theta: &[f64], batch: &[usize]) -> Result<f64> {
        self.check(theta, batch)?;
        let (_, fwd, _) = self.forward_all(theta, batch);
        let d = fwd.classes;
        let total: f64 = batch
            .iter()
            .zip(fwd.logits.chunks(d))
            .map(|(&i, row)| nll(row, self.data.label(i), None))
            .sum();
        let loss = total / batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::non_finite("BN-MLP loss"));
        }
        Ok(loss)
    }

    fn loss_grad(&self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64> {
        self.check(theta, batch)?;
        grad.fill(0.0);
        let (mut spaces, fwd, inv_std) = self.forward_all(theta, batch);
        let d = fwd.classes;
        let m = batch.len();
        let nw = self.spec.num_params();
        let inv_m = 1.0 / m as f64;

        // ∂L/∂logits, already divided by m.
        let mut dlogits = vec![0.0; m * d];
        let mut total = 0.0;
        for (j, &i) in batch.iter().enumerate() {
            let row = &fwd.logits[j * d..(j + 1) * d];
            total += nll(row, self.data.label(i), Some(&mut dlogits[j * d..(j + 1) * d]));
        }
        dlogits.iter_mut().for_each(|g| *g *= inv_m);

        let a = &theta[nw..nw + d];
        let mut dxhat = vec![0.0; m * d];
        {
            let (ga, gb) = grad[nw..nw + 2 * d].split_at_mut(d);
            for j in 0..m {
                for k in 0..d {
                    let g = dlogits[j * d + k];
                    ga[k] += g * fwd.normalized[j * d + k];
                    gb[k] += g;
                    dxhat[j * d + k] = g * a[k];
                }
            }
        }
        // Back through the normalization, per coordinate.
        let mut mean_dx = vec![0.0; d];
        let mut mean_dx_xhat = vec![0.0; d];
        for j in 0..m {
            for k in 0..d {
                mean_dx[k] += dxhat[j * d + k] * inv_m;
                mean_dx_xhat[k] += dxhat[j * d + k] * fwd.normalized[j * d + k] * inv_m;
            }
        }
        let (gw, _) = grad.split_at_mut(nw);
        for (j, ws) in spaces.iter_mut().enumerate() {
            for k in 0..d {
                ws.delta[k] = inv_std[k]
                    * (dxhat[j * d + k] - mean_dx[k] - fwd.normalized[j * d + k] * mean_dx_xhat[k]);
            }
            backward_into(&self.spec, theta, ws, gw, 1.0);
        }
        let loss = total * inv_m;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::non_finite("BN-MLP loss or gradient"));
        }
        Ok(loss)
    }

    fn describe(&self) -> String {
        let widths: Vec<String> = self.spec.widths().iter().map(|w| w.to_string()).collect();
        format!("bn_mlp(widths={}, epsilon={})", widths.join("-"), self.epsilon)
    }

    fn num_classes(&self) -> Option<usize> {
        Some(self.data.num_classes())
    }
}
