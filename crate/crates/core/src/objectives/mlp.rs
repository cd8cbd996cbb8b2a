//! Bias-free multilayer perceptron `x_{l+1} = σ_{l+1}(W_l x_l)` trained
//! with cross-entropy, with hand-written backpropagation.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::loss::nll;
use super::{check_batch, check_theta, operator_norm, Block, Dataset, Objective, ParamVector};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Coordinate-wise activation with `σ(0) = 0` and Lipschitz constant 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative, with the ReLU subgradient at 0 taken as 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn lipschitz(self) -> f64 {
        1.0
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" | "none" => Ok(Activation::Identity),
            other => Err(Error::config(format!("unknown activation `{other}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        })
    }
}

/// Layer widths `d₀…d_L` and the activation applied after each of the `L`
/// weight matrices. The last activation is the identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    widths: Vec<usize>,
    activations: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::config("an MLP needs at least an input and an output width"));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::config("layer widths must be positive"));
        }
        if activations.len() != widths.len() - 1 {
            return Err(Error::config(format!(
                "{} layers need {} activations, got {}",
                widths.len() - 1,
                widths.len() - 1,
                activations.len()
            )));
        }
        if activations.last() != Some(&Activation::Identity) {
            return Err(Error::config("the last layer's activation must be the identity"));
        }
        Ok(Self { widths, activations })
    }

    /// Hidden layers share `hidden`; the output layer is linear.
    pub fn uniform(widths: Vec<usize>, hidden: Activation) -> Result<Self> {
        let l = widths.len().saturating_sub(1);
        let mut acts = vec![hidden; l];
        if let Some(last) = acts.last_mut() {
            *last = Activation::Identity;
        }
        Self::new(widths, acts)
    }

    /// Number of weight matrices `L`.
    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// `c_σ`, the common coordinate-wise Lipschitz constant.
    pub fn activation_lipschitz(&self) -> f64 {
        self.activations.iter().map(|a| a.lipschitz()).fold(0.0, f64::max)
    }

    /// `W_l` is `d_{l+1} × d_l`.
    pub fn blocks(&self) -> Vec<Block> {
        self.widths
            .windows(2)
            .map(|w| Block::Matrix { rows: w[1], cols: w[0] })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1]).sum()
    }
}

/// Pre-activations `z_1…z_L` and activations `x_0…x_L` of one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub pre_activations: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

/// Forward pass of a single input with all intermediate values.
pub fn mlp_forward(spec: &MlpSpec, theta: &ParamVector, x: &[f64]) -> Result<ForwardTrace> {
    check_theta(theta.values(), spec.num_params())?;
    if x.len() != spec.input_dim() {
        return Err(Error::config(format!(
            "input has dimension {}, network expects {}",
            x.len(),
            spec.input_dim()
        )));
    }
    let n = crate::numeric::norm(x);
    if n > 1.0 + 1e-12 {
        return Err(Error::rejected(format!("input norm {n} exceeds 1")));
    }
    let mut pre = Vec::with_capacity(spec.num_layers());
    let mut acts = vec![x.to_vec()];
    let mut offset = 0;
    for (l, win) in spec.widths.windows(2).enumerate() {
        let (cols, rows) = (win[0], win[1]);
        let w = &theta.values()[offset..offset + rows * cols];
        offset += rows * cols;
        let input = &acts[l];
        let z: Vec<f64> = (0..rows)
            .map(|r| crate::numeric::dot(&w[r * cols..(r + 1) * cols], input))
            .collect();
        let a: Vec<f64> = z.iter().map(|&v| spec.activations[l].apply(v)).collect();
        pre.push(z);
        acts.push(a);
    }
    Ok(ForwardTrace {
        pre_activations: pre,
        activations: acts,
    })
}

/// How weight matrices are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitScheme {
    /// Gaussian, rescaled so `‖W_l‖_op = u·w` with `u ~ Uniform(0,1)`.
    CompactSet { w: f64 },
    /// Gaussian, rescaled so `‖W_l‖_op = norm` exactly.
    OperatorNorm { norm: f64 },
    /// I.i.d. `N(0, std²)` entries.
    Gaussian { std: f64 },
}

/// Draws `W_0…W_{L−1}` for `spec` under `scheme`.
pub fn init_weights(spec: &MlpSpec, scheme: InitScheme, rng: &mut Rng) -> Result<ParamVector> {
    let blocks: Arc<[Block]> = Arc::from(spec.blocks());
    let mut values = Vec::with_capacity(spec.num_params());
    for block in blocks.iter() {
        let Block::Matrix { rows, cols } = *block else { unreachable!() };
        let mut w: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let target = match scheme {
            InitScheme::CompactSet { w: bound } => Some(rng.gen::<f64>() * bound),
            InitScheme::OperatorNorm { norm } => Some(norm),
            InitScheme::Gaussian { std } => {
                w.iter_mut().for_each(|v| *v *= std);
                None
            }
        };
        if let Some(target) = target {
            let current = operator_norm(&w, rows, cols)?.value;
            if current > 0.0 {
                w.iter_mut().for_each(|v| *v *= target / current);
            }
        }
        values.extend(w);
    }
    ParamVector::new(values, blocks)
}

/// MLP over a dataset, mean training-sign cross-entropy per example.
#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    data: Arc<Dataset>,
    blocks: Arc<[Block]>,
}

impl Mlp {
    pub fn new(spec: MlpSpec, data: Arc<Dataset>) -> Result<Self> {
        if data.dim() != spec.input_dim() {
            return Err(Error::config(format!(
                "dataset dimension {} does not match input width {}",
                data.dim(),
                spec.input_dim()
            )));
        }
        if data.num_classes() != spec.output_dim() {
            return Err(Error::config(format!(
                "dataset has {} classes but output width is {}",
                data.num_classes(),
                spec.output_dim()
            )));
        }
        let blocks = Arc::from(spec.blocks());
        Ok(Self { spec, data, blocks })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    /// Summed loss over `batch`, evaluated in feature-major chunks.
    fn batched_loss(&self, theta: &[f64], batch: &[usize]) -> f64 {
        const CHUNK: usize = 64;
        let widths = &self.spec.widths;
        let layers = self.spec.num_layers();
        let d = self.spec.output_dim();
        let maxw = *widths.iter().max().unwrap();
        let mut cur = vec![0.0; maxw * CHUNK];
        let mut next = vec![0.0; maxw * CHUNK];
        let mut logits = vec![0.0; d];
        let mut total = 0.0;
        for chunk in batch.chunks(CHUNK) {
            let k = chunk.len();
            for (e, &i) in chunk.iter().enumerate() {
                for (c, &v) in self.data.input(i).iter().enumerate() {
                    cur[c * k + e] = v;
                }
            }
            let mut offset = 0;
            for l in 0..layers {
                let (cols, rows) = (widths[l], widths[l + 1]);
                let w = &theta[offset..offset + rows * cols];
                offset += rows * cols;
                let out = &mut next[..rows * k];
                out.fill(0.0);
                for r in 0..rows {
                    let o = &mut out[r * k..(r + 1) * k];
                    for c in 0..cols {
                        let wv = w[r * cols + c];
                        for (oo, ii) in o.iter_mut().zip(&cur[c * k..(c + 1) * k]) {
                            *oo += wv * ii;
                        }
                    }
                }
                let act = self.spec.activations[l];
                if act != Activation::Identity {
                    out.iter_mut().for_each(|v| *v = act.apply(*v));
                }
                std::mem::swap(&mut cur, &mut next);
            }
            for (e, &i) in chunk.iter().enumerate() {
                for (j, lg) in logits.iter_mut().enumerate() {
                    *lg = cur[j * k + e];
                }
                total += nll(&logits, self.data.label(i), None);
            }
        }
        total
    }
}

/// Scratch space for repeated forward/backward passes.
pub(crate) struct Workspace {
    /// `x_0…x_L` concatenated.
    pub xs: Vec<f64>,
    /// `z_1…z_L` concatenated.
    pub zs: Vec<f64>,
    pub x_off: Vec<usize>,
    pub z_off: Vec<usize>,
    pub delta: Vec<f64>,
    pub delta_prev: Vec<f64>,
}

impl Workspace {
    pub fn new(widths: &[usize]) -> Self {
        let mut x_off = vec![0];
        for w in widths {
            x_off.push(x_off.last().unwrap() + w);
        }
        let mut z_off = vec![0];
        for w in &widths[1..] {
            z_off.push(z_off.last().unwrap() + w);
        }
        let maxw = *widths.iter().max().unwrap();
        Self {
            xs: vec![0.0; *x_off.last().unwrap()],
            zs: vec![0.0; *z_off.last().unwrap()],
            x_off,
            z_off,
            delta: vec![0.0; maxw],
            delta_prev: vec![0.0; maxw],
        }
    }

    pub fn x(&self, l: usize) -> &[f64] {
        &self.xs[self.x_off[l]..self.x_off[l + 1]]
    }

    #[cfg(test)]
    pub fn z(&self, l: usize) -> &[f64] {
        // z_l for l ≥ 1
        &self.zs[self.z_off[l - 1]..self.z_off[l]]
    }
}

/// Forward pass into the workspace; returns nothing, logits are `ws.x(L)`.
pub(crate) fn forward_into(spec: &MlpSpec, theta: &[f64], input: &[f64], ws: &mut Workspace) {
    let widths = &spec.widths;
    ws.xs[..widths[0]].copy_from_slice(input);
    let mut offset = 0;
    for l in 0..spec.num_layers() {
        let (cols, rows) = (widths[l], widths[l + 1]);
        let w = &theta[offset..offset + rows * cols];
        offset += rows * cols;
        let (head, tail) = ws.xs.split_at_mut(ws.x_off[l + 1]);
        let x_in = &head[ws.x_off[l]..];
        let x_out = &mut tail[..rows];
        let z_out = &mut ws.zs[ws.z_off[l]..ws.z_off[l + 1]];
        let act = spec.activations[l];
        for r in 0..rows {
            let row = &w[r * cols..(r + 1) * cols];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x_in) {
                acc += a * b;
            }
            z_out[r] = acc;
            x_out[r] = act.apply(acc);
        }
    }
}

/// Backward pass given `∂ℓ/∂x_L` in `ws.delta[..d_L]`; accumulates
/// `scale · ∂ℓ/∂W_l` into `grad`.
pub(crate) fn backward_into(
    spec: &MlpSpec,
    theta: &[f64],
    ws: &mut Workspace,
    grad: &mut [f64],
    scale: f64,
) {
    let widths = &spec.widths;
    let layers = spec.num_layers();
    let mut offsets = Vec::with_capacity(layers + 1);
    offsets.push(0);
    for l in 0..layers {
        offsets.push(offsets[l] + widths[l] * widths[l + 1]);
    }
    // δ for z_L
    {
        let zl = &ws.zs[ws.z_off[layers - 1]..ws.z_off[layers]];
        let act = spec.activations[layers - 1];
        for (d, &z) in ws.delta[..widths[layers]].iter_mut().zip(zl) {
            *d *= act.derivative(z);
        }
    }
    for l in (0..layers).rev() {
        let (cols, rows) = (widths[l], widths[l + 1]);
        let gw = &mut grad[offsets[l]..offsets[l + 1]];
        let x_in = &ws.xs[ws.x_off[l]..ws.x_off[l + 1]];
        for r in 0..rows {
            let d = scale * ws.delta[r];
            if d == 0.0 {
                continue;
            }
            for (g, x) in gw[r * cols..(r + 1) * cols].iter_mut().zip(x_in) {
                *g += d * x;
            }
        }
        if l == 0 {
            break;
        }
        let w = &theta[offsets[l]..offsets[l + 1]];
        let prev = &mut ws.delta_prev[..cols];
        prev.fill(0.0);
        for r in 0..rows {
            let d = ws.delta[r];
            if d == 0.0 {
                continue;
            }
            for (p, wv) in prev.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                *p += wv * d;
            }
        }
        let zl = &ws.zs[ws.z_off[l - 1]..ws.z_off[l]];
        let act = spec.activations[l - 1];
        for (p, &z) in prev.iter_mut().zip(zl) {
            *p *= act.derivative(z);
        }
        std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
    }
}

impl Objective for Mlp {
    fn blocks(&self) -> Arc<[Block]> {
        Arc::clone(&self.blocks)
    }

    fn num_examples(&self) -> usize {
        self.data.len()
    }

    fn loss(&self, theta: &[f64], batch: &[usize]) -> Result<f64> {
        check_theta(theta, self.spec.num_params())?;
        check_batch(batch, self.data.len())?;
        let loss = self.batched_loss(theta, batch) / batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::non_finite("MLP loss"));
        }
        Ok(loss)
    }

    fn loss_grad(&self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64> {
        check_theta(theta, self.spec.num_params())?;
        check_batch(batch, self.data.len())?;
        grad.fill(0.0);
        let mut ws = Workspace::new(&self.spec.widths);
        let layers = self.spec.num_layers();
        let d = self.spec.output_dim();
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        let mut dlogits = vec![0.0; d];
        for &i in batch {
            forward_into(&self.spec, theta, self.data.input(i), &mut ws);
            total += nll(ws.x(layers), self.data.label(i), Some(&mut dlogits));
            ws.delta[..d].copy_from_slice(&dlogits);
            backward_into(&self.spec, theta, &mut ws, grad, scale);
        }
        let loss = total * scale;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::non_finite("MLP loss or gradient"));
        }
        Ok(loss)
    }

    fn describe(&self) -> String {
        let widths: Vec<String> = self.spec.widths.iter().map(|w| w.to_string()).collect();
        let acts: Vec<String> = self.spec.activations.iter().map(|a| a.to_string()).collect();
        format!("mlp(widths={}, activations={})", widths.join("-"), acts.join(","))
    }

    fn num_classes(&self) -> Option<usize> {
        Some(self.data.num_classes())
    }
}
