use std::sync::Arc;

use serde::Serialize;

use super::verdict::{Report, Verdict};
use crate::dynamics::{Runner, SamplingMode, Schedule, UpdateMap};
use crate::error::{Error, Result};
use crate::objectives::{Activation, BnMlp, Dataset, InitScheme, MlpSpec, DEFAULT_BN_EPSILON};
use crate::rng::derived_rng;

/// Slack on the scale bound for accumulated rounding.
pub const SCALE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BnConfig {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub gamma: f64,
    pub eta: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub epsilon: f64,
    /// Entry scale of the Gaussian weight initialization.
    pub weight_std: f64,
}

impl Default for BnConfig {
    fn default() -> Self {
        Self {
            widths: vec![2, 8, 3],
            activation: Activation::Relu,
            gamma: 1.0,
            eta: 0.5,
            batch_size: 4,
            steps: 10_000,
            seed: 0,
            epsilon: DEFAULT_BN_EPSILON,
            weight_std: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BnReport {
    pub config: BnConfig,
    pub step_size_ok: bool,
    /// `2√m/γ`
    pub scale_bound: f64,
    /// `√m`
    pub normalized_bound: f64,
    /// `4m/γ + log d`
    pub loss_bound: f64,
    pub max_abs_scale: f64,
    pub max_abs_normalized: f64,
    pub max_abs_loss: f64,
    /// Largest `|b_L|`; the loss bound does not account for the shift.
    pub max_abs_shift: f64,
    pub scale_ok: bool,
    pub normalized_ok: bool,
    pub loss_ok: bool,
    pub verdict: Verdict,
}

impl Report for BnReport {
    fn name(&self) -> &'static str {
        "bn"
    }

    fn verdict(&self) -> Verdict {
        self.verdict
    }

    fn summary(&self) -> String {
        format!(
            "{} batch norm: max |x̂| {:.6e} vs √m {:.6e} (margin {:.3e}); max |a_L| {:.6e} vs {:.6e} (margin {:.3e}); max |L_B| {:.6e} vs {:.6e} (margin {:.3e}){}",
            self.verdict,
            self.max_abs_normalized,
            self.normalized_bound,
            self.normalized_bound - self.max_abs_normalized,
            self.max_abs_scale,
            self.scale_bound,
            self.scale_bound - self.max_abs_scale,
            self.max_abs_loss,
            self.loss_bound,
            self.loss_bound - self.max_abs_loss,
            if self.step_size_ok { "" } else { "; step size exceeds 1/γ, bounds not asserted" }
        )
    }
}

/// `(2√m/γ, √m, 4m/γ + log d)`.
pub fn bn_bounds(batch_size: usize, gamma: f64, num_classes: usize) -> (f64, f64, f64) {
    let m = batch_size as f64;
    (2.0 * m.sqrt() / gamma, m.sqrt(), 4.0 * m / gamma + (num_classes as f64).ln())
}

/// Trains a network whose last layer is batch-normalized and checks the
/// normalized activations, the BN scale and the minibatch loss at every step.
pub fn check_bn_bounds(config: &BnConfig, data: Arc<Dataset>) -> Result<BnReport> {
    if config.batch_size < 2 {
        return Err(Error::Precondition(format!("batch normalization needs m ≥ 2, got {}", config.batch_size)));
    }
    if !(config.gamma > 0.0) {
        return Err(Error::Precondition("weight decay must be positive".into()));
    }
    if config.steps == 0 {
        return Err(Error::rejected("at least one step is required"));
    }
    let spec = MlpSpec::uniform(config.widths.clone(), config.activation)?;
    let d = spec.output_dim();
    let (scale_bound, normalized_bound, loss_bound) = bn_bounds(config.batch_size, config.gamma, d);
    let step_size_ok = config.eta > 0.0 && config.eta <= 1.0 / config.gamma;
    let net = Arc::new(BnMlp::new(spec, data, config.epsilon)?);
    let theta0 = net.init(InitScheme::Gaussian { std: config.weight_std }, scale_bound, &mut derived_rng(config.seed, 0))?;
    let map = UpdateMap::new(net.clone(), config.gamma, config.batch_size, SamplingMode::Iid, config.seed)?;
    let mut runner = Runner::new(&map, Schedule::constant(config.eta), theta0)?;
    let (sb, hb) = (net.scale_block(), net.shift_block());
    let block_max = |theta: &crate::ParamVector, b: usize| theta.block(b).iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut max_scale = block_max(runner.theta(), sb);
    let mut max_shift = block_max(runner.theta(), hb);
    let (mut max_norm, mut max_loss) = (0.0f64, 0.0f64);
    for _ in 0..config.steps {
        let before = runner.theta().clone();
        let record = runner.advance()?;
        let batch = record.batch.expect("i.i.d. sampling yields explicit batches");
        let fwd = net.forward_batch(before.values(), &batch)?;
        max_norm = max_norm.max(fwd.max_abs_normalized());
        max_loss = max_loss.max(record.loss.abs());
        max_scale = max_scale.max(block_max(runner.theta(), sb));
        max_shift = max_shift.max(block_max(runner.theta(), hb));
    }
    let scale_ok = max_scale <= scale_bound + SCALE_TOL;
    let normalized_ok = max_norm <= normalized_bound;
    let loss_ok = max_loss <= loss_bound;
    let verdict = if step_size_ok {
        Verdict::from_bool(scale_ok && normalized_ok && loss_ok)
    } else {
        Verdict::NotApplicable
    };
    Ok(BnReport {
        config: config.clone(),
        step_size_ok,
        scale_bound,
        normalized_bound,
        loss_bound,
        max_abs_scale: max_scale,
        max_abs_normalized: max_norm,
        max_abs_loss: max_loss,
        max_abs_shift: max_shift,
        scale_ok,
        normalized_ok,
        loss_ok,
        verdict,
    })
}
