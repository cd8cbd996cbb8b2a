use std::f64::consts::SQRT_2;
use std::sync::Arc;

use serde::Serialize;

use super::verdict::{Report, Verdict};
use crate::dynamics::{Runner, SamplingMode, Schedule, UpdateMap};
use crate::error::{Error, Result};
use crate::objectives::{full_loss, init_weights, matrix_operator_norm, Activation, Dataset, InitScheme, Mlp, MlpSpec, ParamVector};
use crate::rng::derived_rng;

/// Lipschitz constant of the cross-entropy in the logits.
pub const CE_LIPSCHITZ: f64 = SQRT_2;

/// Slack on the operator-norm containment check.
pub const CONTAINMENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompactDomainConfig {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub gamma: f64,
    pub eta: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub sampling: SamplingMode,
    pub seed: u64,
    /// Initial `‖W_l‖_op` as a multiple of `w`; `None` draws `u·w` with
    /// `u ~ Uniform(0,1)`.
    pub init_multiple: Option<f64>,
    /// Number of evenly spaced entries kept in the per-step trace.
    pub trace_points: usize,
}

impl Default for CompactDomainConfig {
    fn default() -> Self {
        Self {
            widths: vec![2, 8, 8, 3],
            activation: Activation::Relu,
            gamma: 1.0,
            eta: 1.0,
            steps: 100_000,
            batch_size: 8,
            sampling: SamplingMode::Iid,
            seed: 0,
            init_multiple: None,
            trace_points: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompactTracePoint {
    pub step: usize,
    pub max_op_norm: f64,
    pub abs_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompactDomainReport {
    pub config: CompactDomainConfig,
    pub num_layers: usize,
    pub c_sigma: f64,
    pub c_ell: f64,
    /// `(γ / (c_ℓ c_σ^L))^{1/(L−2)}`
    pub w: f64,
    /// `log d + (γ / (c_ℓ c_σ²))^{L/(L−2)}`
    pub loss_bound: f64,
    pub step_size_ok: bool,
    pub initial_max_op_norm: f64,
    pub max_op_norm: f64,
    pub max_abs_loss: f64,
    pub op_norm_violations: usize,
    pub loss_violations: usize,
    /// First step from which every later iterate lies in the set.
    pub inside_from: Option<usize>,
    pub steps_checked: usize,
    pub trace: Vec<CompactTracePoint>,
    pub verdict: Verdict,
}

impl Report for CompactDomainReport {
    fn name(&self) -> &'static str {
        "compact"
    }

    fn verdict(&self) -> Verdict {
        self.verdict
    }

    fn summary(&self) -> String {
        format!(
            "{} compact domain: max ‖W_l‖_op {:.6e} vs w {:.6e} (margin {:.3e}, {} violations); max |L_S| {:.6e} vs {:.6e} (margin {:.3e}, {} violations){}",
            self.verdict,
            self.max_op_norm,
            self.w,
            self.w + CONTAINMENT_TOL - self.max_op_norm,
            self.op_norm_violations,
            self.max_abs_loss,
            self.loss_bound,
            self.loss_bound - self.max_abs_loss,
            self.loss_violations,
            if self.step_size_ok { "" } else { "; step size exceeds 1/γ, containment not asserted" }
        )
    }
}

/// Radius `w` of the invariant operator-norm ball and the matching loss bound.
pub fn compact_domain_bounds(num_layers: usize, gamma: f64, c_sigma: f64, num_classes: usize) -> Result<(f64, f64)> {
    if num_layers < 3 {
        return Err(Error::Precondition(format!(
            "the compact-domain radius needs at least 3 layers (exponent 1/(L−2)), got L = {num_layers}"
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::Precondition("weight decay must be positive".into()));
    }
    let l = num_layers as f64;
    let w = (gamma / (CE_LIPSCHITZ * c_sigma.powf(l))).powf(1.0 / (l - 2.0));
    let loss = (num_classes as f64).ln() + (gamma / (CE_LIPSCHITZ * c_sigma * c_sigma)).powf(l / (l - 2.0));
    Ok((w, loss))
}

fn max_op_norm(theta: &ParamVector, layers: usize) -> Result<f64> {
    (0..layers).try_fold(0.0f64, |m, b| Ok(m.max(matrix_operator_norm(theta, b)?.value)))
}

/// Runs SGD with weight decay from inside (or, in negative-test mode,
/// outside) the operator-norm ball and checks every iterate against the
/// containment and loss bounds.
pub fn check_compact_domain(config: &CompactDomainConfig, data: Arc<Dataset>) -> Result<CompactDomainReport> {
    let spec = MlpSpec::uniform(config.widths.clone(), config.activation)?;
    let layers = spec.num_layers();
    let c_sigma = spec.activation_lipschitz();
    let (w, loss_bound) = compact_domain_bounds(layers, config.gamma, c_sigma, spec.output_dim())?;
    if config.steps == 0 {
        return Err(Error::rejected("at least one step is required"));
    }
    let step_size_ok = config.eta > 0.0 && config.eta <= 1.0 / config.gamma;
    let net = Arc::new(Mlp::new(spec.clone(), data)?);
    let scheme = match config.init_multiple {
        None => InitScheme::CompactSet { w },
        Some(k) => InitScheme::OperatorNorm { norm: k * w },
    };
    let theta0 = init_weights(&spec, scheme, &mut derived_rng(config.seed, 0))?;
    let map = UpdateMap::new(net.clone(), config.gamma, config.batch_size, config.sampling, config.seed)?;
    let mut runner = Runner::new(&map, Schedule::constant(config.eta), theta0)?;

    let trace_every = (config.steps / config.trace_points.max(1)).max(1);
    let mut trace = Vec::new();
    let (mut max_op, mut max_loss) = (0.0f64, 0.0f64);
    let (mut op_violations, mut loss_violations) = (0, 0);
    let mut inside_from = None;
    let mut initial = 0.0;
    for t in 0..=config.steps {
        let theta = runner.theta();
        let op = max_op_norm(theta, layers)?;
        let loss = full_loss(net.as_ref(), theta.values())?.abs();
        if t == 0 {
            initial = op;
        }
        let inside = op <= w + CONTAINMENT_TOL;
        match (inside, inside_from) {
            (true, None) => inside_from = Some(t),
            (false, _) => inside_from = None,
            _ => {}
        }
        op_violations += usize::from(!inside);
        loss_violations += usize::from(loss > loss_bound);
        max_op = max_op.max(op);
        max_loss = max_loss.max(loss);
        if t % trace_every == 0 || t == config.steps {
            trace.push(CompactTracePoint { step: t, max_op_norm: op, abs_loss: loss });
        }
        if t < config.steps {
            runner.advance()?;
        }
    }
    let holds = op_violations == 0 && loss_violations == 0;
    let verdict = if !step_size_ok || config.init_multiple.is_some_and(|k| k > 1.0) {
        Verdict::NotApplicable
    } else {
        Verdict::from_bool(holds)
    };
    Ok(CompactDomainReport {
        config: config.clone(),
        num_layers: layers,
        c_sigma,
        c_ell: CE_LIPSCHITZ,
        w,
        loss_bound,
        step_size_ok,
        initial_max_op_norm: initial,
        max_op_norm: max_op,
        max_abs_loss: max_loss,
        op_norm_violations: op_violations,
        loss_violations,
        inside_from,
        steps_checked: config.steps + 1,
        trace,
        verdict,
    })
}
