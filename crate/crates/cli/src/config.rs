//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ergodyn::diagnostics::PowerIteration;
use ergodyn::dynamics::{SamplingMode, Schedule};
use ergodyn::measures::ChangeEstimator;
use ergodyn::objectives::{Activation, InitScheme};
use ergodyn::theorems::{InvarianceTolerance, DEFAULT_C_GRID, STATIONARY_EPS};
use serde::Serialize;

use crate::error::CliError;

/// Every key the parser accepts.
pub const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "objective",
    "quadratic_diag",
    "dataset",
    "label_column",
    "classes",
    "input_dim",
    "per_class",
    "separation",
    "data_seed",
    "widths",
    "activations",
    "init",
    "theta0",
    "eta0",
    "schedule",
    "gamma",
    "batch_size",
    "sampling",
    "steps",
    "stride",
    "seed",
    "out_dir",
    "save_trajectory",
    "diag_every",
    "sample_size",
    "sharpness",
    "sharpness_tol",
    "sharpness_iters",
    "epoch_losses",
    "precision_sizes",
    "precision_resamples",
    "observable",
    "probe_size",
    "observable_bound",
    "confidence",
    "change_grid",
    "estimator",
    "burn_in",
    "measure_stride",
    "residual_resamples",
    "projections",
    "theorem",
    "invariance_window",
    "invariance_tol",
    "c_grid",
    "samples",
    "stationary_eps",
    "curvature_pairs",
    "init_multiple",
    "trace_points",
    "bn_epsilon",
    "weight_std",
    "trials",
    "ce_classes",
    "max_c",
    "sweep_axis",
    "sweep_values",
    "workers",
];

/// The file as written: ordered `(key, value)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RawConfig {
    pub entries: Vec<(String, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::usage(format!("line {}: expected `key = value`, got `{line}`", lineno + 1)));
            };
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return Err(CliError::usage(format!("line {}: unknown key `{key}`", lineno + 1)));
            }
            if entries.iter().any(|(k, _)| k == key) {
                return Err(CliError::usage(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            entries.push((key.to_string(), value.to_string()));
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Replaces or appends `key`.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }
}

impl fmt::Display for RawConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    Diagnose,
    Measure,
    Theorem,
    Sweep,
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "simulate" => Ok(Self::Simulate),
            "diagnose" => Ok(Self::Diagnose),
            "measure" => Ok(Self::Measure),
            "theorem" => Ok(Self::Theorem),
            "sweep" => Ok(Self::Sweep),
            _ => Err(format!("unknown experiment `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    SinProduct,
    Quadratic,
    Mlp,
    BnMlp,
}

impl FromStr for ObjectiveKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sin_product" => Ok(Self::SinProduct),
            "quadratic" => Ok(Self::Quadratic),
            "mlp" => Ok(Self::Mlp),
            "bn_mlp" => Ok(Self::BnMlp),
            _ => Err(format!("unknown objective `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Blobs,
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremKind {
    Compact,
    Bn,
    SmallerStep,
    CeLemma,
}

impl FromStr for TheoremKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "compact" => Ok(Self::Compact),
            "bn" => Ok(Self::Bn),
            "smallerstep" | "smaller_step" => Ok(Self::SmallerStep),
            "celemma" | "ce_lemma" => Ok(Self::CeLemma),
            _ => Err(format!("unknown theorem `{s}` (expected compact, bn, smallerstep or celemma)")),
        }
    }
}

impl TheoremKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Compact => "compact",
            Self::Bn => "bn",
            Self::SmallerStep => "smallerstep",
            Self::CeLemma => "celemma",
        }
    }
}

/// Initial point.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    /// Network weight scheme.
    Weights { scheme: InitScheme },
    /// Each coordinate uniform in `[low, high]`.
    Uniform { low: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    Loss,
    GradNorm,
    /// Loss on `probe_size` evenly spaced examples.
    ProbeLoss,
}

impl FromStr for ObservableKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "loss" => Ok(Self::Loss),
            "grad_norm" => Ok(Self::GradNorm),
            "probe_loss" => Ok(Self::ProbeLoss),
            _ => Err(format!("unknown observable `{s}` (expected loss, grad_norm or probe_loss)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Seed,
    Eta,
    SampleSize,
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "seed" => Ok(Self::Seed),
            "eta" => Ok(Self::Eta),
            "sample_size" => Ok(Self::SampleSize),
            _ => Err(format!("unknown sweep axis `{s}` (expected seed, eta or sample_size)")),
        }
    }
}

/// Typed view of a [`RawConfig`] with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub objective: ObjectiveKind,
    pub quadratic_diag: Vec<f64>,
    pub dataset: DatasetSource,
    pub label_column: String,
    pub classes: usize,
    pub input_dim: usize,
    pub per_class: usize,
    pub separation: f64,
    pub data_seed: u64,
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub init: InitSpec,
    pub theta0: Option<Vec<f64>>,
    pub eta0: f64,
    pub schedule: Schedule,
    pub gamma: f64,
    pub batch_size: usize,
    pub sampling: SamplingMode,
    pub steps: usize,
    pub stride: Option<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub save_trajectory: bool,

    pub diag_every: usize,
    pub sample_size: Option<usize>,
    pub sharpness: Option<PowerIteration>,
    pub epoch_losses: bool,
    pub precision_sizes: Vec<usize>,
    pub precision_resamples: usize,

    pub observable: ObservableKind,
    pub probe_size: usize,
    pub observable_bound: Option<f64>,
    pub confidence: f64,
    pub change_grid: Vec<usize>,
    pub estimator: ChangeEstimator,
    pub burn_in: Option<usize>,
    pub measure_stride: usize,
    pub residual_resamples: usize,
    pub projections: usize,

    pub theorem: Option<TheoremKind>,
    pub invariance_window: usize,
    pub invariance_tol: InvarianceTolerance,
    pub c_grid: Vec<f64>,
    pub samples: usize,
    pub stationary_eps: f64,
    pub curvature_pairs: usize,
    pub init_multiple: Option<f64>,
    pub trace_points: usize,
    pub bn_epsilon: f64,
    pub weight_std: f64,
    pub trials: usize,
    pub ce_classes: Vec<usize>,
    pub max_c: f64,

    pub sweep_axis: Option<SweepAxis>,
    pub sweep_values: Vec<String>,
    pub workers: usize,
}

fn bad(key: &str, value: &str, why: impl fmt::Display) -> CliError {
    CliError::usage(format!("invalid value `{value}` for `{key}`: {why}"))
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| bad(key, value, e)))
        .collect()
}

fn flag(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

/// `gaussian:<std>`, `compact:<w>`, `opnorm:<norm>` or `uniform:<low>:<high>`.
fn parse_init(value: &str) -> Result<InitSpec, CliError> {
    let parts: Vec<&str> = value.split(':').map(str::trim).collect();
    let num = |s: &str| scalar::<f64>("init", s);
    Ok(match parts.as_slice() {
        ["gaussian", std] => InitSpec::Weights { scheme: InitScheme::Gaussian { std: num(std)? } },
        ["compact", w] => InitSpec::Weights { scheme: InitScheme::CompactSet { w: num(w)? } },
        ["opnorm", n] => InitSpec::Weights { scheme: InitScheme::OperatorNorm { norm: num(n)? } },
        ["uniform", lo, hi] => InitSpec::Uniform { low: num(lo)?, high: num(hi)? },
        _ => return Err(bad("init", value, "expected gaussian:<std>, compact:<w>, opnorm:<norm> or uniform:<low>:<high>")),
    })
}

/// A number, or `iqr:<fraction>`.
fn parse_tolerance(value: &str) -> Result<InvarianceTolerance, CliError> {
    match value.split_once(':') {
        Some(("iqr", f)) => Ok(InvarianceTolerance::IqrFraction { fraction: scalar("invariance_tol", f)? }),
        None => Ok(InvarianceTolerance::Absolute { tol: scalar("invariance_tol", value)? }),
        _ => Err(bad("invariance_tol", value, "expected a number or iqr:<fraction>")),
    }
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, CliError> {
        let get = |k: &str| raw.get(k);
        let objective: ObjectiveKind = match get("objective") {
            Some(v) => scalar("objective", v)?,
            None => ObjectiveKind::Mlp,
        };
        let steps: usize = get("steps").map_or(Ok(1000), |v| scalar("steps", v))?;
        let eta0: f64 = get("eta0").map_or(Ok(0.1), |v| scalar("eta0", v))?;
        let schedule = match get("schedule") {
            Some(v) => Schedule::parse(v, eta0, steps).map_err(|e| bad("schedule", v, e))?,
            None => Schedule::constant(eta0),
        };
        schedule.validate().map_err(|e| bad("eta0", &eta0.to_string(), e))?;
        let widths: Vec<usize> = get("widths").map_or(Ok(vec![2, 16, 16, 4]), |v| list("widths", v))?;
        let activations: Vec<Activation> = get("activations").map_or(Ok(vec![Activation::Relu]), |v| list("activations", v))?;
        let default_sampling = match objective {
            ObjectiveKind::SinProduct | ObjectiveKind::Quadratic => SamplingMode::FullBatch,
            _ => SamplingMode::Iid,
        };
        let sampling: SamplingMode = get("sampling").map_or(Ok(default_sampling), |v| scalar("sampling", v))?;
        let default_init = match objective {
            ObjectiveKind::SinProduct => InitSpec::Uniform { low: 0.0, high: std::f64::consts::PI },
            ObjectiveKind::Quadratic => InitSpec::Uniform { low: -1.0, high: 1.0 },
            _ => InitSpec::Weights { scheme: InitScheme::Gaussian { std: 0.5 } },
        };
        let init = match get("init") {
            Some(v) => parse_init(v)?,
            None => default_init,
        };
        let sharpness_on = get("sharpness").map_or(Ok(true), |v| flag("sharpness", v))?;
        let sharpness = if sharpness_on {
            let d = PowerIteration::default();
            Some(PowerIteration {
                tol: get("sharpness_tol").map_or(Ok(d.tol), |v| scalar("sharpness_tol", v))?,
                max_iters: get("sharpness_iters").map_or(Ok(d.max_iters), |v| scalar("sharpness_iters", v))?,
            })
        } else {
            None
        };
        let dataset = match get("dataset") {
            None | Some("blobs") => DatasetSource::Blobs,
            Some(path) => DatasetSource::Csv { path: PathBuf::from(path) },
        };
        let config = Self {
            experiment: get("experiment").map_or(Ok(ExperimentKind::Diagnose), |v| scalar("experiment", v))?,
            objective,
            quadratic_diag: get("quadratic_diag").map_or(Ok(vec![1.0]), |v| list("quadratic_diag", v))?,
            dataset,
            label_column: get("label_column").unwrap_or("label").to_string(),
            classes: get("classes").map_or(Ok(*widths.last().unwrap_or(&2)), |v| scalar("classes", v))?,
            input_dim: get("input_dim").map_or(Ok(*widths.first().unwrap_or(&2)), |v| scalar("input_dim", v))?,
            per_class: get("per_class").map_or(Ok(50), |v| scalar("per_class", v))?,
            separation: get("separation").map_or(Ok(2.0), |v| scalar("separation", v))?,
            data_seed: get("data_seed").map_or(Ok(0), |v| scalar("data_seed", v))?,
            widths,
            activations,
            init,
            theta0: get("theta0").map(|v| list("theta0", v)).transpose()?,
            eta0,
            schedule,
            gamma: get("gamma").map_or(Ok(0.0), |v| scalar("gamma", v))?,
            batch_size: get("batch_size").map_or(Ok(16), |v| scalar("batch_size", v))?,
            sampling,
            steps,
            stride: get("stride").map(|v| scalar("stride", v)).transpose()?,
            seed: get("seed").map_or(Ok(0), |v| scalar("seed", v))?,
            out_dir: PathBuf::from(get("out_dir").unwrap_or("out")),
            save_trajectory: get("save_trajectory").map_or(Ok(true), |v| flag("save_trajectory", v))?,
            diag_every: get("diag_every").map_or(Ok(1), |v| scalar("diag_every", v))?,
            sample_size: get("sample_size").map(|v| scalar("sample_size", v)).transpose()?,
            sharpness,
            epoch_losses: get("epoch_losses").map_or(Ok(sampling == SamplingMode::EpochShuffle), |v| flag("epoch_losses", v))?,
            precision_sizes: get("precision_sizes").map_or(Ok(Vec::new()), |v| list("precision_sizes", v))?,
            precision_resamples: get("precision_resamples").map_or(Ok(20), |v| scalar("precision_resamples", v))?,
            observable: get("observable").map_or(Ok(ObservableKind::Loss), |v| scalar("observable", v))?,
            probe_size: get("probe_size").map_or(Ok(64), |v| scalar("probe_size", v))?,
            observable_bound: get("observable_bound").map(|v| scalar("observable_bound", v)).transpose()?,
            confidence: get("confidence").map_or(Ok(0.1), |v| scalar("confidence", v))?,
            change_grid: get("change_grid").map_or(Ok(Vec::new()), |v| list("change_grid", v))?,
            estimator: match get("estimator") {
                None | Some("resample") => ChangeEstimator::Resample,
                Some("reuse") => ChangeEstimator::Reuse,
                Some(v) => return Err(bad("estimator", v, "expected resample or reuse")),
            },
            burn_in: get("burn_in").map(|v| scalar("burn_in", v)).transpose()?,
            measure_stride: get("measure_stride").map_or(Ok(1), |v| scalar("measure_stride", v))?,
            residual_resamples: get("residual_resamples").map_or(Ok(8), |v| scalar("residual_resamples", v))?,
            projections: get("projections").map_or(Ok(ergodyn::measures::DEFAULT_PROJECTIONS), |v| scalar("projections", v))?,
            theorem: get("theorem").map(|v| scalar("theorem", v)).transpose()?,
            invariance_window: get("invariance_window").map_or(Ok(200), |v| scalar("invariance_window", v))?,
            invariance_tol: get("invariance_tol").map_or(Ok(InvarianceTolerance::default()), parse_tolerance)?,
            c_grid: get("c_grid").map_or(Ok(DEFAULT_C_GRID.to_vec()), |v| list("c_grid", v))?,
            samples: get("samples").map_or(Ok(1000), |v| scalar("samples", v))?,
            stationary_eps: get("stationary_eps").map_or(Ok(STATIONARY_EPS), |v| scalar("stationary_eps", v))?,
            curvature_pairs: get("curvature_pairs").map_or(Ok(0), |v| scalar("curvature_pairs", v))?,
            init_multiple: get("init_multiple").map(|v| scalar("init_multiple", v)).transpose()?,
            trace_points: get("trace_points").map_or(Ok(200), |v| scalar("trace_points", v))?,
            bn_epsilon: get("bn_epsilon").map_or(Ok(ergodyn::objectives::DEFAULT_BN_EPSILON), |v| scalar("bn_epsilon", v))?,
            weight_std: get("weight_std").map_or(Ok(0.5), |v| scalar("weight_std", v))?,
            trials: get("trials").map_or(Ok(10_000), |v| scalar("trials", v))?,
            ce_classes: get("ce_classes").map_or(Ok(vec![2, 10]), |v| list("ce_classes", v))?,
            max_c: get("max_c").map_or(Ok(20.0), |v| scalar("max_c", v))?,
            sweep_axis: get("sweep_axis").map(|v| scalar("sweep_axis", v)).transpose()?,
            sweep_values: get("sweep_values").map_or(Vec::new(), |v| {
                v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
            }),
            workers: get("workers").map_or(Ok(1), |v| scalar("workers", v))?,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.steps == 0 {
            return Err(CliError::usage("`steps` must be positive"));
        }
        if self.diag_every == 0 || self.measure_stride == 0 || self.workers == 0 {
            return Err(CliError::usage("`diag_every`, `measure_stride` and `workers` must be positive"));
        }
        if self.stride == Some(0) {
            return Err(CliError::usage("`stride` must be positive"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(bad("gamma", &self.gamma.to_string(), "weight decay must be a non-negative real"));
        }
        if matches!(self.objective, ObjectiveKind::Mlp | ObjectiveKind::BnMlp)
            && self.activations.len() != 1
            && self.activations.len() + 1 != self.widths.len()
        {
            return Err(CliError::usage(format!(
                "`activations` needs one entry or one per layer ({}), got {}",
                self.widths.len().saturating_sub(1),
                self.activations.len()
            )));
        }
        if let Some(theta0) = &self.theta0 {
            if theta0.iter().any(|v| !v.is_finite()) {
                return Err(CliError::usage("`theta0` entries must be finite"));
            }
        }
        Ok(())
    }

    /// Hidden-layer activation used by the theorem checkers.
    pub fn hidden_activation(&self) -> Activation {
        self.activations[0]
    }
}
