//! Single experiment runs and their artifacts.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ergodyn::diagnostics::{
    diagnose_trajectory, epoch_loss_series, precision_sweep, write_diagnostics_csv, write_epoch_csv, write_precision_csv,
    DiagnoseOptions, DiagnosticsRecord,
};
use ergodyn::dynamics::{run_trajectory, Trajectory, UpdateMap};
use ergodyn::measures::{
    build_measure, invariance_residual, measure_distance, time_average, vanishing_change, EmpiricalMeasure, Observable,
    VanishingChangeReport,
};
use ergodyn::numeric::mean;
use ergodyn::objectives::{
    full_loss, init_weights, BlobSpec, BnMlp, Dataset, Mlp, MlpSpec, Objective, ParamVector, Quadratic,
    SinProduct,
};
use ergodyn::rng::{derive_seed, derived_rng};
use ergodyn::theorems::{
    bn_bounds, check_bn_bounds, check_ce_lemma, check_compact_domain, check_smaller_step, detect_invariance_in_series,
    BnConfig, CeLemmaConfig, CompactDomainConfig, InvarianceDetection, Report, SmallerStepConfig, SmallerStepReport,
    Verdict,
};
use rand::Rng as _;
use serde::Serialize;

use crate::config::{DatasetSource, ExperimentConfig, ExperimentKind, InitSpec, ObjectiveKind, ObservableKind, RawConfig, TheoremKind};
use crate::error::CliError;

pub const METADATA_JSON: &str = "metadata.json";
pub const DIAGNOSTICS_CSV: &str = "diagnostics.csv";
pub const EPOCHS_CSV: &str = "epochs.csv";
pub const PRECISION_CSV: &str = "precision.csv";
pub const CHANGE_CSV: &str = "vanishing_change.csv";
pub const DATA_CSV: &str = "data.csv";

/// Stream indices under the master seed.
const INIT_STREAM: u64 = 0;
const DIAGNOSTICS_STREAM: u64 = 1;
const MEASURE_STREAM: u64 = 2;
const THEOREM_STREAM: u64 = 3;

/// What a run produced, besides its files.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub summary: String,
    pub diagnostics: Option<Vec<DiagnosticsRecord>>,
    pub diverged: bool,
}

/// A parsed configuration plus command-line overrides.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub raw: RawConfig,
    pub config: ExperimentConfig,
    /// Overrides that change results; recorded in the metadata.
    pub overrides: Vec<(String, String)>,
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    config: &'a [(String, String)],
    overrides: &'a [(String, String)],
    seed: u64,
    objective: String,
    dataset: Option<DatasetInfo>,
    num_params: usize,
    diverged: bool,
    divergence: Option<&'a ergodyn::dynamics::Divergence>,
}

#[derive(Debug, Clone, Serialize)]
struct DatasetInfo {
    source: DatasetSource,
    num_examples: usize,
    input_dim: usize,
    num_classes: usize,
    /// Factor the raw inputs were divided by.
    scale: f64,
}

impl Experiment {
    pub fn new(mut raw: RawConfig, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self, CliError> {
        let mut overrides = Vec::new();
        if let Some(seed) = seed {
            raw.set("seed", seed.to_string());
            overrides.push(("seed".to_string(), seed.to_string()));
        }
        let config = ExperimentConfig::from_raw(&raw)?;
        let out_dir = out.unwrap_or_else(|| config.out_dir.clone());
        Ok(Self { raw, config, overrides, out_dir })
    }

    /// Reads `path` and applies the overrides.
    pub fn from_file(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self, CliError> {
        Self::new(RawConfig::from_file(path)?, seed, out)
    }

    /// Same experiment with one more override, writing into `out_dir`.
    pub fn with_override(&self, key: &str, value: &str, out_dir: PathBuf) -> Result<Self, CliError> {
        let mut raw = self.raw.clone();
        raw.set(key, value);
        let config = ExperimentConfig::from_raw(&raw)?;
        let mut overrides = self.overrides.clone();
        overrides.retain(|(k, _)| k != key);
        overrides.push((key.to_string(), value.to_string()));
        Ok(Self { raw, config, overrides, out_dir })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn create_out_dir(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", self.out_dir.display())))
    }

    fn write_metadata(&self, command: &str, problem: &Problem, traj: Option<&Trajectory>) -> Result<(), CliError> {
        let divergence = traj.and_then(Trajectory::divergence);
        let meta = Metadata {
            command,
            config: &self.raw.entries,
            overrides: &self.overrides,
            seed: self.config.seed,
            objective: problem.objective.describe(),
            dataset: problem.dataset_info.clone(),
            num_params: problem.objective.dim(),
            diverged: divergence.is_some(),
            divergence,
        };
        write_json(&self.path(METADATA_JSON), &meta)
    }

    /// Runs `kind`; `theorem` names the checker for theorem runs.
    pub fn run(&self, kind: ExperimentKind, theorem: Option<TheoremKind>) -> Result<RunOutcome, CliError> {
        self.create_out_dir()?;
        match kind {
            ExperimentKind::Simulate => self.simulate_only(),
            ExperimentKind::Diagnose => self.diagnose(),
            ExperimentKind::Measure => self.measure(),
            ExperimentKind::Theorem => {
                let which = theorem
                    .or(self.config.theorem)
                    .ok_or_else(|| CliError::usage("no theorem given (compact, bn, smallerstep or celemma)"))?;
                self.theorem(which)
            }
            ExperimentKind::Sweep => crate::sweep::sweep(self),
        }
    }

    fn simulate(&self) -> Result<(Problem, UpdateMap, Trajectory), CliError> {
        let cfg = &self.config;
        let problem = Problem::build(cfg)?;
        let map = UpdateMap::new(problem.objective.clone(), cfg.gamma, cfg.batch_size, cfg.sampling, cfg.seed)?;
        let theta0 = problem.initial_point(cfg)?;
        let traj = run_trajectory(&map, cfg.schedule, theta0, cfg.steps, cfg.stride)?;
        if cfg.save_trajectory {
            traj.save(&self.out_dir)?;
        }
        Ok((problem, map, traj))
    }

    fn divergence_note(traj: &Trajectory) -> String {
        traj.divergence()
            .map(|d| format!("; diverged at step {}: {}", d.step, d.reason))
            .unwrap_or_default()
    }

    fn simulate_only(&self) -> Result<RunOutcome, CliError> {
        let (problem, _, traj) = self.simulate()?;
        self.write_metadata("simulate", &problem, Some(&traj))?;
        let last = traj.last();
        let loss = full_loss(problem.objective.as_ref(), last.values())?;
        Ok(RunOutcome {
            exit_code: i32::from(traj.diverged()),
            summary: format!(
                "simulated {} steps, {} iterates stored, final loss {loss:.6e}{}",
                traj.num_steps(),
                traj.num_stored(),
                Self::divergence_note(&traj)
            ),
            diagnostics: None,
            diverged: traj.diverged(),
        })
    }

    fn diagnose(&self) -> Result<RunOutcome, CliError> {
        let cfg = &self.config;
        let (problem, map, traj) = self.simulate()?;
        let options = DiagnoseOptions {
            every: cfg.diag_every,
            sample_size: cfg.sample_size,
            sharpness: cfg.sharpness,
            seed: derive_seed(cfg.seed, DIAGNOSTICS_STREAM),
        };
        let records = diagnose_trajectory(&traj, &map, &options)?;
        write_diagnostics_csv(create(&self.path(DIAGNOSTICS_CSV))?, &records)?;
        if cfg.epoch_losses && !traj.diverged() {
            let pairs = epoch_loss_series(&traj, problem.objective.as_ref())?;
            write_epoch_csv(create(&self.path(EPOCHS_CSV))?, &pairs)?;
        }
        if !cfg.precision_sizes.is_empty() {
            let mut rng = derived_rng(cfg.seed, DIAGNOSTICS_STREAM + 100);
            let rows = precision_sweep(
                problem.objective.as_ref(),
                traj.last().values(),
                &cfg.precision_sizes,
                cfg.precision_resamples,
                &mut rng,
            )?;
            write_precision_csv(create(&self.path(PRECISION_CSV))?, &rows)?;
        }
        self.write_metadata("diagnose", &problem, Some(&traj))?;
        let last = records.last().expect("the final iterate is always diagnosed");
        Ok(RunOutcome {
            exit_code: i32::from(traj.diverged()),
            summary: format!(
                "diagnosed {} iterates; final loss {:.6e}, grad norm {:.6e}{}",
                records.len(),
                last.loss,
                last.grad_norm,
                Self::divergence_note(&traj)
            ),
            diagnostics: Some(records),
            diverged: traj.diverged(),
        })
    }

    fn observable(&self, problem: &Problem) -> Result<Observable, CliError> {
        let cfg = &self.config;
        let obj = problem.objective.clone();
        let phi = match cfg.observable {
            ObservableKind::Loss => Observable::loss(obj),
            ObservableKind::GradNorm => Observable::grad_norm(obj),
            ObservableKind::ProbeLoss => {
                let n = obj.num_examples();
                let k = cfg.probe_size.clamp(1, n);
                Observable::subset_loss(obj, (0..k).map(|i| i * n / k).collect())
            }
        };
        Ok(match cfg.observable_bound {
            Some(m) => phi.with_bound(m),
            None => phi,
        })
    }

    /// Start of the measure: `burn_in`, or the detected invariance step.
    fn measure_start(&self, problem: &Problem, traj: &Trajectory) -> Result<(usize, Option<InvarianceDetection>), CliError> {
        if let Some(b) = self.config.burn_in {
            return Ok((b, None));
        }
        let steps = traj.stored_steps();
        let losses: Vec<f64> = (0..steps.len())
            .map(|i| full_loss(problem.objective.as_ref(), traj.stored(i)))
            .collect::<Result<_, _>>()?;
        let d = detect_invariance_in_series(steps, &losses, self.config.invariance_window, self.config.invariance_tol)?;
        Ok((d.step.unwrap_or(traj.num_steps() / 2), Some(d)))
    }

    fn measure(&self) -> Result<RunOutcome, CliError> {
        let cfg = &self.config;
        let (problem, map, traj) = self.simulate()?;
        if traj.diverged() {
            self.write_metadata("measure", &problem, Some(&traj))?;
            return Ok(RunOutcome {
                exit_code: 1,
                summary: format!("measure skipped{}", Self::divergence_note(&traj)),
                diverged: true,
                ..Default::default()
            });
        }
        let mut rng = derived_rng(cfg.seed, MEASURE_STREAM);
        let phi = self.observable(&problem)?;
        let change = if cfg.change_grid.is_empty() {
            None
        } else {
            let report = vanishing_change(&traj, &map, &phi, cfg.confidence, &cfg.change_grid, cfg.estimator, &mut rng)?;
            report.write_csv(create(&self.path(CHANGE_CSV))?)?;
            Some(report)
        };
        let (start, invariance) = self.measure_start(&problem, &traj)?;
        let measure = build_measure(&traj, start.., cfg.measure_stride)?;
        let obj = problem.objective.clone();
        let avg_loss = time_average(&measure, &Observable::loss(obj.clone()))?;
        let avg_grad_norm = time_average(&measure, &Observable::grad_norm(obj))?;
        let avg_phi = time_average(&measure, &phi)?;
        let (residual, residual_stderr) =
            invariance_residual(&measure, &map, cfg.schedule.eta0(), &phi, cfg.residual_resamples, &mut rng)?;
        let half_distance = if measure.len() >= 4 {
            let (a, b) = split_measure(&measure)?;
            Some(measure_distance(&a, &b, cfg.projections, &mut rng)?)
        } else {
            None
        };
        let report = MeasureReport {
            observable: phi.name().to_string(),
            seed: cfg.seed,
            measure_start: start,
            measure_stride: cfg.measure_stride,
            atoms: measure.len(),
            invariance,
            time_average_loss: avg_loss,
            time_average_grad_norm: avg_grad_norm,
            time_average_observable: avg_phi,
            invariance_residual: residual,
            invariance_residual_stderr: residual_stderr,
            half_split_distance: half_distance,
            vanishing_change: change,
        };
        write_json(&self.path("measure_report.json"), &report)?;
        self.write_metadata("measure", &problem, Some(&traj))?;
        let change_note = report
            .vanishing_change
            .as_ref()
            .map(|c| {
                format!(
                    "; vanishing change inside envelope: {}, slope {}",
                    c.all_inside(),
                    c.slope.map_or("NA".to_string(), |s| format!("{s:.3}"))
                )
            })
            .unwrap_or_default();
        Ok(RunOutcome {
            exit_code: 0,
            summary: format!(
                "measure over {} atoms from step {start}: mean loss {avg_loss:.6e}, mean grad norm {avg_grad_norm:.6e}, residual {residual:.3e} ± {residual_stderr:.1e}{change_note}",
                measure.len()
            ),
            ..Default::default()
        })
    }

    fn theorem(&self, which: TheoremKind) -> Result<RunOutcome, CliError> {
        let cfg = &self.config;
        let file = self.path(&format!("{}_report.json", which.name()));
        let (verdict, summary) = match which {
            TheoremKind::Compact => {
                let problem = Problem::build(cfg)?;
                let data = problem.dataset()?;
                let config = CompactDomainConfig {
                    widths: cfg.widths.clone(),
                    activation: cfg.hidden_activation(),
                    gamma: cfg.gamma,
                    eta: cfg.schedule.eta0(),
                    steps: cfg.steps,
                    batch_size: cfg.batch_size,
                    sampling: cfg.sampling,
                    seed: cfg.seed,
                    init_multiple: cfg.init_multiple,
                    trace_points: cfg.trace_points,
                };
                let report = check_compact_domain(&config, data)?;
                write_json(&file, &report)?;
                self.write_metadata("theorem compact", &problem, None)?;
                (report.verdict(), report.summary())
            }
            TheoremKind::Bn => {
                let problem = Problem::build(cfg)?;
                let data = problem.dataset()?;
                let config = BnConfig {
                    widths: cfg.widths.clone(),
                    activation: cfg.hidden_activation(),
                    gamma: cfg.gamma,
                    eta: cfg.schedule.eta0(),
                    batch_size: cfg.batch_size,
                    steps: cfg.steps,
                    seed: cfg.seed,
                    epsilon: cfg.bn_epsilon,
                    weight_std: cfg.weight_std,
                };
                let report = check_bn_bounds(&config, data)?;
                write_json(&file, &report)?;
                self.write_metadata("theorem bn", &problem, None)?;
                (report.verdict(), report.summary())
            }
            TheoremKind::CeLemma => {
                let config = CeLemmaConfig {
                    classes: cfg.ce_classes.clone(),
                    trials: cfg.trials,
                    max_c: cfg.max_c,
                    seed: cfg.seed,
                };
                let report = check_ce_lemma(&config, &mut derived_rng(cfg.seed, THEOREM_STREAM))?;
                write_json(&file, &report)?;
                write_json(
                    &self.path(METADATA_JSON),
                    &serde_json::json!({
                        "command": "theorem celemma",
                        "config": self.raw.entries,
                        "overrides": self.overrides,
                        "seed": cfg.seed,
                    }),
                )?;
                (report.verdict(), report.summary())
            }
            TheoremKind::SmallerStep => {
                let (problem, map, traj) = self.simulate()?;
                self.write_metadata("theorem smallerstep", &problem, Some(&traj))?;
                if traj.diverged() {
                    return Err(CliError::runtime(format!("smaller-step run{}", Self::divergence_note(&traj))));
                }
                let report = self.smaller_step(&problem, &map, &traj)?;
                write_json(&file, &report)?;
                (report.verdict, report.summary())
            }
        };
        println!("{summary}");
        Ok(RunOutcome {
            exit_code: verdict.exit_code(),
            summary,
            ..Default::default()
        })
    }

    fn smaller_step(&self, problem: &Problem, map: &UpdateMap, traj: &Trajectory) -> Result<SmallerStepRun, CliError> {
        let cfg = &self.config;
        let (start, invariance) = self.measure_start(problem, traj)?;
        if invariance.as_ref().is_some_and(|d| !d.reached) {
            return Ok(SmallerStepRun {
                window: cfg.invariance_window,
                invariance,
                measure_start: None,
                check: None,
                verdict: Verdict::NotApplicable,
            });
        }
        let measure = build_measure(traj, start.., cfg.measure_stride)?;
        let config = SmallerStepConfig {
            c_grid: cfg.c_grid.clone(),
            samples: cfg.samples,
            stationary_eps: cfg.stationary_eps,
            curvature_pairs: cfg.curvature_pairs,
        };
        let check = check_smaller_step(&measure, map, cfg.schedule.eta0(), &config, &mut derived_rng(cfg.seed, THEOREM_STREAM))?;
        Ok(SmallerStepRun {
            window: cfg.invariance_window,
            invariance,
            measure_start: Some(start),
            verdict: check.verdict,
            check: Some(check),
        })
    }
}

/// Smaller-step check together with how its measure was chosen.
#[derive(Debug, Clone, Serialize)]
pub struct SmallerStepRun {
    pub window: usize,
    pub invariance: Option<InvarianceDetection>,
    pub measure_start: Option<usize>,
    pub check: Option<SmallerStepReport>,
    pub verdict: Verdict,
}

impl SmallerStepRun {
    pub fn summary(&self) -> String {
        match &self.check {
            Some(c) => c.summary(),
            None => format!("{} smaller step: loss never settled within the run, no post-invariance measure", self.verdict),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct MeasureReport {
    observable: String,
    seed: u64,
    measure_start: usize,
    measure_stride: usize,
    atoms: usize,
    invariance: Option<InvarianceDetection>,
    time_average_loss: f64,
    time_average_grad_norm: f64,
    time_average_observable: f64,
    invariance_residual: f64,
    invariance_residual_stderr: f64,
    /// Sliced energy distance between the first and second half of the atoms.
    half_split_distance: Option<f64>,
    vanishing_change: Option<VanishingChangeReport>,
}

fn split_measure(m: &EmpiricalMeasure) -> Result<(EmpiricalMeasure, EmpiricalMeasure), CliError> {
    let half = m.len() / 2;
    let a = EmpiricalMeasure::uniform((0..half).map(|i| m.atom(i)).collect())?;
    let b = EmpiricalMeasure::uniform((half..m.len()).map(|i| m.atom(i)).collect())?;
    Ok((a, b))
}

/// The objective a configuration describes.
pub struct Problem {
    pub objective: Arc<dyn Objective>,
    pub data: Option<Arc<Dataset>>,
    spec: Option<MlpSpec>,
    bn: Option<Arc<BnMlp>>,
    dataset_info: Option<DatasetInfo>,
}

impl Problem {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        match cfg.objective {
            ObjectiveKind::SinProduct => Ok(Self::closed_form(Arc::new(SinProduct::default()))),
            ObjectiveKind::Quadratic => Ok(Self::closed_form(Arc::new(Quadratic::diagonal(&cfg.quadratic_diag)?))),
            ObjectiveKind::Mlp | ObjectiveKind::BnMlp => {
                let data = Arc::new(load_dataset(cfg)?);
                let spec = if cfg.activations.len() == 1 {
                    MlpSpec::uniform(cfg.widths.clone(), cfg.activations[0])?
                } else {
                    MlpSpec::new(cfg.widths.clone(), cfg.activations.clone())?
                };
                let info = DatasetInfo {
                    source: cfg.dataset.clone(),
                    num_examples: data.len(),
                    input_dim: data.dim(),
                    num_classes: data.num_classes(),
                    scale: data.scale(),
                };
                let (objective, bn): (Arc<dyn Objective>, _) = if cfg.objective == ObjectiveKind::BnMlp {
                    let net = Arc::new(BnMlp::new(spec.clone(), data.clone(), cfg.bn_epsilon)?);
                    (net.clone(), Some(net))
                } else {
                    (Arc::new(Mlp::new(spec.clone(), data.clone())?), None)
                };
                Ok(Self {
                    objective,
                    data: Some(data),
                    spec: Some(spec),
                    bn,
                    dataset_info: Some(info),
                })
            }
        }
    }

    fn closed_form(objective: Arc<dyn Objective>) -> Self {
        Self {
            objective,
            data: None,
            spec: None,
            bn: None,
            dataset_info: None,
        }
    }

    fn dataset(&self) -> Result<Arc<Dataset>, CliError> {
        self.data
            .clone()
            .ok_or_else(|| CliError::usage("this check needs a network objective (`objective = mlp`)"))
    }

    /// `θ₀` from `theta0` if given, otherwise drawn under the init scheme.
    pub fn initial_point(&self, cfg: &ExperimentConfig) -> Result<ParamVector, CliError> {
        let dim = self.objective.dim();
        if let Some(values) = &cfg.theta0 {
            if values.len() != dim {
                return Err(CliError::usage(format!("`theta0` has {} entries, the objective has {dim}", values.len())));
            }
            return Ok(ParamVector::new(values.clone(), self.objective.blocks())?);
        }
        let mut rng = derived_rng(cfg.seed, INIT_STREAM);
        match (&cfg.init, &self.spec) {
            (InitSpec::Uniform { low, high }, _) => {
                if !(low <= high) {
                    return Err(CliError::usage("`init = uniform:<low>:<high>` needs low ≤ high"));
                }
                let values = (0..dim).map(|_| low + (high - low) * rng.gen::<f64>()).collect();
                Ok(ParamVector::new(values, self.objective.blocks())?)
            }
            (InitSpec::Weights { scheme }, Some(spec)) => match &self.bn {
                Some(net) => {
                    let scale = if cfg.gamma > 0.0 { bn_bounds(cfg.batch_size, cfg.gamma, spec.output_dim()).0 } else { 1.0 };
                    Ok(net.init(*scheme, scale, &mut rng)?)
                }
                None => Ok(init_weights(spec, *scheme, &mut rng)?),
            },
            (InitSpec::Weights { .. }, None) => Err(CliError::usage("weight init schemes need a network objective")),
        }
    }
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, CliError> {
    match &cfg.dataset {
        DatasetSource::Blobs => Ok(Dataset::blobs(&blob_spec(cfg))?),
        DatasetSource::Csv { path } => {
            let file = File::open(path).map_err(|e| CliError::usage(format!("cannot open dataset {}: {e}", path.display())))?;
            Ok(Dataset::from_csv(file, &cfg.label_column, None)?)
        }
    }
}

pub fn blob_spec(cfg: &ExperimentConfig) -> BlobSpec {
    BlobSpec {
        classes: cfg.classes,
        dim: cfg.input_dim,
        per_class: cfg.per_class,
        separation: cfg.separation,
        seed: cfg.data_seed,
    }
}

/// Writes the blob dataset and its metadata.
pub fn generate_dataset(exp: &Experiment) -> Result<RunOutcome, CliError> {
    exp.create_out_dir()?;
    let spec = blob_spec(&exp.config);
    let data = Dataset::blobs(&spec)?;
    data.write_csv(create(&exp.path(DATA_CSV))?)?;
    write_json(
        &exp.path(METADATA_JSON),
        &serde_json::json!({
            "command": "gen-data",
            "config": exp.raw.entries,
            "overrides": exp.overrides,
            "blobs": spec,
            "num_examples": data.len(),
            "scale": data.scale(),
        }),
    )?;
    Ok(RunOutcome {
        summary: format!("wrote {} examples to {}", data.len(), exp.path(DATA_CSV).display()),
        ..Default::default()
    })
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

/// Mean of the last quarter of a diagnostics column.
pub fn late_mean(records: &[DiagnosticsRecord], f: impl Fn(&DiagnosticsRecord) -> f64) -> f64 {
    let start = records.len() - records.len().div_ceil(4);
    mean(&records[start..].iter().map(f).collect::<Vec<_>>())
}
