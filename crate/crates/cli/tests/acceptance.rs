//! Acceptance suite: one line per criterion, then a non-zero exit if any
//! criterion failed. Run with `cargo test -p ergodyn-cli --test acceptance`.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ergodyn::diagnostics::*;
use ergodyn::dynamics::*;
use ergodyn::measures::*;
use ergodyn::numeric::variance;
use ergodyn::objectives::*;
use ergodyn::rng::{derive_seed, derived_rng, rng_from_seed};
use ergodyn::theorems::*;
use ergodyn::ParamVector;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

struct Criterion {
    id: usize,
    name: &'static str,
    tolerance: &'static str,
    limit: Duration,
    check: fn() -> Outcome,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn sin_map() -> UpdateMap {
    UpdateMap::gradient_descent(Arc::new(SinProduct::default()), 0.0).unwrap()
}

fn sin_init(seed: u64) -> ParamVector {
    let mut rng = derived_rng(1, seed);
    ParamVector::from_vec(vec![rng.gen_range(0.0..PI), rng.gen_range(0.0..PI)]).unwrap()
}

fn sin_run(seed: u64, eta: f64, steps: usize) -> Trajectory {
    run_trajectory(&sin_map(), Schedule::constant(eta), sin_init(seed), steps, Some(1)).unwrap()
}

fn sin_grad_norm(t: &[f64]) -> f64 {
    let g = sin_product_eval([t[0], t[1]]).grad;
    g[0].hypot(g[1])
}

fn blobs(classes: usize, per_class: usize, separation: f64, seed: u64) -> Arc<Dataset> {
    Arc::new(Dataset::blobs(&BlobSpec { classes, dim: 2, per_class, separation, seed }).unwrap())
}

fn threshold() -> Outcome {
    let mut converged = 0;
    let mut oscillating = 0;
    for seed in 0..20 {
        let small = sin_run(seed, 0.01, 2000);
        if (0..small.num_stored()).any(|i| sin_grad_norm(small.stored(i)) <= 1e-3) {
            converged += 1;
        }
        let large = sin_run(seed, 0.04, 2000);
        if sin_grad_norm(&large.last().into_values()) >= 0.1 {
            oscillating += 1;
        }
    }
    outcome(converged >= 18 && oscillating >= 18, format!("eta=0.01 converged {converged}/20, eta=0.04 oscillating {oscillating}/20"))
}

fn window_averages() -> Outcome {
    let map = sin_map();
    let loss = Observable::loss(map.base().clone());
    let grad = Observable::new("grad_norm", |t| Ok(sin_grad_norm(t)));
    let mut worst_rel: f64 = 0.0;
    let mut min_grad = f64::INFINITY;
    for seed in 0..20 {
        let traj = sin_run(seed, 0.04, 2000);
        let early = build_measure(&traj, 1000..=1500, 1).unwrap();
        let late = build_measure(&traj, 1500..=2000, 1).unwrap();
        for phi in [&loss, &grad] {
            let (a, b) = (time_average(&early, phi).unwrap(), time_average(&late, phi).unwrap());
            worst_rel = worst_rel.max((a - b).abs() / a.abs().max(b.abs()));
        }
        min_grad = min_grad.min(time_average(&early, &grad).unwrap()).min(time_average(&late, &grad).unwrap());
    }
    outcome(worst_rel <= 0.1 && min_grad > 0.1, format!("worst relative gap {worst_rel:.4}, smallest window grad norm {min_grad:.3}"))
}

struct MlpSetup {
    net: Arc<Mlp>,
    spec: MlpSpec,
}

fn criterion3_net() -> MlpSetup {
    let spec = MlpSpec::uniform(vec![2, 16, 16, 4], Activation::Relu).unwrap();
    let net = Arc::new(Mlp::new(spec.clone(), blobs(4, 128, 2.0, 0)).unwrap());
    MlpSetup { net, spec }
}

fn criterion3_run(setup: &MlpSetup, seed: u64, stride: usize) -> (UpdateMap, Trajectory) {
    let theta0 = init_weights(&setup.spec, InitScheme::Gaussian { std: 0.5 }, &mut derived_rng(4, seed)).unwrap();
    let map = UpdateMap::new(setup.net.clone(), 0.01, 16, SamplingMode::Iid, derive_seed(3, seed)).unwrap();
    let traj = run_trajectory(&map, Schedule::constant(0.5), theta0, 10_001, Some(stride)).unwrap();
    (map, traj)
}

fn vanishing_rate() -> Outcome {
    let setup = criterion3_net();
    let probe: Vec<usize> = (0..64).map(|i| i * 8).collect();
    let phi = Observable::subset_loss(setup.net.clone(), probe);
    let grid = [100, 1000, 10_000];
    let mut inside = 0;
    let mut sq = [0.0; 3];
    for seed in 0..100 {
        let (map, traj) = criterion3_run(&setup, seed, 1);
        let rep = vanishing_change(&traj, &map, &phi, 0.1, &grid, ChangeEstimator::Resample, &mut derived_rng(5, seed)).unwrap();
        inside += rep.all_inside() as usize;
        for (s, r) in sq.iter_mut().zip(&rep.rows) {
            *s += r.statistic * r.statistic;
        }
    }
    let rms: Vec<f64> = sq.iter().map(|s| (s / 100.0).sqrt()).collect();
    let slope = log_log_slope(&grid, &rms).unwrap_or(f64::NAN);
    outcome(inside >= 90 && (-1.2..=-0.3).contains(&slope), format!("{inside}/100 inside, RMS slope {slope:.3}"))
}

fn telescoping() -> Outcome {
    let mut rng = rng_from_seed(40);
    let mut worst: f64 = 0.0;
    for run in 0..20 {
        let (map, theta0, eta) = if run % 2 == 0 {
            (sin_map(), sin_init(100 + run), rng.gen_range(0.005..0.05))
        } else {
            let diag: Vec<f64> = (0..3).map(|_| rng.gen_range(0.5..3.0)).collect();
            let q = UpdateMap::gradient_descent(Arc::new(Quadratic::diagonal(&diag).unwrap()), 0.0).unwrap();
            let t: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
            (q, ParamVector::from_vec(t).unwrap(), rng.gen_range(0.05..0.6))
        };
        let traj = run_trajectory(&map, Schedule::constant(eta), theta0, 1001, Some(1)).unwrap();
        let phi = Observable::loss(map.base().clone());
        let rep = vanishing_change(&traj, &map, &phi, 0.1, &[10, 100, 1000], ChangeEstimator::Reuse, &mut rng).unwrap();
        let first = phi.eval(traj.stored(1)).unwrap();
        for r in &rep.rows {
            let expected = (first - phi.eval(traj.stored(r.n + 1)).unwrap()) / r.n as f64;
            if expected != 0.0 {
                worst = worst.max((r.statistic - expected).abs() / expected.abs());
            } else if r.statistic != 0.0 {
                worst = f64::INFINITY;
            }
        }
    }
    outcome(worst <= 1e-12, format!("worst relative error {worst:.2e} over 20 runs"))
}

fn compact_domain() -> Outcome {
    let mut op_viol = 0;
    let mut loss_viol = 0;
    let mut verdicts = 0;
    let mut max_op: f64 = 0.0;
    let mut w = 0.0;
    for seed in 0..10 {
        let config = CompactDomainConfig { steps: 100_000, seed, ..Default::default() };
        let rep = check_compact_domain(&config, blobs(3, 20, 2.0, seed)).unwrap();
        op_viol += rep.op_norm_violations;
        loss_viol += rep.loss_violations;
        verdicts += (rep.verdict == Verdict::Pass) as usize;
        max_op = max_op.max(rep.max_op_norm);
        w = rep.w;
    }
    outcome(
        op_viol == 0 && loss_viol == 0 && verdicts == 10,
        format!("violations: op norm {op_viol}, loss {loss_viol}; max op norm {max_op:.6} vs w {w:.6}"),
    )
}

fn batchnorm_bounds() -> Outcome {
    let mut worst_norm: f64 = 0.0;
    let mut worst_scale: f64 = 0.0;
    let mut ok = true;
    for seed in 0..10 {
        let config = BnConfig { steps: 10_000, seed, ..Default::default() };
        let rep = check_bn_bounds(&config, blobs(3, 20, 2.0, seed)).unwrap();
        ok &= rep.max_abs_normalized <= 2.0 && rep.max_abs_scale <= 4.0 + 1e-10 && rep.verdict == Verdict::Pass;
        worst_norm = worst_norm.max(rep.max_abs_normalized);
        worst_scale = worst_scale.max(rep.max_abs_scale);
    }
    outcome(ok, format!("max |x_hat| {worst_norm:.6}, max |a_L| {worst_scale:.6}"))
}

fn ce_lemma() -> Outcome {
    let rep = check_ce_lemma(&CeLemmaConfig::default(), &mut rng_from_seed(0)).unwrap();
    outcome(
        rep.value_violations + rep.gradient_violations + rep.lipschitz_violations == 0,
        format!(
            "violations {}/{}/{} of 10000; max grad norm {:.6}",
            rep.value_violations, rep.gradient_violations, rep.lipschitz_violations, rep.max_gradient_norm
        ),
    )
}

fn smaller_step() -> Outcome {
    let mut sin_pass = 0;
    for seed in 0..20 {
        let map = sin_map();
        let traj = sin_run(seed, 0.04, 2000);
        let det = detect_invariance(&traj, map.base().as_ref(), 200, InvarianceTolerance::Absolute { tol: 0.5 }).unwrap();
        if let Some(start) = det.step {
            let measure = build_measure(&traj, start.., 1).unwrap();
            let rep = check_smaller_step(&measure, &map, 0.04, &SmallerStepConfig::default(), &mut derived_rng(2, seed)).unwrap();
            sin_pass += (rep.verdict == Verdict::Pass) as usize;
        }
    }

    let setup = criterion3_net();
    let mut mlp_pass = 0;
    for seed in 0..20 {
        let (map, traj) = criterion3_run(&setup, seed, 10);
        let losses: Vec<f64> = (0..traj.num_stored()).map(|i| full_loss(setup.net.as_ref(), traj.stored(i)).unwrap()).collect();
        let det = detect_invariance_in_series(traj.stored_steps(), &losses, 200, InvarianceTolerance::default()).unwrap();
        if let Some(start) = det.step {
            let measure = build_measure(&traj, start.., 10).unwrap();
            let config = SmallerStepConfig { samples: 400, ..Default::default() };
            let rep = check_smaller_step(&measure, &map, 0.5, &config, &mut derived_rng(2, seed)).unwrap();
            mlp_pass += (rep.verdict == Verdict::Pass) as usize;
        }
    }

    let map = sin_map();
    let rest = run_trajectory(&map, Schedule::constant(0.04), ParamVector::from_vec(vec![0.0, 0.0]).unwrap(), 100, Some(1)).unwrap();
    let stationary = check_smaller_step(&build_measure(&rest, .., 1).unwrap(), &map, 0.04, &SmallerStepConfig::default(), &mut rng_from_seed(0)).unwrap();
    let na = stationary.verdict == Verdict::NotApplicable;
    outcome(
        sin_pass >= 18 && mlp_pass >= 18 && na,
        format!("sin-product {sin_pass}/20, MLP {mlp_pass}/20, stationary measure {}", stationary.verdict),
    )
}

fn numerical_core() -> Outcome {
    let mut rng = rng_from_seed(2024);
    let data = Arc::new(Dataset::blobs(&BlobSpec { classes: 3, dim: 3, per_class: 10, separation: 2.5, seed: 1 }).unwrap());
    let mut grad_err: f64 = 0.0;
    for _ in 0..100 {
        let spec = MlpSpec::uniform(vec![3, rng.gen_range(2..6), rng.gen_range(2..6), 3], Activation::Tanh).unwrap();
        let reg = RegularizedObjective::new(Arc::new(Mlp::new(spec.clone(), data.clone()).unwrap()), rng.gen_range(0.0..0.1)).unwrap();
        let theta = init_weights(&spec, InitScheme::Gaussian { std: 1.0 }, &mut rng).unwrap();
        let batch: Vec<usize> = (0..8).map(|_| rng.gen_range(0..data.len())).collect();
        let (_, g) = reg.loss_and_grad(&theta, &batch).unwrap();
        let fd = support::fd_gradient(&reg, theta.values(), &batch, 1e-5 * (1.0 + theta.norm()));
        grad_err = grad_err.max(support::rel_err(g.values(), &fd));
    }

    let mut sharp_err: f64 = 0.0;
    for seed in 0..10 {
        let spec = MlpSpec::uniform(vec![2, 5, 3, 2], Activation::Tanh).unwrap();
        let net = Mlp::new(spec.clone(), blobs(2, 8, 2.5, seed)).unwrap();
        let theta = init_weights(&spec, InitScheme::Gaussian { std: 0.8 }, &mut derived_rng(200, seed)).unwrap();
        let batch = full_batch(net.num_examples());
        let hess = support::fd_hessian(&net, theta.values(), &batch, 1e-5);
        let oracle = support::dominant_abs_eigenvalue(&hess, spec.num_params());
        let s = sharpness(&net, theta.values(), &batch, PowerIteration { tol: 1e-10, max_iters: 2000 }, &mut rng_from_seed(seed)).unwrap();
        sharp_err = sharp_err.max((s.magnitude() - oracle).abs() / oracle);
    }

    let mut op_err: f64 = 0.0;
    for _ in 0..50 {
        let (rows, cols) = (rng.gen_range(1..10), rng.gen_range(1..10));
        let w: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let oracle = support::jacobi_singular_values(&w, rows, cols)[0];
        op_err = op_err.max((operator_norm(&w, rows, cols).unwrap().value - oracle).abs() / oracle);
    }
    outcome(
        grad_err <= 1e-5 && sharp_err <= 1e-3 && op_err <= 1e-8,
        format!("backprop {grad_err:.2e}, sharpness {sharp_err:.2e}, operator norm {op_err:.2e}"),
    )
}

fn two_cycle() -> Outcome {
    let lambda = 4.0;
    let eta = 2.0 / lambda;
    let map = UpdateMap::gradient_descent(Arc::new(Quadratic::diagonal(&[lambda]).unwrap()), 0.0).unwrap();
    let traj = run_trajectory(&map, Schedule::constant(eta), ParamVector::from_vec(vec![0.8]).unwrap(), 10, Some(1)).unwrap();
    let orbit = (0..traj.num_stored()).all(|i| traj.stored(i)[0] == if i % 2 == 0 { 0.8 } else { -0.8 });
    let recs = diagnose_trajectory(&traj, &map, &DiagnoseOptions::default()).unwrap();
    let flat = recs.windows(2).all(|p| p[1].loss - p[0].loss == 0.0);
    let ratio_err = recs.iter().map(|r| (r.eos_ratio().unwrap_or(f64::NAN) - 0.5).abs()).fold(0.0, f64::max);
    let atoms = EmpiricalMeasure::uniform(vec![traj.iterate(0), traj.iterate(1)]).unwrap();
    let (residual, _) = invariance_residual(&atoms, &map, eta, &Observable::loss(map.base().clone()), 4, &mut rng_from_seed(0)).unwrap();
    let (coord, _) = invariance_residual(&atoms, &map, eta, &Observable::coordinate(0), 4, &mut rng_from_seed(0)).unwrap();
    outcome(
        orbit && flat && ratio_err <= 1e-6 && residual == 0.0 && coord == 0.0,
        format!("period-2 orbit {orbit}, zero loss change {flat}, |eos_ratio - 0.5| {ratio_err:.1e}, residual {residual}"),
    )
}

fn epoch_smoothing() -> Outcome {
    let spec = MlpSpec::uniform(vec![2, 16, 3], Activation::Tanh).unwrap();
    let net = Arc::new(Mlp::new(spec.clone(), blobs(3, 20, 2.0, 6)).unwrap());
    let mut smoother = 0;
    let mut epochs = 0;
    for seed in 0..5 {
        let theta0 = init_weights(&spec, InitScheme::Gaussian { std: 0.5 }, &mut derived_rng(12, seed)).unwrap();
        let map = UpdateMap::new(net.clone(), 0.0, 4, SamplingMode::EpochShuffle, seed).unwrap();
        let traj = run_trajectory(&map, Schedule::constant(8.0), theta0, 40 * map.steps_per_epoch(), None).unwrap();
        let pairs = epoch_loss_series(&traj, net.as_ref()).unwrap();
        let moving: Vec<f64> = pairs[10..].iter().map(|p| p.moving).collect();
        let fixed: Vec<f64> = pairs[10..].iter().map(|p| p.fixed).collect();
        epochs = moving.len();
        smoother += (variance(&moving) < variance(&fixed)) as usize;
    }
    outcome(smoother == 5 && epochs >= 20, format!("moving-average variance smaller in {smoother}/5 runs over {epochs} epochs"))
}

fn recipe_command(text: &str, name: &str) -> Vec<String> {
    let theorem = ["compact", "bn", "smallerstep", "celemma"].into_iter().find(|t| *t == name);
    if let Some(t) = theorem {
        return vec!["theorem".into(), t.into()];
    }
    if text.lines().any(|l| l.trim_start().starts_with("sweep_axis")) {
        return vec!["sweep".into()];
    }
    let kind = text
        .lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == "experiment")
        .map(|(_, v)| v.trim().to_string())
        .unwrap_or_else(|| "simulate".into());
    vec![kind]
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if matches!(path.extension().and_then(|e| e.to_str()), Some("csv" | "json")) {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let recipes = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../recipes");
    let mut names: Vec<_> = std::fs::read_dir(&recipes)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "cfg"))
        .collect();
    names.sort();
    let tmp = tempfile::tempdir().unwrap();
    let mut mismatched = Vec::new();
    let mut files = 0;
    for path in &names {
        let stem = path.file_stem().unwrap().to_str().unwrap();
        let args = recipe_command(&std::fs::read_to_string(path).unwrap(), stem);
        let runs: Vec<_> = (0..2)
            .map(|k| {
                let out = tmp.path().join(format!("{stem}_{k}"));
                let status = Command::new(env!("CARGO_BIN_EXE_ergodyn"))
                    .args(&args)
                    .arg("--config")
                    .arg(path)
                    .arg("--out")
                    .arg(&out)
                    .output()
                    .unwrap()
                    .status;
                (status.code(), artifacts(&out))
            })
            .collect();
        files += runs[0].1.len();
        if runs[0] != runs[1] || runs[0].1.is_empty() {
            mismatched.push(stem.to_string());
        }
    }
    outcome(
        mismatched.is_empty(),
        format!("{} recipes, {files} artifacts compared; mismatched: {mismatched:?}", names.len()),
    )
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "synthetic stability threshold", tolerance: ">=90% per step size", limit: Duration::from_secs(5), check: threshold },
        Criterion { id: 2, name: "time averages settle without stationarity", tolerance: "rel 10%, grad > 0.1", limit: Duration::from_secs(5), check: window_averages },
        Criterion { id: 3, name: "vanishing-change rate", tolerance: ">=90/100 inside, slope in [-1.2,-0.3]", limit: Duration::from_secs(120), check: vanishing_rate },
        Criterion { id: 4, name: "telescoping identity", tolerance: "rel 1e-12", limit: Duration::from_secs(5), check: telescoping },
        Criterion { id: 5, name: "compact-domain containment", tolerance: "w + 1e-8, zero violations", limit: Duration::from_secs(120), check: compact_domain },
        Criterion { id: 6, name: "batch-norm bounds", tolerance: "|x_hat| <= 2, |a_L| <= 4 + 1e-10", limit: Duration::from_secs(60), check: batchnorm_bounds },
        Criterion { id: 7, name: "cross-entropy bounds", tolerance: "zero violations", limit: Duration::from_secs(5), check: ce_lemma },
        Criterion { id: 8, name: "smaller-step decrease", tolerance: "2 stderr, >=18/20 each", limit: Duration::from_secs(60), check: smaller_step },
        Criterion { id: 9, name: "numerical-core oracles", tolerance: "1e-5 / 1e-3 / 1e-8", limit: Duration::from_secs(30), check: numerical_core },
        Criterion { id: 10, name: "exact two-cycle", tolerance: "eos_ratio 0.5 +- 1e-6", limit: Duration::from_secs(1), check: two_cycle },
        Criterion { id: 11, name: "epoch-loss smoothing", tolerance: "strict variance order", limit: Duration::from_secs(60), check: epoch_smoothing },
        Criterion { id: 12, name: "recipe determinism", tolerance: "byte-identical", limit: Duration::from_secs(300), check: determinism },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = (c.check)();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= c.limit;
        failed += !pass as usize;
        println!(
            "{} [{:>2}] {} | tol {} | {:.2}s (limit {}s) | {}",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            c.tolerance,
            elapsed.as_secs_f64(),
            c.limit.as_secs(),
            result.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
