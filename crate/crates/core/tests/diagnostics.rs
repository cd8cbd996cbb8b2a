mod support;

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use ergodyn::diagnostics::*;
use ergodyn::dynamics::*;
use ergodyn::numeric::{mean_and_stderr, variance};
use ergodyn::objectives::*;
use ergodyn::rng::{derived_rng, rng_from_seed};
use ergodyn::{Objective, ParamVector};
use rand_distr::{Distribution, StandardNormal};

fn blob_net(widths: Vec<usize>, act: Activation, per_class: usize, seed: u64) -> (Arc<Mlp>, MlpSpec) {
    let data = Dataset::blobs(&BlobSpec {
        classes: *widths.last().unwrap(),
        dim: widths[0],
        per_class,
        separation: 2.0,
        seed,
    })
    .unwrap();
    let spec = MlpSpec::uniform(widths, act).unwrap();
    (Arc::new(Mlp::new(spec.clone(), Arc::new(data)).unwrap()), spec)
}

fn random_theta(spec: &MlpSpec, seed: u64) -> ParamVector {
    init_weights(spec, InitScheme::Gaussian { std: 0.6 }, &mut rng_from_seed(seed)).unwrap()
}

#[test]
fn single_example_has_no_noise() {
    let (net, spec) = blob_net(vec![2, 4, 2], Activation::Tanh, 1, 1);
    let sub = Arc::new(Mlp::new(spec.clone(), Arc::new(net.data().subsample(1, &mut rng_from_seed(0)).unwrap())).unwrap());
    let q = full_quantities(sub.as_ref(), random_theta(&spec, 2).values(), 1, &mut rng_from_seed(0)).unwrap();
    assert_eq!(q.noise, 0.0);
    assert!(q.is_exact());
}

#[test]
fn duplicated_dataset_gives_same_quantities() {
    let (net, spec) = blob_net(vec![2, 5, 3], Activation::Tanh, 6, 2);
    let theta = random_theta(&spec, 3);
    let twice = Mlp::new(spec.clone(), Arc::new(net.data().repeated(3).unwrap())).unwrap();
    let a = full_quantities(net.as_ref(), theta.values(), 18, &mut rng_from_seed(0)).unwrap();
    let b = full_quantities(&twice, theta.values(), 54, &mut rng_from_seed(0)).unwrap();
    for (x, y) in [(a.loss, b.loss), (a.grad_norm, b.grad_norm), (a.noise, b.noise), (a.mean_sq_grad, b.mean_sq_grad)] {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
    }
}

#[test]
fn bias_variance_identity_and_full_gradient() {
    for seed in 0..10 {
        let (net, spec) = blob_net(vec![3, 6, 6, 4], Activation::Tanh, 15, seed);
        let theta = random_theta(&spec, 100 + seed);
        let q = full_quantities(net.as_ref(), theta.values(), net.num_examples(), &mut rng_from_seed(0)).unwrap();
        let lhs = q.noise * q.noise + q.grad_norm * q.grad_norm;
        assert!((lhs - q.mean_sq_grad).abs() <= 1e-9 * q.mean_sq_grad);
        let (loss, grad) = loss_and_grad(net.as_ref(), &theta, &full_batch(net.num_examples())).unwrap();
        assert!((loss - q.loss).abs() <= 1e-12 * loss);
        assert!((grad.norm() - q.grad_norm).abs() <= 1e-12 * grad.norm());
    }
}

#[test]
fn subsampled_gradient_norm_stabilizes_and_overestimates() {
    let (net, spec) = blob_net(vec![2, 8, 3], Activation::Tanh, 64, 4);
    let theta = random_theta(&spec, 5);
    let n = net.num_examples();
    let exact = full_quantities(net.as_ref(), theta.values(), n, &mut rng_from_seed(0)).unwrap().grad_norm;

    let sizes = [n / 8, n / 4, n / 2, n];
    let rows = precision_sweep(net.as_ref(), theta.values(), &sizes, 50, &mut rng_from_seed(6)).unwrap();
    assert_eq!(rows[3].resamples, 1);
    assert_eq!(rows[3].grad_norm, exact);
    assert!((rows[2].grad_norm - rows[3].grad_norm).abs() / rows[3].grad_norm < 0.05);
    let spread: Vec<f64> = rows.iter().map(|r| r.grad_norm_stderr).collect();
    assert!(spread.windows(2).all(|w| w[1] <= w[0]), "{spread:?}");

    let mut rng = rng_from_seed(7);
    let estimates: Vec<f64> = (0..200)
        .map(|_| full_quantities(net.as_ref(), theta.values(), n / 8, &mut rng).unwrap().grad_norm)
        .collect();
    let (m, se) = mean_and_stderr(&estimates);
    assert!(m >= exact - 2.0 * se, "{m} vs {exact}");

    let mut csv = Vec::new();
    write_precision_csv(&mut csv, &rows).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("sample_size,resamples,loss,"));
}

#[test]
fn sample_size_bounds() {
    let (net, spec) = blob_net(vec![2, 3, 2], Activation::Tanh, 3, 1);
    let theta = random_theta(&spec, 1);
    let mut rng = rng_from_seed(0);
    assert!(full_quantities(net.as_ref(), theta.values(), 0, &mut rng).is_err());
    assert!(full_quantities(net.as_ref(), theta.values(), 7, &mut rng).is_err());
}

#[test]
fn sharpness_on_closed_forms() {
    let q = Quadratic::diagonal(&[1.0, 5.0]).unwrap();
    let s = sharpness(&q, &[0.3, -0.2], &[0], PowerIteration::default(), &mut rng_from_seed(1)).unwrap();
    assert!(s.converged);
    assert!((s.value - 5.0).abs() <= 1e-3);

    let sin = SinProduct::default();
    let s = sharpness(&sin, &[FRAC_PI_2, FRAC_PI_2], &[0], PowerIteration::default(), &mut rng_from_seed(2)).unwrap();
    assert!((s.magnitude() - 100.0).abs() <= 0.1);
    assert!(s.value < 0.0);

    assert!(sharpness(&q, &[0.0, 0.0], &[0], PowerIteration { tol: 1e-6, max_iters: 0 }, &mut rng_from_seed(0)).is_err());
}

#[test]
fn sharpness_matches_dense_eigensolve_on_random_quadratics() {
    let mut rng = rng_from_seed(50);
    for _ in 0..5 {
        let n = 50;
        let g: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = 0.5 * (g[i * n + j] + g[j * n + i]);
            }
        }
        let oracle = support::dominant_abs_eigenvalue(&a, n);
        let q = Quadratic::new(n, a).unwrap();
        let theta: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = sharpness(&q, &theta, &[0], PowerIteration::default(), &mut rng).unwrap();
        assert!((s.magnitude() - oracle).abs() <= 1e-3 * oracle, "{} vs {oracle}", s.magnitude());
    }
}

#[test]
fn sharpness_matches_dense_hessian_on_small_nets() {
    for seed in 0..10 {
        let (net, spec) = blob_net(vec![2, 5, 3, 2], Activation::Tanh, 8, seed);
        assert!(spec.num_params() <= 50);
        let theta = random_theta(&spec, 200 + seed);
        let batch = full_batch(net.num_examples());
        let hess = support::fd_hessian(net.as_ref(), theta.values(), &batch, 1e-5);
        let oracle = support::dominant_abs_eigenvalue(&hess, spec.num_params());
        let s = sharpness(net.as_ref(), theta.values(), &batch, PowerIteration { tol: 1e-10, max_iters: 2000 }, &mut rng_from_seed(seed)).unwrap();
        assert!((s.magnitude() - oracle).abs() <= 1e-3 * oracle, "seed {seed}: {} vs {oracle}", s.magnitude());
    }
}

#[test]
fn eos_ratio_algebra() {
    let base = DiagnosticsRecord {
        step: 0,
        eta: 0.5,
        loss: 0.0,
        grad_norm: 3.0,
        noise: 0.0,
        sharpness: Some(2.0),
        g2: 9.0,
        sample_size: 1,
    };
    assert!((eos_ratio(&base).unwrap() - 1.0).abs() < 1e-15);
    assert!(eos_ratio(&DiagnosticsRecord { sharpness: None, ..base }).is_none());
    assert!(eos_ratio(&DiagnosticsRecord { g2: 0.0, ..base }).is_none());
    assert!(eos_ratio(&DiagnosticsRecord { eta: 0.0, ..base }).is_none());
}

#[test]
fn two_cycle_eos_ratio_is_one_over_eta_lambda() {
    let lambda = 4.0;
    let eta = 2.0 / lambda;
    let map = UpdateMap::gradient_descent(Arc::new(Quadratic::diagonal(&[lambda]).unwrap()), 0.0).unwrap();
    let traj = run_trajectory(&map, Schedule::constant(eta), ParamVector::from_vec(vec![0.8]).unwrap(), 6, None).unwrap();
    let recs = diagnose_trajectory(&traj, &map, &DiagnoseOptions::default()).unwrap();
    assert_eq!(recs.len(), 7);
    for r in &recs {
        assert!((r.eos_ratio().unwrap() - 0.5).abs() <= 1e-6 * 0.5);
        assert!((r.loss - 0.5 * lambda * 0.64).abs() < 1e-14);
    }
}

#[test]
fn diagnosis_is_reproducible_and_serializes() {
    let (net, spec) = blob_net(vec![2, 6, 3], Activation::Tanh, 10, 3);
    let map = UpdateMap::new(net, 0.001, 5, SamplingMode::Iid, 4).unwrap();
    let traj = run_trajectory(&map, Schedule::constant(0.2), random_theta(&spec, 9), 40, None).unwrap();
    let opts = DiagnoseOptions { every: 10, sample_size: Some(12), seed: 3, ..Default::default() };
    let a = diagnose_trajectory(&traj, &map, &opts).unwrap();
    let b = diagnose_trajectory(&traj, &map, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 10, 20, 30, 40]);
    assert!(a.iter().all(|r| r.sample_size == 12 && r.noise >= 0.0 && r.g2 >= 0.0));
    let mut csv = Vec::new();
    write_diagnostics_csv(&mut csv, &a).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("step,eta,loss,grad_norm,noise,sharpness,g2,eos_ratio,sample_size\n"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn epoch_losses_definitions() {
    let (net, spec) = blob_net(vec![2, 4, 2], Activation::Tanh, 6, 5);
    let theta0 = random_theta(&spec, 1);
    let still = UpdateMap::new(net.clone(), 0.0, 5, SamplingMode::EpochShuffle, 1).unwrap();
    let traj = run_trajectory(&still, Schedule::constant(0.0), theta0.clone(), 9, None).unwrap();
    let pairs = epoch_loss_series(&traj, net.as_ref()).unwrap();
    assert_eq!(pairs.len(), 3);
    for p in &pairs {
        assert!((p.moving - p.fixed).abs() <= 1e-14 * p.fixed);
    }

    let whole = UpdateMap::new(net.clone(), 0.0, 12, SamplingMode::EpochShuffle, 1).unwrap();
    let traj = run_trajectory(&whole, Schedule::constant(0.5), theta0.clone(), 2, None).unwrap();
    let p = epoch_losses(&traj, net.as_ref(), 0).unwrap();
    assert!((p.moving - full_loss(net.as_ref(), theta0.values()).unwrap()).abs() <= 1e-14);
    assert_eq!(p.fixed, full_loss(net.as_ref(), traj.stored(1)).unwrap());
    assert!(epoch_losses(&traj, net.as_ref(), 2).is_err());

    let iid = UpdateMap::new(net.clone(), 0.0, 4, SamplingMode::Iid, 1).unwrap();
    let traj = run_trajectory(&iid, Schedule::constant(0.1), theta0, 6, None).unwrap();
    assert!(epoch_losses(&traj, net.as_ref(), 0).is_err());
}

#[test]
fn moving_average_smooths_oscillating_losses() {
    let (net, spec) = blob_net(vec![2, 16, 3], Activation::Tanh, 20, 6);
    for seed in 0..5 {
        let theta0 = init_weights(&spec, InitScheme::Gaussian { std: 0.5 }, &mut derived_rng(12, seed)).unwrap();
        let map = UpdateMap::new(net.clone(), 0.0, 4, SamplingMode::EpochShuffle, seed).unwrap();
        let traj = run_trajectory(&map, Schedule::constant(8.0), theta0, 40 * map.steps_per_epoch(), None).unwrap();
        let pairs = epoch_loss_series(&traj, net.as_ref()).unwrap();
        let moving: Vec<f64> = pairs[10..].iter().map(|p| p.moving).collect();
        let fixed: Vec<f64> = pairs[10..].iter().map(|p| p.fixed).collect();
        assert!(variance(&moving) < variance(&fixed), "seed {seed}: {} vs {}", variance(&moving), variance(&fixed));
        let mut csv = Vec::new();
        write_epoch_csv(&mut csv, &pairs).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("epoch,moving_loss,fixed_loss\n0,"));
    }
}
