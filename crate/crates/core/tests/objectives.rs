mod support;

use std::sync::Arc;

use ergodyn::objectives::*;
use ergodyn::rng::rng_from_seed;
use rand::Rng;
use support::*;

fn blobs(dim: usize, classes: usize, per_class: usize, seed: u64) -> Arc<Dataset> {
    Arc::new(
        Dataset::blobs(&BlobSpec {
            classes,
            dim,
            per_class,
            separation: 2.5,
            seed,
        })
        .unwrap(),
    )
}

fn random_batch(rng: &mut ergodyn::rng::Rng, n: usize, m: usize) -> Vec<usize> {
    (0..m).map(|_| rng.gen_range(0..n)).collect()
}

#[test]
fn backprop_matches_finite_differences_on_tanh_nets() {
    let mut rng = rng_from_seed(2024);
    let data = blobs(3, 3, 10, 1);
    for trial in 0..100 {
        let h1 = rng.gen_range(2..6);
        let h2 = rng.gen_range(2..6);
        let spec = MlpSpec::uniform(vec![3, h1, h2, 3], Activation::Tanh).unwrap();
        let mlp = Mlp::new(spec.clone(), Arc::clone(&data)).unwrap();
        let reg = RegularizedObjective::new(Arc::new(mlp), rng.gen_range(0.0..0.1)).unwrap();
        let theta = init_weights(&spec, InitScheme::Gaussian { std: 1.0 }, &mut rng).unwrap();
        let batch = random_batch(&mut rng, data.len(), 8);
        let (_, g) = reg.loss_and_grad(&theta, &batch).unwrap();
        let h = 1e-5 * (1.0 + theta.norm());
        let fd = fd_gradient(&reg, theta.values(), &batch, h);
        let err = rel_err(g.values(), &fd);
        assert!(err <= 1e-5, "trial {trial}: rel err {err}");
    }
}

#[test]
fn backprop_matches_finite_differences_on_relu_nets_away_from_kinks() {
    let mut rng = rng_from_seed(77);
    let data = blobs(2, 4, 8, 2);
    let spec = MlpSpec::uniform(vec![2, 6, 5, 4], Activation::Relu).unwrap();
    let mlp = Mlp::new(spec.clone(), Arc::clone(&data)).unwrap();
    let mut checked = 0;
    while checked < 30 {
        let theta = init_weights(&spec, InitScheme::Gaussian { std: 1.0 }, &mut rng).unwrap();
        let batch = random_batch(&mut rng, data.len(), 6);
        let near_kink = batch.iter().any(|&i| {
            mlp_forward(&spec, &theta, data.input(i))
                .unwrap()
                .pre_activations
                .iter()
                .flatten()
                .any(|z| z.abs() < 1e-6)
        });
        if near_kink {
            continue;
        }
        let (_, g) = loss_and_grad(&mlp, &theta, &batch).unwrap();
        let fd = fd_gradient(&mlp, theta.values(), &batch, 1e-5 * (1.0 + theta.norm()));
        assert!(rel_err(g.values(), &fd) <= 1e-5);
        checked += 1;
    }
}

#[test]
fn batchnorm_net_gradient_matches_finite_differences() {
    let mut rng = rng_from_seed(31);
    let data = blobs(3, 3, 10, 4);
    let spec = MlpSpec::uniform(vec![3, 5, 3], Activation::Tanh).unwrap();
    let net = BnMlp::new(spec, Arc::clone(&data), 1e-3).unwrap();
    for _ in 0..20 {
        let theta = net.init(InitScheme::Gaussian { std: 1.0 }, 2.0, &mut rng).unwrap();
        let mut theta = theta;
        // Non-zero shift so its gradient path is exercised.
        for v in theta.block_mut(net.shift_block()) {
            *v = rng.gen_range(-1.0..1.0);
        }
        let batch = random_batch(&mut rng, data.len(), 4);
        let (_, g) = loss_and_grad(&net, &theta, &batch).unwrap();
        let fd = fd_gradient(&net, theta.values(), &batch, 1e-5 * (1.0 + theta.norm()));
        let err = rel_err(g.values(), &fd);
        assert!(err <= 1e-5, "rel err {err}");
    }
}

#[test]
fn batchnorm_net_rejects_single_example_batches() {
    let data = blobs(2, 2, 4, 5);
    let spec = MlpSpec::uniform(vec![2, 3, 2], Activation::Relu).unwrap();
    let net = BnMlp::new(spec, data, DEFAULT_BN_EPSILON).unwrap();
    let theta = ParamVector::zeros(net.blocks());
    assert!(net.loss(theta.values(), &[0]).is_err());
}

#[test]
fn identical_batch_gives_zero_scale_gradient() {
    let data = blobs(2, 2, 4, 5);
    let spec = MlpSpec::uniform(vec![2, 3, 2], Activation::Tanh).unwrap();
    let net = BnMlp::new(spec, data, DEFAULT_BN_EPSILON).unwrap();
    let mut rng = rng_from_seed(8);
    let theta = net.init(InitScheme::Gaussian { std: 1.0 }, 4.0, &mut rng).unwrap();
    let fwd = net.forward_batch(theta.values(), &[3, 3, 3, 3]).unwrap();
    assert!(fwd.normalized.iter().all(|&v| v == 0.0));
    let (_, g) = loss_and_grad(&net, &theta, &[3, 3, 3, 3]).unwrap();
    assert!(g.block(net.scale_block()).iter().all(|&v| v == 0.0));
}

#[test]
fn full_batch_unregularized_equals_dataset_loss() {
    let data = blobs(2, 3, 5, 6);
    let spec = MlpSpec::uniform(vec![2, 4, 3], Activation::Tanh).unwrap();
    let mlp = Mlp::new(spec.clone(), Arc::clone(&data)).unwrap();
    let mut rng = rng_from_seed(3);
    let theta = init_weights(&spec, InitScheme::Gaussian { std: 1.0 }, &mut rng).unwrap();
    let reg = RegularizedObjective::new(Arc::new(mlp.clone()), 0.0).unwrap();
    let (l, _) = reg.loss_and_grad(&theta, &full_batch(data.len())).unwrap();
    // L_S(θ) = (1/N) Σ ℓ(f(xⁱ,θ), yⁱ), evaluated through the single-input trace.
    let direct: f64 = (0..data.len())
        .map(|i| {
            let t = mlp_forward(&spec, &theta, data.input(i)).unwrap();
            training_cross_entropy(t.logits(), data.label(i), None).unwrap()
        })
        .sum::<f64>()
        / data.len() as f64;
    assert!((l - direct).abs() <= 1e-14 * direct.abs().max(1.0));
}

#[test]
fn per_example_gradients_average_to_full_gradient() {
    let data = blobs(3, 3, 20, 9);
    let spec = MlpSpec::uniform(vec![3, 6, 3], Activation::Tanh).unwrap();
    let mlp = Mlp::new(spec.clone(), Arc::clone(&data)).unwrap();
    let mut rng = rng_from_seed(10);
    let theta = init_weights(&spec, InitScheme::Gaussian { std: 1.0 }, &mut rng).unwrap();
    let per = per_example_grads(&mlp, &theta, PER_EXAMPLE_CAP).unwrap();
    assert_eq!(per.len(), data.len());
    let mut mean = vec![0.0; theta.len()];
    for g in &per {
        for (m, v) in mean.iter_mut().zip(g.values()) {
            *m += v / data.len() as f64;
        }
    }
    let (_, full) = loss_and_grad(&mlp, &theta, &full_batch(data.len())).unwrap();
    assert!(rel_err(&mean, full.values()) <= 1e-12);
    assert!(per_example_grads(&mlp, &theta, 10).is_err());
}

#[test]
fn per_example_gradients_single_and_duplicated() {
    let base = blobs(2, 2, 1, 11);
    let spec = MlpSpec::uniform(vec![2, 3, 2], Activation::Tanh).unwrap();
    let mut rng = rng_from_seed(12);
    let theta = init_weights(&spec, InitScheme::Gaussian { std: 1.0 }, &mut rng).unwrap();

    let one = Dataset::new(base.input(0).to_vec(), 2, vec![base.label(0)], 2).unwrap();
    let mlp1 = Mlp::new(spec.clone(), Arc::new(one)).unwrap();
    let per = per_example_grads(&mlp1, &theta, PER_EXAMPLE_CAP).unwrap();
    let (_, full) = loss_and_grad(&mlp1, &theta, &[0]).unwrap();
    assert_eq!(per.len(), 1);
    assert_eq!(per[0], full);

    let doubled = Arc::new(base.repeated(2).unwrap());
    let mlp2 = Mlp::new(spec, Arc::clone(&doubled)).unwrap();
    let per = per_example_grads(&mlp2, &theta, PER_EXAMPLE_CAP).unwrap();
    let n = base.len();
    for i in 0..n {
        assert_eq!(per[i], per[i + n]);
    }
}

#[test]
fn hvp_matches_dense_finite_difference_hessian() {
    let mut rng = rng_from_seed(13);
    let data = blobs(2, 3, 6, 14);
    for _ in 0..10 {
        // 2·4 + 4·3 = 20 parameters
        let spec = MlpSpec::uniform(vec![2, 4, 3], Activation::Tanh).unwrap();
        let mlp = Mlp::new(spec.clone(), Arc::clone(&data)).unwrap();
        let theta = init_weights(&spec, InitScheme::Gaussian { std: 1.0 }, &mut rng).unwrap();
        let batch = full_batch(data.len());
        let p = theta.len();
        let hess = fd_hessian(&mlp, theta.values(), &batch, 1e-4);
        let v: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let hv = hvp(&mlp, &theta, &v, &batch, HVP_EPS).unwrap();
        let dense: Vec<f64> = (0..p).map(|i| (0..p).map(|j| hess[i * p + j] * v[j]).sum()).collect();
        let err = rel_err(hv.values(), &dense);
        assert!(err <= 1e-3, "rel err {err}");
    }
}

#[test]
fn hvp_is_symmetric_on_smooth_nets() {
    let mut rng = rng_from_seed(15);
    let data = blobs(3, 3, 8, 16);
    let spec = MlpSpec::uniform(vec![3, 5, 5, 3], Activation::Tanh).unwrap();
    let mlp = Mlp::new(spec.clone(), Arc::clone(&data)).unwrap();
    let batch = full_batch(data.len());
    for _ in 0..20 {
        let theta = init_weights(&spec, InitScheme::Gaussian { std: 1.0 }, &mut rng).unwrap();
        let u: Vec<f64> = (0..theta.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..theta.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let hu = hvp(&mlp, &theta, &u, &batch, HVP_EPS).unwrap();
        let hv = hvp(&mlp, &theta, &v, &batch, HVP_EPS).unwrap();
        let a = ergodyn::numeric::dot(&u, hv.values());
        let b = ergodyn::numeric::dot(&v, hu.values());
        let scale = a.abs().max(b.abs()).max(1e-8);
        assert!((a - b).abs() / scale <= 1e-3, "{a} vs {b}");
    }
}

#[test]
fn operator_norm_matches_jacobi_svd() {
    let mut rng = rng_from_seed(17);
    for _ in 0..50 {
        let w: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let oracle = jacobi_singular_values(&w, 8, 5)[0];
        let est = operator_norm(&w, 8, 5).unwrap();
        assert!(est.converged);
        assert!((est.value - oracle).abs() / oracle <= 1e-8, "{} vs {oracle}", est.value);
        // Transposed shape exercises the other Gram side.
        let wt: Vec<f64> = (0..5).flat_map(|j| (0..8).map(move |i| (i, j))).map(|(i, j)| w[i * 5 + j]).collect();
        let est_t = operator_norm(&wt, 5, 8).unwrap();
        assert!((est_t.value - oracle).abs() / oracle <= 1e-8);
    }
}

#[test]
fn forward_norms_bounded_inside_compact_set() {
    let mut rng = rng_from_seed(19);
    let data = blobs(3, 3, 20, 20);
    for act in [Activation::Relu, Activation::Tanh] {
        for _ in 0..20 {
            let spec = MlpSpec::uniform(vec![3, 7, 6, 5, 3], act).unwrap();
            let w = rng.gen_range(0.3..2.0);
            let theta = init_weights(&spec, InitScheme::CompactSet { w }, &mut rng).unwrap();
            let rho = w * spec.activation_lipschitz();
            for i in 0..data.len() {
                let t = mlp_forward(&spec, &theta, data.input(i)).unwrap();
                for (l, x) in t.activations.iter().enumerate() {
                    let n = ergodyn::numeric::norm(x);
                    assert!(n <= rho.powi(l as i32) * (1.0 + 1e-12), "layer {l}: {n}");
                }
            }
        }
    }
}

#[test]
fn cross_entropy_lemma_sweep() {
    let mut rng = rng_from_seed(21);
    for _ in 0..1000 {
        let d = rng.gen_range(2..12);
        let c = rng.gen_range(0.0..20.0);
        let base = rng.gen_range(-50.0..50.0);
        let x: Vec<f64> = (0..d).map(|_| base + rng.gen_range(0.0..=c)).collect();
        let y = rng.gen_range(0..d);
        let (v, g) = cross_entropy(&x, y).unwrap();
        assert!(v.abs() <= c + (d as f64).ln() + 1e-12);
        assert!(ergodyn::numeric::norm(&g) <= 2f64.sqrt() + 1e-9);
    }
}
