//! Finite-difference checks of every layer kind, routing and head coupling.

use xmodal::netcore::*;
use xmodal::rng;
use xmodal::synthgen::{CovariateSchema, FeatureShape, Modality, Sample};

fn schema() -> CovariateSchema {
    CovariateSchema::new(vec![("id".into(), 5), ("gender".into(), 2)]).unwrap()
}

fn random_sample(modality: Modality, shape: &[usize], seed: u64) -> Sample {
    let mut r = rng::stream(seed);
    let n = shape.iter().product();
    Sample {
        modality,
        features: Tensor::from_vec(
            shape.to_vec(),
            (0..n).map(|_| rng::normal(&mut r)).collect(),
        )
        .unwrap(),
        labels: vec![rng::below(&mut r, 5), rng::below(&mut r, 2)],
        id_index: 0,
    }
}

fn batch_for(spec: &NetworkSpec, n_a: usize, n_b: usize, seed: u64) -> Vec<Sample> {
    let mut out = Vec::new();
    for i in 0..n_a {
        out.push(random_sample(
            Modality::A,
            &spec.input_a.0,
            seed * 100 + i as u64,
        ));
    }
    for i in 0..n_b {
        out.push(random_sample(
            Modality::B,
            &spec.input_b.0,
            seed * 100 + 50 + i as u64,
        ));
    }
    out
}

/// Gives batchnorm shift/scale and running stats non-trivial values.
fn perturbed_params(spec: &NetworkSpec, seed: u64) -> ParamStore {
    let mut p = ParamStore::init(spec, seed).unwrap();
    let mut r = rng::stream(seed ^ 0xfeed);
    for (slot, t) in p.tensors_mut(spec) {
        match slot.role {
            Role::Bias | Role::BnShift => t
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.3 * rng::normal(&mut r)),
            Role::BnScale => t
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 1.0 + 0.3 * rng::normal(&mut r)),
            Role::RunningMean => t
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.1 * rng::normal(&mut r)),
            Role::RunningVar => t
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 1.0 + rng::uniform(&mut r)),
            Role::Weight => {}
        }
    }
    p
}

fn check(name: &str, spec: &NetworkSpec, n_a: usize, n_b: usize) -> f64 {
    check_eps(name, spec, n_a, n_b, 1e-6)
}

fn check_eps(name: &str, spec: &NetworkSpec, n_a: usize, n_b: usize, eps: f64) -> f64 {
    let params = perturbed_params(spec, 3);
    let batch = batch_for(spec, n_a, n_b, 7);
    let refs: Vec<&Sample> = batch.iter().collect();
    let rep = grad_check_with(
        spec,
        &params,
        &refs,
        &[1.0, 0.7],
        eps,
        GradCheckOptions::default(),
    )
    .unwrap();
    println!(
        "{name}: max rel err {:.3e} at {:?} (analytic {:.6e}, numeric {:.6e}, {} coords)",
        rep.max_relative_error, rep.worst, rep.analytic, rep.numeric, rep.checked
    );
    rep.max_relative_error
}

fn net(
    layers_a: Vec<LayerSpec>,
    in_a: Vec<usize>,
    layers_b: Vec<LayerSpec>,
    in_b: Vec<usize>,
    d: usize,
) -> NetworkSpec {
    NetworkSpec::new(
        FeatureShape(in_a),
        FeatureShape(in_b),
        layers_a,
        layers_b,
        d,
        schema(),
    )
    .unwrap()
}

#[test]
fn dense_relu() {
    let l = vec![
        LayerSpec::Dense { out: 6 },
        LayerSpec::Relu,
        LayerSpec::Dense { out: 4 },
    ];
    let spec = net(l.clone(), vec![5], l, vec![5], 4);
    assert!(check("dense+relu", &spec, 3, 2) < 1e-4);
}

#[test]
fn batchnorm_train_mode() {
    let l = vec![
        LayerSpec::Dense { out: 6 },
        LayerSpec::BatchNorm,
        LayerSpec::Relu,
        LayerSpec::Dense { out: 4 },
    ];
    let spec = net(l.clone(), vec![5], l, vec![3], 4);
    assert!(check("batchnorm", &spec, 4, 3) < 1e-4);
}

#[test]
fn batchnorm_single_sample_subbatch() {
    let l = vec![
        LayerSpec::Dense { out: 6 },
        LayerSpec::BatchNorm,
        LayerSpec::Dense { out: 4 },
    ];
    let spec = net(l.clone(), vec![5], l, vec![3], 4);
    assert!(check("batchnorm (1 sample)", &spec, 1, 3) < 1e-4);
}

#[test]
fn conv1d_and_pool() {
    let a = vec![
        LayerSpec::conv1d(3, 4, 2, 1),
        LayerSpec::BatchNorm,
        LayerSpec::Relu,
        LayerSpec::conv1d(3, 4, 1, 1),
        LayerSpec::GlobalAvgPool,
    ];
    let b = vec![LayerSpec::Dense { out: 4 }];
    let spec = net(a, vec![9, 2], b, vec![3], 4);
    assert!(check("conv1d", &spec, 3, 2) < 1e-4);
}

#[test]
fn conv2d_and_pool() {
    let a = vec![LayerSpec::Dense { out: 4 }];
    let b = vec![
        LayerSpec::conv2d(3, 3, 2, 1),
        LayerSpec::BatchNorm,
        LayerSpec::Relu,
        LayerSpec::conv2d(3, 4, 1, 1),
        LayerSpec::GlobalAvgPool,
    ];
    let spec = net(a, vec![3], b, vec![5, 5, 2], 4);
    assert!(check("conv2d", &spec, 2, 3) < 1e-4);
}

#[test]
fn linear_softmax_is_tight() {
    let l = vec![LayerSpec::Dense { out: 4 }];
    let spec = net(l.clone(), vec![3], l, vec![3], 4);
    let err = check_eps("linear", &spec, 2, 2, 1e-5);
    assert!(err < 1e-8, "{err}");
}

fn mlp_spec() -> NetworkSpec {
    NetworkSpec::mlp(
        FeatureShape(vec![5]),
        FeatureShape(vec![4]),
        &[6],
        3,
        schema(),
    )
    .unwrap()
}

#[test]
fn all_b_batch_leaves_branch_a_untouched() {
    let spec = mlp_spec();
    let params = perturbed_params(&spec, 1);
    let batch = batch_for(&spec, 0, 4, 2);
    let refs: Vec<&Sample> = batch.iter().collect();
    let fwd = forward_batch(&spec, &params, &refs, Mode::Train).unwrap();
    let g = backward(&spec, &params, &refs, &[1.0, 1.0], &fwd).unwrap();
    assert!(!g.active_a && g.active_b);
    for lp in &g.grads.branch_a {
        for t in &lp.tensors {
            assert!(t.data().iter().all(|v| *v == 0.0));
        }
    }
    assert!(g.grads.branch_b[0].tensors[0].max_abs() > 0.0);
}

#[test]
fn zero_lambda_zero_gradient() {
    let spec = mlp_spec();
    let params = perturbed_params(&spec, 1);
    let batch = batch_for(&spec, 3, 3, 2);
    let refs: Vec<&Sample> = batch.iter().collect();
    let fwd = forward_batch(&spec, &params, &refs, Mode::Train).unwrap();
    let g = backward(&spec, &params, &refs, &[0.0, 0.0], &fwd).unwrap();
    assert!(g
        .grads
        .tensors(&spec)
        .iter()
        .all(|(_, t)| t.max_abs() == 0.0));
    assert_eq!(
        total_loss(&spec, &params, &refs, &[0.0, 0.0])
            .unwrap()
            .total,
        0.0
    );
}

#[test]
fn mixed_batch_head_gradient_is_weighted_sum_of_sub_batches() {
    let spec = mlp_spec();
    let params = perturbed_params(&spec, 4);
    let batch = batch_for(&spec, 3, 5, 9);
    let refs: Vec<&Sample> = batch.iter().collect();
    let lambda = [1.0, 0.5];
    let grad = |b: &[&Sample]| {
        let fwd = forward_batch(&spec, &params, b, Mode::Train).unwrap();
        backward(&spec, &params, b, &lambda, &fwd).unwrap().grads
    };
    let mixed = grad(&refs);
    let ga = grad(&refs[..3]);
    let gb = grad(&refs[3..]);
    // each term is a batch mean, so sub-batch gradients carry weight n_sub / n
    for c in 0..2 {
        for (field, (m, (a, b))) in [
            (
                mixed.heads[c].weight.data(),
                (ga.heads[c].weight.data(), gb.heads[c].weight.data()),
            ),
            (
                mixed.heads[c].bias.data(),
                (ga.heads[c].bias.data(), gb.heads[c].bias.data()),
            ),
        ]
        .into_iter()
        .enumerate()
        {
            for k in 0..m.len() {
                let want = 3.0 / 8.0 * a[k] + 5.0 / 8.0 * b[k];
                assert!(
                    (m[k] - want).abs() < 1e-12,
                    "head {c} field {field} coord {k}"
                );
            }
        }
    }
    // branch gradients of the mixed batch are exactly the sub-batch ones, rescaled
    let ma = mixed.branch_a[0].tensors[0].data();
    let sa = ga.branch_a[0].tensors[0].data();
    for k in 0..ma.len() {
        assert!((ma[k] - 3.0 / 8.0 * sa[k]).abs() < 1e-12);
    }
}

#[test]
fn additivity_of_covariate_terms() {
    let spec = mlp_spec();
    let params = perturbed_params(&spec, 5);
    let batch = batch_for(&spec, 2, 3, 1);
    let refs: Vec<&Sample> = batch.iter().collect();
    let both = total_loss(&spec, &params, &refs, &[1.0, 1.0])
        .unwrap()
        .total;
    let id = total_loss(&spec, &params, &refs, &[1.0, 0.0])
        .unwrap()
        .total;
    let g = total_loss(&spec, &params, &refs, &[0.0, 1.0])
        .unwrap()
        .total;
    assert!((both - (id + g)).abs() < 1e-12);
}

#[test]
fn single_sample_single_covariate_is_cross_entropy() {
    let spec = NetworkSpec::mlp(
        FeatureShape(vec![5]),
        FeatureShape(vec![4]),
        &[6],
        3,
        CovariateSchema::new(vec![("gender".into(), 2)]).unwrap(),
    )
    .unwrap();
    let params = perturbed_params(&spec, 2);
    let mut s = random_sample(Modality::A, &[5], 3);
    s.labels = vec![1];
    let loss = total_loss(&spec, &params, &[&s], &[1.0]).unwrap();
    let (e, _) = forward_embed(&spec, &params, &s, Mode::Train).unwrap();
    let (ce, _) = cross_entropy(&classify(&params, &e, 0).unwrap(), 1).unwrap();
    assert_eq!(loss.total, ce);
    assert_eq!(loss.per_covariate, vec![ce]);
}

#[test]
fn forward_is_deterministic() {
    let spec = mlp_spec();
    let params = perturbed_params(&spec, 5);
    let batch = batch_for(&spec, 4, 4, 1);
    let refs: Vec<&Sample> = batch.iter().collect();
    let a = forward_batch(&spec, &params, &refs, Mode::Train)
        .unwrap()
        .embeddings;
    let b = forward_batch(&spec, &params, &refs, Mode::Train)
        .unwrap()
        .embeddings;
    assert_eq!(a, b);
}

#[test]
fn shape_mismatch_is_reported() {
    let spec = mlp_spec();
    let params = perturbed_params(&spec, 5);
    let s = random_sample(Modality::A, &[4], 0);
    assert!(forward_embed(&spec, &params, &s, Mode::Infer).is_err());
}
