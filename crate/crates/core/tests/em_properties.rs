mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sifa::numerics::{low_rank_psd_eig, sym_eig_desc};
use sifa::{
    check_conditions, fit, log_likelihood, Configuration, FitOptions, Mode, RankSet,
    RegressionFamily,
};

fn options(mode: Mode) -> FitOptions {
    FitOptions {
        mode,
        max_iters: 80,
        tol: 1e-12,
        ..FitOptions::default()
    }
}

fn non_decreasing(trace: &[f64], rel: f64) -> Option<usize> {
    trace
        .windows(2)
        .position(|w| w[1] < w[0] - rel * w[0].abs())
}

fn random_instance(seed: u64, mode: Mode) -> (sifa::MultiViewDataset<f64>, RankSet) {
    let mut rng = rng(seed);
    let k = rng.random_range(1..=3);
    let dims = random_dims(&mut rng, k, 5, 12);
    let ranks = random_ranks(&mut rng, &dims);
    let q = rng.random_range(0..=3);
    let params = random_params(&mut rng, &dims, &ranks, mode, q);
    (sample_data(&mut rng, &params, 60, q), ranks)
}

#[test]
fn orthogonal_trace_is_monotone() {
    for seed in 0..50 {
        let (data, ranks) = random_instance(seed, Mode::Orthogonal);
        let rep = fit(&data, &ranks, &options(Mode::Orthogonal)).unwrap();
        assert_eq!(
            non_decreasing(&rep.loglik_trace, 1e-8),
            None,
            "seed {seed}: {:?}",
            rep.loglik_trace
        );
        let cond = check_conditions(&rep.params);
        assert!(cond.satisfied(Mode::Orthogonal, 1e-8), "seed {seed}: {cond:?}");
    }
}

#[test]
fn general_trace_is_monotone() {
    for seed in 0..50 {
        let (data, ranks) = random_instance(500 + seed, Mode::General);
        let rep = fit(&data, &ranks, &options(Mode::General)).unwrap();
        assert_eq!(
            non_decreasing(&rep.loglik_trace, 1e-8),
            None,
            "seed {seed}: {:?}",
            rep.loglik_trace
        );
        let cond = check_conditions(&rep.params);
        assert!(cond.satisfied(Mode::General, 1e-8), "seed {seed}: {cond:?}");
    }
}

/// Rotating relaxed joint loadings onto the eigenvectors of `Ṽ0·Σ0·Ṽ0ᵀ`
/// and pushing the rotation into the joint functions leaves the
/// likelihood unchanged.
#[test]
fn renormalization_preserves_likelihood() {
    for seed in 0..50 {
        let mut rng = rng(1000 + seed);
        let k = rng.random_range(2..=3);
        let dims = random_dims(&mut rng, k, 5, 10);
        let r0 = rng.random_range(1..=2);
        let ranks = RankSet::new(r0, dims.iter().map(|_| rng.random_range(0..=2)).collect());
        let q = rng.random_range(0..=2);
        let mut relaxed = random_params(&mut rng, &dims, &ranks, Mode::General, q);
        for b in &mut relaxed.v0 {
            *b += gaussian(&mut rng, b.nrows(), r0) * 0.3;
        }
        relaxed.sigma0 = DVector::from_fn(r0, |_, _| rng.random_range(0.5..3.0));
        let data = sample_data(&mut rng, &relaxed, 40, q);
        let before = log_likelihood(&relaxed, &data).unwrap();

        let stacked = relaxed.stacked_v0();
        let (vectors, values) = low_rank_psd_eig(&stacked, &relaxed.sigma0).unwrap();
        let rotation = stacked.transpose() * &vectors;
        let mut renorm = relaxed.clone();
        let mut row = 0;
        for b in &mut renorm.v0 {
            *b = vectors.rows(row, b.nrows()).into_owned();
            row += b.nrows();
        }
        renorm.sigma0 = values;
        renorm.functions[0].transform_outputs(&rotation);
        let after = log_likelihood(&renorm, &data).unwrap();
        assert!((after - before).abs() <= 1e-8 * before.abs(), "seed {seed}: {before} vs {after}");
        assert!(check_conditions(&renorm).joint_orthonormal < 1e-10);
    }
}

/// One view, no individual structure, no covariates: the fit is
/// probabilistic PCA, whose maximizer is available in closed form.
#[test]
fn single_view_fit_is_probabilistic_pca() {
    let mut rng = rng(42);
    let (n, p, r) = (400, 12, 2);
    let params = random_params(&mut rng, &[p], &RankSet::new(r, vec![0]), Mode::General, 0);
    let data = sample_data(&mut rng, &params, n, 0);
    let (data, _) = data.center();
    let y = data.view(0);
    let s = y.transpose() * y / n as f64;
    let (vecs, vals) = sym_eig_desc(&s).unwrap();
    let sigma2 = vals.rows(r, p - r).sum() / (p - r) as f64;
    let opts = FitOptions { max_iters: 5000, tol: 1e-14, ..FitOptions::default() };
    let rep = fit(&data, &RankSet::new(r, vec![0]), &opts).unwrap();
    assert!((rep.params.noise_var[0] - sigma2).abs() < 1e-6 * sigma2);
    for j in 0..r {
        let expect = vals[j] - sigma2;
        assert!((rep.params.sigma0[j] - expect).abs() < 1e-5 * expect, "{j}");
    }
    let top = vecs.columns(0, r).into_owned();
    let dist = sifa::metrics::grassmannian(&top, &rep.params.v0[0]).unwrap();
    assert!(dist < 1e-5, "{dist}");
}

#[test]
fn fit_is_deterministic() {
    let (data, ranks) = random_instance(9, Mode::General);
    let a = fit(&data, &ranks, &options(Mode::General)).unwrap();
    let b = fit(&data, &ranks, &options(Mode::General)).unwrap();
    assert_eq!(a.loglik_trace, b.loglik_trace);
    assert_eq!(a.params, b.params);
}

#[test]
fn random_start_is_seeded() {
    let (data, ranks) = random_instance(10, Mode::Orthogonal);
    let mut opts = options(Mode::Orthogonal);
    opts.init = sifa::InitMethod::Random;
    opts.seed = 5;
    let a = fit(&data, &ranks, &opts).unwrap();
    let b = fit(&data, &ranks, &opts).unwrap();
    assert_eq!(a.final_loglik(), b.final_loglik());
}

/// Exactly noiseless data makes the likelihood unbounded (a view whose
/// data rank equals r0 + r_k is fit exactly for any joint direction), so
/// the check uses small positive noise.
#[test]
fn low_noise_signal_is_recovered() {
    let mut rng = rng(77);
    let dims = vec![10, 9];
    let ranks = RankSet::new(1, vec![2, 1]);
    let mut params = random_params(&mut rng, &dims, &ranks, Mode::Orthogonal, 2);
    params.noise_var = vec![1e-4, 1e-4];
    let (data, signal) = sample_with_signal(&mut rng, &params, 80, 2);
    for mode in [Mode::Orthogonal, Mode::General] {
        let opts = FitOptions { max_iters: 3000, ..options(mode) };
        let rep = fit(&data, &ranks, &opts).unwrap();
        let rel = sifa::metrics::fit_recovery_error(&signal, &rep).unwrap() / signal.norm();
        assert!(rel < 1e-2, "{mode}: {rel}");
    }
}

#[test]
fn missing_covariates_give_jive_configuration() {
    let (mut data, ranks) = random_instance(12, Mode::General);
    data.covariates = None;
    let rep = fit(&data, &ranks, &options(Mode::General)).unwrap();
    assert_eq!(rep.configuration, Configuration::Jive);
    assert_eq!(rep.configuration.to_string(), "JIVE configuration (f=0)");
    assert!(rep.params.functions.iter().all(|f| f.is_zero()));
}

#[test]
fn factor_variances_are_sorted_and_signs_fixed() {
    for seed in 0..10 {
        let (data, ranks) = random_instance(300 + seed, Mode::General);
        let rep = fit(&data, &ranks, &options(Mode::General)).unwrap();
        assert!(check_conditions(&rep.params).sigma_ordered);
        assert_eq!(rep.params.sign_flips(), DVector::from_element(ranks.total(), 1.0));
    }
}

#[test]
fn sparse_and_kernel_backends_fit() {
    let mut rng = rng(31);
    let dims = vec![8, 8];
    let ranks = RankSet::new(1, vec![1, 1]);
    let params = random_params(&mut rng, &dims, &ranks, Mode::Orthogonal, 1);
    let data = sample_data(&mut rng, &params, 120, 1);
    for family in [RegressionFamily::Lasso, RegressionFamily::Kernel] {
        let opts = FitOptions { mode: Mode::Orthogonal, regression: family, max_iters: 60, ..FitOptions::default() };
        let rep = fit(&data, &ranks, &opts).unwrap();
        assert_eq!(rep.regression, Some(family));
        assert!(rep.final_loglik() > rep.loglik_trace[0]);
        assert!(check_conditions(&rep.params).satisfied(Mode::Orthogonal, 1e-8));
    }
}

#[test]
fn f32_fit_runs() {
    let (data, ranks) = random_instance(4, Mode::Orthogonal);
    let cast = sifa::MultiViewDataset::<f32>::new_unchecked(
        data.views.iter().map(|v| v.values.map(|x| x as f32)).collect(),
        data.covariates.as_ref().map(|x: &DMatrix<f64>| x.map(|v| v as f32)),
    );
    let rep = fit(&cast, &ranks, &FitOptions { mode: Mode::Orthogonal, tol: 1e-5, ..FitOptions::default() }).unwrap();
    assert!(rep.final_loglik().is_finite());
}
