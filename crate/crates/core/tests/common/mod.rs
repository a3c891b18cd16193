//! Random model instances and dense oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sifa::numerics::orthonormalize;
use sifa::{BlockFunctions, Mode, MultiViewDataset, RankSet, RegressionFn, SifaParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn decreasing(rng: &mut ChaCha8Rng, r: usize, top: f64) -> DVector<f64> {
    let mut v = top;
    DVector::from_fn(r, |_, _| {
        let out = v;
        v *= rng.random_range(0.4..0.9);
        out
    })
}

/// Random parameters satisfying the given mode's conditions. With `q > 0`
/// every latent column gets a linear covariate function.
pub fn random_params(
    rng: &mut ChaCha8Rng,
    dims: &[usize],
    ranks: &RankSet,
    mode: Mode,
    q: usize,
) -> SifaParams<f64> {
    let k = dims.len();
    let r0 = ranks.r0;
    let (v0, v): (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) = match mode {
        Mode::Orthogonal => dims
            .iter()
            .zip(&ranks.r)
            .map(|(&p, &rk)| {
                let q = orthonormalize(&gaussian(rng, p, r0 + rk));
                (q.columns(0, r0) / (k as f64).sqrt(), q.columns(r0, rk).into_owned())
            })
            .unzip(),
        Mode::General => {
            let p: usize = dims.iter().sum();
            let stacked = orthonormalize(&gaussian(rng, p, r0));
            let mut row = 0;
            let mut v0 = Vec::new();
            let mut v = Vec::new();
            for (&pk, &rk) in dims.iter().zip(&ranks.r) {
                v0.push(stacked.rows(row, pk).into_owned());
                row += pk;
                v.push(orthonormalize(&gaussian(rng, pk, rk)));
            }
            (v0, v)
        }
    };
    let functions = (0..=k)
        .map(|b| {
            let w = ranks.width(b);
            if q == 0 {
                BlockFunctions::zero(w)
            } else {
                BlockFunctions::from_fns(
                    (0..w)
                        .map(|_| RegressionFn::Linear {
                            beta: DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal)),
                            ridge: 0.0,
                        })
                        .collect(),
                )
            }
        })
        .collect();
    SifaParams {
        functions,
        v0,
        v,
        sigma0: {
            let top = rng.random_range(2.0..6.0);
            decreasing(rng, r0, top)
        },
        sigma: ranks
            .r
            .iter()
            .map(|&rk| {
                let top = rng.random_range(1.0..4.0);
                decreasing(rng, rk, top)
            })
            .collect(),
        noise_var: dims.iter().map(|_| rng.random_range(0.3..1.5)).collect(),
    }
}

/// Draws n rows from the model (covariates standard normal, centred).
pub fn sample_data(
    rng: &mut ChaCha8Rng,
    params: &SifaParams<f64>,
    n: usize,
    q: usize,
) -> MultiViewDataset<f64> {
    sample_with_signal(rng, params, n, q).0
}

/// Like [`sample_data`], also returning the noiseless signal `U·Wᵀ`.
pub fn sample_with_signal(
    rng: &mut ChaCha8Rng,
    params: &SifaParams<f64>,
    n: usize,
    q: usize,
) -> (MultiViewDataset<f64>, DMatrix<f64>) {
    let x = if q > 0 {
        let mut x = gaussian(rng, n, q);
        for mut c in x.column_iter_mut() {
            let m = c.mean();
            c.add_scalar_mut(-m);
        }
        Some(x)
    } else {
        None
    };
    let means = params.factor_means(x.as_ref(), n).unwrap();
    let factors = params.covariance_factors();
    let prior = factors.prior_diag();
    let u = means + DMatrix::from_fn(n, prior.len(), |_, j| prior[j].sqrt() * rng.sample::<f64, _>(StandardNormal));
    let w = factors.combined_loadings();
    let signal = u * w.transpose();
    let mut views = Vec::new();
    let mut col = 0;
    for (k, &pk) in params.dims().iter().enumerate() {
        let sd = params.noise_var[k].sqrt();
        let e = gaussian(rng, n, pk) * sd;
        views.push(signal.columns(col, pk) + e);
        col += pk;
    }
    (MultiViewDataset::new_unchecked(views, x), signal)
}

/// Dense `Σ★`.
pub fn dense_cov(params: &SifaParams<f64>) -> DMatrix<f64> {
    let f = params.covariance_factors();
    let w = f.combined_loadings();
    let d = DMatrix::from_diagonal(&f.prior_diag());
    let mut s = &w * d * w.transpose();
    let mut row = 0;
    for (k, &pk) in params.dims().iter().enumerate() {
        for i in row..row + pk {
            s[(i, i)] += params.noise_var[k];
        }
        row += pk;
    }
    s
}

/// Dense Gaussian-conditioning oracle: (EU, C, log-likelihood).
pub fn dense_oracle(
    params: &SifaParams<f64>,
    data: &MultiViewDataset<f64>,
) -> (DMatrix<f64>, DMatrix<f64>, f64) {
    let n = data.n();
    let f = params.covariance_factors();
    let w = f.combined_loadings();
    let d = DMatrix::from_diagonal(&f.prior_diag());
    let sigma = dense_cov(params);
    let chol = sigma.clone().cholesky().expect("Σ★ is positive definite");
    let inv = chol.inverse();
    let means = params.factor_means(data.covariates.as_ref(), n).unwrap();
    let z = data.stacked() - &means * w.transpose();
    let gain = &inv * &w * &d;
    let eu = means + &z * &gain;
    let c = &d - &d * w.transpose() * &gain;
    let p = sigma.nrows() as f64;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let quad = (&z * &inv).component_mul(&z).sum();
    let ll = -0.5 * (n as f64 * p * (2.0 * std::f64::consts::PI).ln() + n as f64 * logdet + quad);
    (eu, c, ll)
}

pub fn random_dims(rng: &mut ChaCha8Rng, k: usize, lo: usize, hi: usize) -> Vec<usize> {
    (0..k).map(|_| rng.random_range(lo..=hi)).collect()
}

/// Random small rank set valid for `dims`.
pub fn random_ranks(rng: &mut ChaCha8Rng, dims: &[usize]) -> RankSet {
    let min_p = *dims.iter().min().unwrap();
    let r0 = rng.random_range(0..=2.min(min_p / 2));
    let r = dims
        .iter()
        .map(|&p| rng.random_range(0..=2.min(p - r0 - 1)))
        .collect();
    RankSet::new(r0, r)
}
