use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::numerics::{low_rank_psd_eig, orthonormalize, procrustes, top_svd};
use crate::scalar::Real;
use crate::tolerances::TOLERANCES;
use crate::types::{BlockFunctions, FitOptions, InitMethod, Mode, MultiViewDataset, RankSet, SifaParams};

fn floor_variance<T: Real>(v: T) -> T {
    let floor = T::lit(TOLERANCES.factor_variance_floor);
    if v > floor {
        v
    } else {
        floor
    }
}

/// Sorts columns of `loadings` (all blocks share the column index) by
/// decreasing variance.
fn sort_by_variance<T: Real>(variances: &mut DVector<T>, loadings: &mut [DMatrix<T>]) {
    let mut order: Vec<usize> = (0..variances.len()).collect();
    order.sort_by(|&a, &b| {
        variances[b]
            .partial_cmp(&variances[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    *variances = DVector::from_iterator(order.len(), order.iter().map(|&j| variances[j]));
    for l in loadings.iter_mut() {
        *l = l.select_columns(&order);
    }
}

fn split_rows<T: Real>(m: &DMatrix<T>, dims: &[usize]) -> Vec<DMatrix<T>> {
    let mut row = 0;
    dims.iter()
        .map(|&p| {
            let b = m.rows(row, p).into_owned();
            row += p;
            b
        })
        .collect()
}

/// Starting parameters. The SVD start takes joint directions from the
/// concatenation of Frobenius-normalized views and individual directions
/// from per-view residuals; the random start draws seeded Gaussian loadings.
/// Covariate functions start at zero either way.
pub fn init_params<T: Real>(
    data: &MultiViewDataset<T>,
    ranks: &RankSet,
    options: &FitOptions,
) -> Result<SifaParams<T>> {
    ranks.validate(&data.dims(), data.n())?;
    match options.init {
        InitMethod::Svd => svd_init(data, ranks, options.mode),
        InitMethod::Random => random_init(data, ranks, options.mode, options.seed),
    }
}

fn svd_init<T: Real>(data: &MultiViewDataset<T>, ranks: &RankSet, mode: Mode) -> Result<SifaParams<T>> {
    let k = data.num_views();
    let n = data.n();
    let nf = T::from_usize_lossy(n);
    let dims = data.dims();
    let r0 = ranks.r0;
    let sqrt_k = T::from_usize_lossy(k).sqrt();

    let (v0, sigma0) = if r0 > 0 {
        let weights: Vec<T> = data
            .views
            .iter()
            .map(|v| {
                let w = v.values.norm();
                if w > T::zero() {
                    w
                } else {
                    T::one()
                }
            })
            .collect();
        let mut normalized = data.stacked();
        let mut col = 0;
        for (i, &p) in dims.iter().enumerate() {
            let mut blk = normalized.columns_mut(col, p);
            blk /= weights[i];
            col += p;
        }
        let svd = top_svd(&normalized, r0)?;
        // Y_k ≈ L·diag(d)·(w_k·R_k)ᵀ
        let mut blocks = split_rows(&svd.right, &dims);
        for (b, &w) in blocks.iter_mut().zip(&weights) {
            *b *= w;
        }
        let ystar = data.stacked();
        match mode {
            Mode::General => {
                let mut stacked = DMatrix::zeros(dims.iter().sum(), r0);
                let mut row = 0;
                for b in &blocks {
                    stacked.rows_mut(row, b.nrows()).copy_from(b);
                    row += b.nrows();
                }
                let d2 = svd.values.map(|d| d * d / nf);
                let (vectors, _) = low_rank_psd_eig(&stacked, &d2)?;
                let u0 = &ystar * &vectors;
                let mut var = DVector::from_fn(r0, |j, _| floor_variance(u0.column(j).norm_squared() / nf));
                let mut v0 = split_rows(&vectors, &dims);
                sort_by_variance(&mut var, &mut v0);
                (v0, var)
            }
            Mode::Orthogonal => {
                let mut v0 = Vec::with_capacity(k);
                for b in &blocks {
                    v0.push(procrustes(b)? / sqrt_k);
                }
                let mut stacked = DMatrix::zeros(dims.iter().sum(), r0);
                let mut row = 0;
                for b in &v0 {
                    stacked.rows_mut(row, b.nrows()).copy_from(b);
                    row += b.nrows();
                }
                let u0 = &ystar * &stacked;
                let mut var = DVector::from_fn(r0, |j, _| floor_variance(u0.column(j).norm_squared() / nf));
                sort_by_variance(&mut var, &mut v0);
                (v0, var)
            }
        }
    } else {
        (dims.iter().map(|&p| DMatrix::zeros(p, 0)).collect(), DVector::zeros(0))
    };

    // U0 = Y★·V0 under either condition set (exact for orthonormal V0 in
    // general mode, and Σ_k V0kᵀV0k = I in orthogonal mode).
    let mut u0 = DMatrix::zeros(n, r0);
    for (i, b) in v0.iter().enumerate() {
        if r0 > 0 {
            u0 += data.view(i) * b;
        }
    }

    let mut v = Vec::with_capacity(k);
    let mut sigma = Vec::with_capacity(k);
    let mut noise_var = Vec::with_capacity(k);
    for i in 0..k {
        let yk = data.view(i);
        let pk = dims[i];
        let rk = ranks.r[i];
        let mut resid = yk - &u0 * v0[i].transpose();
        if mode == Mode::Orthogonal && r0 > 0 {
            // keep V_k orthogonal to V0k
            let basis = &v0[i] * sqrt_k;
            resid = &resid - (&resid * &basis) * basis.transpose();
        }
        let svd = top_svd(&resid, rk)?;
        let vk = svd.right;
        let var = svd.values.map(|d| floor_variance(d * d / nf));
        let remaining = &resid - (&resid * &vk) * vk.transpose();
        let ms = yk.norm_squared() / (nf * T::from_usize_lossy(pk));
        let s2 = remaining.norm_squared() / (nf * T::from_usize_lossy(pk));
        // Exactly low-rank data would give σ² = 0; keep the start well posed.
        let floor = (ms * T::lit(1e-10)).max(T::lit(TOLERANCES.noise_variance_floor));
        noise_var.push(if s2 > floor { s2 } else { floor });
        v.push(vk);
        sigma.push(var);
    }

    Ok(SifaParams {
        functions: zero_functions(ranks),
        v0,
        v,
        sigma0,
        sigma,
        noise_var,
    })
}

fn zero_functions<T: Real>(ranks: &RankSet) -> Vec<BlockFunctions<T>> {
    (0..=ranks.num_views())
        .map(|b| BlockFunctions::zero(ranks.width(b)))
        .collect()
}

fn gaussian<T: Real>(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<T> {
    DMatrix::from_fn(r, c, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)))
}

fn random_init<T: Real>(
    data: &MultiViewDataset<T>,
    ranks: &RankSet,
    mode: Mode,
    seed: u64,
) -> Result<SifaParams<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = data.num_views();
    let dims = data.dims();
    let nf = T::from_usize_lossy(data.n());
    let r0 = ranks.r0;
    let sqrt_k = T::from_usize_lossy(k).sqrt();
    let (mut v0, mut v): (Vec<DMatrix<T>>, Vec<DMatrix<T>>) = match mode {
        Mode::General => {
            let p: usize = dims.iter().sum();
            let stacked = orthonormalize(&gaussian::<T>(&mut rng, p, r0));
            let v0 = split_rows(&stacked, &dims);
            let v = dims
                .iter()
                .zip(&ranks.r)
                .map(|(&pk, &rk)| orthonormalize(&gaussian::<T>(&mut rng, pk, rk)))
                .collect();
            (v0, v)
        }
        Mode::Orthogonal => dims
            .iter()
            .zip(&ranks.r)
            .map(|(&pk, &rk)| {
                let q = orthonormalize(&gaussian::<T>(&mut rng, pk, r0 + rk));
                (q.columns(0, r0) / sqrt_k, q.columns(r0, rk).into_owned())
            })
            .unzip(),
    };

    let mut u0 = DMatrix::zeros(data.n(), r0);
    for (i, b) in v0.iter().enumerate() {
        if r0 > 0 {
            u0 += data.view(i) * b;
        }
    }
    let mut sigma0 = DVector::from_fn(r0, |j, _| floor_variance(u0.column(j).norm_squared() / nf));
    sort_by_variance(&mut sigma0, &mut v0);
    let mut sigma = Vec::with_capacity(k);
    let mut noise_var = Vec::with_capacity(k);
    for i in 0..k {
        let yk = data.view(i);
        let uk = yk * &v[i];
        let mut var = DVector::from_fn(ranks.r[i], |j, _| floor_variance(uk.column(j).norm_squared() / nf));
        sort_by_variance(&mut var, std::slice::from_mut(&mut v[i]));
        sigma.push(var);
        let ms = yk.norm_squared() / (nf * T::from_usize_lossy(dims[i]));
        noise_var.push(ms.max(T::lit(TOLERANCES.noise_variance_floor)));
    }
    Ok(SifaParams {
        functions: zero_functions(ranks),
        v0,
        v,
        sigma0,
        sigma,
        noise_var,
    })
}
