use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Result, SifaError};
use crate::numerics::{low_rank_psd_eig, procrustes};
use crate::regression::{RegressionFn, Regressor};
use crate::scalar::Real;
use crate::tolerances::TOLERANCES;
use crate::types::{BlockFunctions, LatentMoments, MultiViewDataset, RankSet};

/// New covariate functions and factor variances. `order` is the latent
/// column permutation that sorted every Σ block non-increasing: new column
/// j corresponds to old column `order[j]`.
#[derive(Debug, Clone)]
pub struct RegressionUpdate<T: Real> {
    pub functions: Vec<BlockFunctions<T>>,
    pub sigma0: DVector<T>,
    pub sigma: Vec<DVector<T>>,
    pub order: Vec<usize>,
    /// Number of variances raised to the floor.
    pub floored: usize,
}

/// Fits one function per latent column of EU and sets each factor variance
/// to `(‖EU_j − f̂_j(X)‖² + n·C_jj)/n`. Without a regressor every `f ≡ 0`.
pub fn mstep_regressions<T: Real>(
    moments: &LatentMoments<T>,
    ranks: &RankSet,
    regressor: Option<&Regressor<T>>,
) -> Result<RegressionUpdate<T>> {
    let n = moments.n();
    let nf = T::from_usize_lossy(n);
    let total = ranks.total();
    if moments.eu.ncols() != total {
        return Err(SifaError::DimensionMismatch(format!(
            "moments have {} latent columns, ranks need {total}",
            moments.eu.ncols()
        )));
    }
    let fits: Vec<(RegressionFn<T>, T)> = (0..total)
        .into_par_iter()
        .map(|j| {
            let y = moments.eu.column(j).into_owned();
            let (f, resid) = match regressor {
                Some(reg) => {
                    let (f, fitted) = reg.fit(&y)?;
                    (f, (&y - fitted).norm_squared())
                }
                None => (RegressionFn::Zero, y.norm_squared()),
            };
            Ok((f, (resid + nf * moments.c[(j, j)]) / nf))
        })
        .collect::<Result<_>>()?;

    let floor = T::lit(TOLERANCES.factor_variance_floor);
    let mut floored = 0;
    let mut order = Vec::with_capacity(total);
    let mut blocks = Vec::with_capacity(ranks.num_views() + 1);
    let mut variances = Vec::with_capacity(ranks.num_views() + 1);
    for b in 0..=ranks.num_views() {
        let off = ranks.offset(b);
        let mut idx: Vec<usize> = (off..off + ranks.width(b)).collect();
        let var = |j: usize| {
            let v = fits[j].1;
            if v > floor {
                v
            } else {
                floor
            }
        };
        idx.sort_by(|&a, &c| var(c).partial_cmp(&var(a)).unwrap_or(std::cmp::Ordering::Equal));
        floored += idx.iter().filter(|&&j| !(fits[j].1 > floor)).count();
        let fns = idx.iter().map(|&j| fits[j].0.clone()).collect();
        variances.push(DVector::from_iterator(idx.len(), idx.iter().map(|&j| var(j))));
        blocks.push(BlockFunctions::from_fns(fns));
        order.extend(idx);
    }
    let sigma0 = variances.remove(0);
    Ok(RegressionUpdate {
        functions: blocks,
        sigma0,
        sigma: variances,
        order,
        floored,
    })
}

/// `Y_kᵀ·EU` for every view.
pub fn cross_moments<T: Real>(data: &MultiViewDataset<T>, eu: &DMatrix<T>) -> Vec<DMatrix<T>> {
    data.views
        .par_iter()
        .map(|v| v.values.transpose() * eu)
        .collect()
}

fn sub<T: Real>(m: &DMatrix<T>, rows: (usize, usize), cols: (usize, usize)) -> DMatrix<T> {
    m.view((rows.0, cols.0), (rows.1, cols.1)).into_owned()
}

/// Procrustes with a deterministic jitter retry for rank-deficient inputs.
fn procrustes_jittered<T: Real>(m: &DMatrix<T>, jittered: &mut bool) -> Result<DMatrix<T>> {
    match procrustes(m) {
        Err(SifaError::RankDeficient { .. }) => {
            *jittered = true;
            let scale = m.norm().max(T::one()) * T::lit(TOLERANCES.jitter);
            let (p, r) = m.shape();
            let bump = DMatrix::from_fn(p, r, |i, j| if i == j { scale } else { T::zero() });
            procrustes(&(m + bump))
        }
        other => other,
    }
}

/// Result of the general-condition loading update.
#[derive(Debug, Clone)]
pub struct GeneralLoadings<T: Real> {
    /// Orthonormal joint loadings after renormalization.
    pub v0: Vec<DMatrix<T>>,
    pub v: Vec<DMatrix<T>>,
    /// Eigenvalues of `Ṽ0·Σ0·Ṽ0ᵀ`.
    pub sigma0: DVector<T>,
    /// `T = Ṽ0ᵀ·V0`: the joint factors of the new parametrization are the
    /// old ones times `T`, so `Ṽ0·Σ0·Ṽ0ᵀ = V0·(TᵀΣ0T)·V0ᵀ` exactly.
    pub rotation: DMatrix<T>,
    /// Relaxed joint loadings `Ṽ0k` before renormalization.
    pub v0_relaxed: Vec<DMatrix<T>>,
    pub gram_jitter: bool,
    pub procrustes_jitter: bool,
    /// Eigenvalues raised to the variance floor.
    pub floored: usize,
}

/// Block coordinate update of the loadings under the general conditions.
/// Each round updates every `V_k` by Procrustes given `Ṽ0k`, then every
/// `Ṽ0k` by unconstrained least squares given `V_k`; finally the joint
/// loadings are rotated to the eigenvectors of `Ṽ0·Σ0·Ṽ0ᵀ`.
#[allow(clippy::too_many_arguments)]
pub fn mstep_loadings_general<T: Real>(
    moments: &LatentMoments<T>,
    cross: &[DMatrix<T>],
    ranks: &RankSet,
    v0_start: &[DMatrix<T>],
    v_start: &[DMatrix<T>],
    sigma0: &DVector<T>,
    rounds: usize,
) -> Result<GeneralLoadings<T>> {
    let k = ranks.num_views();
    let r0 = ranks.r0;
    let g = &moments.eutu;
    let mut v0: Vec<DMatrix<T>> = v0_start.to_vec();
    let mut v: Vec<DMatrix<T>> = v_start.to_vec();
    let mut gram_jitter = false;
    let mut procrustes_jitter = false;

    let joint_chol = if r0 > 0 {
        let gjj = sub(g, (0, r0), (0, r0));
        match Cholesky::new(gjj.clone()) {
            Some(ch) => Some(ch),
            None => {
                gram_jitter = true;
                let jitter = T::lit(TOLERANCES.jitter) * gjj.trace().max(T::one())
                    / T::from_usize_lossy(r0);
                let bumped = gjj + DMatrix::identity(r0, r0) * jitter;
                Some(Cholesky::new(bumped).ok_or_else(|| {
                    SifaError::Singular("E(U0ᵀU0) after jitter".into())
                })?)
            }
        }
    } else {
        None
    };

    for _ in 0..rounds.max(1) {
        for i in 0..k {
            let rk = ranks.r[i];
            let off = ranks.offset(i + 1);
            if rk > 0 {
                let mut m = sub(&cross[i], (0, cross[i].nrows()), (off, rk));
                if r0 > 0 {
                    m -= &v0[i] * sub(g, (0, r0), (off, rk));
                }
                v[i] = procrustes_jittered(&m, &mut procrustes_jitter)?;
            }
            if let Some(chol) = &joint_chol {
                let mut m = sub(&cross[i], (0, cross[i].nrows()), (0, r0));
                if rk > 0 {
                    m -= &v[i] * sub(g, (off, rk), (0, r0));
                }
                // m·G00⁻¹ = (G00⁻¹·mᵀ)ᵀ
                v0[i] = chol.solve(&m.transpose()).transpose();
            }
        }
    }

    if r0 == 0 {
        return Ok(GeneralLoadings {
            v0: v0.clone(),
            v,
            sigma0: DVector::zeros(0),
            rotation: DMatrix::zeros(0, 0),
            v0_relaxed: v0,
            gram_jitter,
            procrustes_jitter,
            floored: 0,
        });
    }

    let p: usize = v0.iter().map(|b| b.nrows()).sum();
    let mut stacked = DMatrix::zeros(p, r0);
    let mut row = 0;
    for b in &v0 {
        stacked.rows_mut(row, b.nrows()).copy_from(b);
        row += b.nrows();
    }
    let (vectors, mut values) = low_rank_psd_eig(&stacked, sigma0)?;
    let floor = T::lit(TOLERANCES.factor_variance_floor);
    let mut floored = 0;
    for val in values.iter_mut() {
        if !(*val > floor) {
            *val = floor;
            floored += 1;
        }
    }
    let rotation = stacked.transpose() * &vectors;
    let mut v0_new = Vec::with_capacity(k);
    let mut row = 0;
    for b in &v0 {
        v0_new.push(vectors.rows(row, b.nrows()).into_owned());
        row += b.nrows();
    }
    Ok(GeneralLoadings {
        v0: v0_new,
        v,
        sigma0: values,
        rotation,
        v0_relaxed: v0,
        gram_jitter,
        procrustes_jitter,
        floored,
    })
}

/// Exact loading update under the orthogonal conditions: per view,
/// `[√K·V0k, V_k] = procrustes(Y_kᵀ·[EU0/√K, EU_k])`.
#[allow(clippy::type_complexity)]
pub fn mstep_loadings_orthogonal<T: Real>(
    cross: &[DMatrix<T>],
    ranks: &RankSet,
) -> Result<(Vec<DMatrix<T>>, Vec<DMatrix<T>>, bool)> {
    let k = ranks.num_views();
    let r0 = ranks.r0;
    let sqrt_k = T::from_usize_lossy(k).sqrt();
    let results: Vec<(DMatrix<T>, DMatrix<T>, bool)> = (0..k)
        .into_par_iter()
        .map(|i| {
            let pk = cross[i].nrows();
            let rk = ranks.r[i];
            let off = ranks.offset(i + 1);
            let mut m = DMatrix::zeros(pk, r0 + rk);
            if r0 > 0 {
                m.columns_mut(0, r0)
                    .copy_from(&(cross[i].columns(0, r0) / sqrt_k));
            }
            if rk > 0 {
                m.columns_mut(r0, rk).copy_from(&cross[i].columns(off, rk));
            }
            let mut jittered = false;
            let w = procrustes_jittered(&m, &mut jittered)?;
            Ok((
                w.columns(0, r0) / sqrt_k,
                w.columns(r0, rk).into_owned(),
                jittered,
            ))
        })
        .collect::<Result<_>>()?;
    let mut v0 = Vec::with_capacity(k);
    let mut v = Vec::with_capacity(k);
    let mut jitter = false;
    for (a, b, j) in results {
        v0.push(a);
        v.push(b);
        jitter |= j;
    }
    Ok((v0, v, jitter))
}

/// `σ_k² = E‖Y_k − U0·V0kᵀ − U_k·V_kᵀ‖²/(n·p_k)` expanded through EU and EUtU.
pub fn mstep_noise<T: Real>(
    moments: &LatentMoments<T>,
    data: &MultiViewDataset<T>,
    cross: &[DMatrix<T>],
    ranks: &RankSet,
    v0: &[DMatrix<T>],
    v: &[DMatrix<T>],
) -> Vec<T> {
    let n = T::from_usize_lossy(moments.n());
    let r0 = ranks.r0;
    let g = &moments.eutu;
    let floor = T::lit(TOLERANCES.noise_variance_floor);
    (0..ranks.num_views())
        .map(|i| {
            let yk = data.view(i);
            let pk = yk.ncols();
            let rk = ranks.r[i];
            let off = ranks.offset(i + 1);
            // W_k = [V0k, V_k] against latent columns J ∪ I_k
            let mut w = DMatrix::zeros(pk, r0 + rk);
            let mut ck = DMatrix::zeros(pk, r0 + rk);
            let cols: Vec<usize> = (0..r0).chain(off..off + rk).collect();
            if r0 > 0 {
                w.columns_mut(0, r0).copy_from(&v0[i]);
            }
            if rk > 0 {
                w.columns_mut(r0, rk).copy_from(&v[i]);
            }
            for (c, &src) in cols.iter().enumerate() {
                ck.set_column(c, &cross[i].column(src));
            }
            let gk = g.select_rows(&cols).select_columns(&cols);
            let fit = (w.transpose() * &w).component_mul(&gk).sum();
            let s2 = (yk.norm_squared() - T::lit(2.0) * w.component_mul(&ck).sum() + fit)
                / (n * T::from_usize_lossy(pk));
            if s2 > floor {
                s2
            } else {
                floor
            }
        })
        .collect()
}
