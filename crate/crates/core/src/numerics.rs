//! Dense linear-algebra kernels used by the estimator.
//!
//! Decompositions are delegated to `nalgebra`; this module pins down ordering
//! and sign conventions so results are deterministic, and implements the
//! low-rank-plus-diagonal covariance algebra without ever forming the
//! `(Σp_k)²` marginal covariance.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SifaError};
use crate::scalar::Real;
use crate::tolerances::TOLERANCES;

/// Rank-`r` truncated singular value decomposition `A ≈ L·diag(d)·Rᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinSvd<T: Real> {
    pub left: DMatrix<T>,
    pub values: DVector<T>,
    pub right: DMatrix<T>,
}

impl<T: Real> ThinSvd<T> {
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        let mut scaled = self.left.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.values[j];
        }
        scaled * self.right.transpose()
    }
}

/// Sign (+1 or -1) that makes the first non-negligible entry of `col` positive.
pub(crate) fn leading_sign<T: Real>(col: impl Iterator<Item = T>) -> T {
    let cutoff = T::lit(TOLERANCES.sign_zero);
    for x in col {
        if x.abs() > cutoff {
            return if x < T::zero() { -T::one() } else { T::one() };
        }
    }
    T::one()
}

fn descending_order<T: Real>(values: &DVector<T>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    // Stable sort keeps the backend's column order for ties.
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Top-`r` singular triplets with non-increasing singular values. Each left
/// vector is sign-fixed so that its first non-negligible entry is positive,
/// with the matching right vector flipped alongside.
pub fn thin_svd<T: Real>(a: &DMatrix<T>, r: usize) -> Result<ThinSvd<T>> {
    let (m, n) = a.shape();
    if r > m.min(n) {
        return Err(SifaError::RankTooLarge {
            rank: r,
            rows: m,
            cols: n,
        });
    }
    if r == 0 {
        return Ok(ThinSvd {
            left: DMatrix::zeros(m, 0),
            values: DVector::zeros(0),
            right: DMatrix::zeros(n, 0),
        });
    }
    let svd = SVD::new(a.clone(), true, true);
    let u = svd.u.expect("left vectors requested");
    let vt = svd.v_t.expect("right vectors requested");
    let order = descending_order(&svd.singular_values);

    let mut left = DMatrix::zeros(m, r);
    let mut right = DMatrix::zeros(n, r);
    let mut values = DVector::zeros(r);
    for (j, &src) in order.iter().take(r).enumerate() {
        let sign = leading_sign(u.column(src).iter().copied());
        left.set_column(j, &(u.column(src) * sign));
        right.set_column(j, &(vt.row(src).transpose() * sign));
        values[j] = svd.singular_values[src].max(T::zero());
    }
    Ok(ThinSvd {
        left,
        values,
        right,
    })
}

/// Inputs whose smaller side exceeds this go through the Gram route in [`top_svd`].
const GRAM_SVD_THRESHOLD: usize = 300;

/// Top-`r` singular triplets like [`thin_svd`]. When both sides are large the
/// triplets come from the leading eigenpairs of the smaller Gram matrix,
/// which is much cheaper than a full SVD and accurate for the leading
/// triplets.
pub fn top_svd<T: Real>(a: &DMatrix<T>, r: usize) -> Result<ThinSvd<T>> {
    let (m, n) = a.shape();
    if m.min(n) <= GRAM_SVD_THRESHOLD || r == 0 {
        return thin_svd(a, r);
    }
    if r > m.min(n) {
        return Err(SifaError::RankTooLarge {
            rank: r,
            rows: m,
            cols: n,
        });
    }
    let wide = m <= n;
    let gram = if wide {
        a * a.transpose()
    } else {
        a.transpose() * a
    };
    let (basis, lambda) = match leading_eig(&gram, r)? {
        Some(pairs) => pairs,
        None => {
            let (q, lambda) = sym_eig_desc(&gram)?;
            (q.columns(0, r).into_owned(), lambda)
        }
    };
    let values = DVector::from_fn(r, |j, _| lambda[j].max(T::zero()).sqrt());
    let mut other = if wide {
        a.transpose() * &basis
    } else {
        a * &basis
    };
    for (j, mut col) in other.column_iter_mut().enumerate() {
        if values[j] > T::zero() {
            col /= values[j];
        } else {
            col.fill(T::zero());
        }
    }
    let (mut left, mut right) = if wide { (basis, other) } else { (other, basis) };
    for j in 0..r {
        let sign = leading_sign(left.column(j).iter().copied());
        if sign < T::zero() {
            left.column_mut(j).neg_mut();
            right.column_mut(j).neg_mut();
        }
    }
    Ok(ThinSvd {
        left,
        values,
        right,
    })
}

/// Leading `r` eigenpairs of a symmetric PSD matrix by block subspace
/// iteration with Rayleigh–Ritz steps, from a fixed seeded start. `None`
/// when the block would not be small next to the matrix or the residuals
/// `‖G·q_j − λ_j·q_j‖ ≤ 1e-11·λ_1` are not reached within the sweep limit.
fn leading_eig<T: Real>(g: &DMatrix<T>, r: usize) -> Result<Option<(DMatrix<T>, DVector<T>)>> {
    const MAX_SWEEPS: usize = 400;
    let m = g.nrows();
    let block = (2 * r + 8).min(m);
    if 4 * block > m {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let start = DMatrix::from_fn(m, block, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
    let mut q = orthonormalize(&(g * start));
    for _ in 0..MAX_SWEEPS {
        let z = g * &q;
        let (s, theta) = sym_eig_desc(&(q.transpose() * &z))?;
        let ritz = &q * &s;
        let image = z * &s;
        let top = theta[0].max(T::zero());
        if !(top > T::zero()) {
            return Ok(None);
        }
        let converged = (0..r).all(|j| {
            (image.column(j) - ritz.column(j) * theta[j]).norm() <= T::lit(1e-11) * top
        });
        if converged {
            let mut vectors = ritz.columns(0, r).into_owned();
            for mut col in vectors.column_iter_mut() {
                let sign = leading_sign(col.iter().copied());
                col *= sign;
            }
            return Ok(Some((vectors, theta.rows(0, r).into_owned())));
        }
        q = orthonormalize(&image);
    }
    Ok(None)
}

/// Singular values only, non-increasing.
pub fn singular_values<T: Real>(a: &DMatrix<T>) -> DVector<T> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let mut values: Vec<T> = SVD::new(a.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    DVector::from_vec(values)
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted
/// non-increasing and eigenvectors sign-fixed (first non-negligible entry
/// positive).
pub fn sym_eig_desc<T: Real>(s: &DMatrix<T>) -> Result<(DMatrix<T>, DVector<T>)> {
    let (rows, cols) = s.shape();
    if rows != cols {
        return Err(SifaError::DimensionMismatch(format!(
            "symmetric eigendecomposition of a {rows}x{cols} matrix"
        )));
    }
    let scale = s.amax();
    let asymmetry = (s - s.transpose()).amax();
    if asymmetry > T::lit(TOLERANCES.symmetry) * scale.max(T::one()) {
        return Err(SifaError::NotSymmetric {
            asymmetry: asymmetry.to_f64_lossy(),
        });
    }
    if rows == 0 {
        return Ok((DMatrix::zeros(0, 0), DVector::zeros(0)));
    }
    let sym = (s + s.transpose()) * T::lit(0.5);
    let eig = SymmetricEigen::new(sym);
    let order = descending_order(&eig.eigenvalues);
    let mut vectors = DMatrix::zeros(rows, rows);
    let mut values = DVector::zeros(rows);
    for (j, &src) in order.iter().enumerate() {
        let sign = leading_sign(eig.eigenvectors.column(src).iter().copied());
        vectors.set_column(j, &(eig.eigenvectors.column(src) * sign));
        values[j] = eig.eigenvalues[src];
    }
    Ok((vectors, values))
}

/// Eigenpairs of the rank-≤r matrix `A·diag(w)·Aᵀ` (A is p×r, w ≥ 0) without
/// forming the p×p product: `A·diag(√w) = Q·R`, then `R·Rᵀ = G·Λ·Gᵀ`, so the
/// eigenvectors are `Q·G` and the eigenvalues `Λ`. Returns all r pairs,
/// non-increasing, sign-fixed like [`sym_eig_desc`].
pub fn low_rank_psd_eig<T: Real>(
    a: &DMatrix<T>,
    weights: &DVector<T>,
) -> Result<(DMatrix<T>, DVector<T>)> {
    let (p, r) = a.shape();
    if weights.len() != r {
        return Err(SifaError::DimensionMismatch(format!(
            "{r} columns but {} weights",
            weights.len()
        )));
    }
    if r > p {
        return Err(SifaError::RankTooLarge {
            rank: r,
            rows: p,
            cols: r,
        });
    }
    if r == 0 {
        return Ok((DMatrix::zeros(p, 0), DVector::zeros(0)));
    }
    let mut scaled = a.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= weights[j].max(T::zero()).sqrt();
    }
    let qr = scaled.qr();
    let q = qr.q();
    let rr = qr.r();
    let small = &rr * rr.transpose();
    let (g, values) = sym_eig_desc(&small)?;
    let mut vectors = q * g;
    for mut col in vectors.column_iter_mut() {
        let sign = leading_sign(col.iter().copied());
        col *= sign;
    }
    Ok((vectors, values))
}

/// Orthogonal Procrustes: the p×r matrix with orthonormal columns that
/// maximizes `trace(Mᵀ·W)`, namely `W = L·Rᵀ` from the thin SVD of `M`.
pub fn procrustes<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let (p, r) = m.shape();
    if r > p {
        return Err(SifaError::RankTooLarge {
            rank: r,
            rows: p,
            cols: r,
        });
    }
    if r == 0 {
        return Ok(DMatrix::zeros(p, 0));
    }
    let svd = thin_svd(m, r)?;
    let largest = svd.values[0];
    let smallest = svd.values[r - 1];
    if largest <= T::zero() || smallest <= T::lit(TOLERANCES.rank_relative) * largest {
        let ratio = if largest > T::zero() {
            (smallest / largest).to_f64_lossy()
        } else {
            0.0
        };
        return Err(SifaError::RankDeficient { ratio });
    }
    Ok(&svd.left * svd.right.transpose())
}

/// Orthonormal basis of the column space of `a` (Householder QR, sign-fixed).
pub fn orthonormalize<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    let (p, r) = a.shape();
    if r == 0 {
        return DMatrix::zeros(p, 0);
    }
    let q = a.clone().qr().q();
    let mut q = q.columns(0, r.min(p)).into_owned();
    for mut col in q.column_iter_mut() {
        let sign = leading_sign(col.iter().copied());
        col *= sign;
    }
    q
}

/// Subtracts each column's mean. Returns the centred matrix and the means.
pub fn center_columns<T: Real>(a: &DMatrix<T>) -> (DMatrix<T>, DVector<T>) {
    let n = a.nrows();
    let mut out = a.clone();
    let mut means = DVector::zeros(a.ncols());
    if n == 0 {
        return (out, means);
    }
    let inv_n = T::one() / T::from_usize_lossy(n);
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let mean = col.sum() * inv_n;
        col.add_scalar_mut(-mean);
        means[j] = mean;
    }
    (out, means)
}

/// Maximum absolute entry of `aᵀa − c·I`.
pub fn gram_deviation<T: Real>(a: &DMatrix<T>, c: T) -> T {
    let mut g = a.transpose() * a;
    for i in 0..g.nrows() {
        g[(i, i)] -= c;
    }
    if g.is_empty() {
        T::zero()
    } else {
        g.amax()
    }
}

/// Factored representation of the marginal covariance
/// `Σ★ = V0·Σ0·V0ᵀ + V★·Σ_F·V★ᵀ + Σ_E` where `V★ = blkdiag(V_1..V_K)` and
/// `Σ_E = blkdiag(σ_k²·I)`. All products go through the
/// `(r0+Σr_k)`-dimensional inner system.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceFactors<T: Real> {
    /// Joint loading blocks `V0k` (p_k × r0).
    pub v0: Vec<DMatrix<T>>,
    /// Individual loadings `V_k` (p_k × r_k).
    pub v: Vec<DMatrix<T>>,
    pub sigma0: DVector<T>,
    pub sigma: Vec<DVector<T>>,
    pub noise_var: Vec<T>,
}

/// Cholesky factor of `I + S·Δ·S` with `S = diag(√D)`, the inner system
/// shared by the Woodbury inverse and the determinant lemma.
#[derive(Debug, Clone)]
pub struct InnerSystem<T: Real> {
    pub sqrt_prior: DVector<T>,
    pub delta: DMatrix<T>,
    chol: Cholesky<T, Dyn>,
}

impl<T: Real> InnerSystem<T> {
    /// `log|I + S·Δ·S|`.
    pub fn log_det(&self) -> T {
        let l = self.chol.l_dirty();
        let mut acc = T::zero();
        for i in 0..l.nrows() {
            acc += l[(i, i)].ln();
        }
        acc * T::lit(2.0)
    }

    /// `(D⁻¹ + Δ)⁻¹ = S·(I + S·Δ·S)⁻¹·S`: the posterior covariance of one
    /// latent row.
    pub fn posterior_cov(&self) -> DMatrix<T> {
        let mut inv = self.chol.inverse();
        let s = &self.sqrt_prior;
        for i in 0..inv.nrows() {
            for j in 0..inv.ncols() {
                inv[(i, j)] *= s[i] * s[j];
            }
        }
        (&inv + inv.transpose()) * T::lit(0.5)
    }
}

impl<T: Real> CovarianceFactors<T> {
    pub fn num_views(&self) -> usize {
        self.v.len()
    }

    pub fn joint_rank(&self) -> usize {
        self.sigma0.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.v.iter().map(|v| v.nrows()).collect()
    }

    pub fn total_rank(&self) -> usize {
        self.joint_rank() + self.sigma.iter().map(|s| s.len()).sum::<usize>()
    }

    fn check(&self) -> Result<()> {
        let k = self.num_views();
        if self.v0.len() != k || self.sigma.len() != k || self.noise_var.len() != k {
            return Err(SifaError::DimensionMismatch(
                "per-view factor lists have different lengths".into(),
            ));
        }
        for (view, &s2) in self.noise_var.iter().enumerate() {
            if !(s2 > T::zero()) {
                return Err(SifaError::NonPositiveNoise { view: view + 1 });
            }
        }
        Ok(())
    }

    /// Column offset of individual block k (0-based view index) in the
    /// combined latent vector.
    pub fn offset(&self, view: usize) -> usize {
        self.joint_rank() + self.sigma[..view].iter().map(|s| s.len()).sum::<usize>()
    }

    /// Diagonal of `blkdiag(Σ0, Σ_F)`.
    pub fn prior_diag(&self) -> DVector<T> {
        let mut d = Vec::with_capacity(self.total_rank());
        d.extend(self.sigma0.iter().copied());
        for s in &self.sigma {
            d.extend(s.iter().copied());
        }
        DVector::from_vec(d)
    }

    /// `Δ = (V0, V★)ᵀ Σ_E⁻¹ (V0, V★)` assembled block by block.
    pub fn delta(&self) -> DMatrix<T> {
        let r0 = self.joint_rank();
        let total = self.total_rank();
        let mut delta = DMatrix::zeros(total, total);
        for k in 0..self.num_views() {
            let w = T::one() / self.noise_var[k];
            let off = self.offset(k);
            let rk = self.sigma[k].len();
            let v0k = &self.v0[k];
            let vk = &self.v[k];
            if r0 > 0 {
                let jj = v0k.transpose() * v0k * w;
                let mut blk = delta.view_mut((0, 0), (r0, r0));
                blk += jj;
            }
            if rk > 0 {
                delta
                    .view_mut((off, off), (rk, rk))
                    .copy_from(&(vk.transpose() * vk * w));
                if r0 > 0 {
                    let cross = v0k.transpose() * vk * w;
                    delta.view_mut((0, off), (r0, rk)).copy_from(&cross);
                    delta
                        .view_mut((off, 0), (rk, r0))
                        .copy_from(&cross.transpose());
                }
            }
        }
        delta
    }

    /// Closed diagonal form of Δ valid when the loadings satisfy the
    /// orthogonal conditions: `blkdiag(Σ_k σ_k⁻²/K·I, σ_1⁻²·I, …)`.
    pub fn delta_orthogonal(&self) -> DMatrix<T> {
        let k = T::from_usize_lossy(self.num_views());
        let joint: T = self
            .noise_var
            .iter()
            .fold(T::zero(), |acc, &s2| acc + T::one() / (s2 * k));
        let mut diag = Vec::with_capacity(self.total_rank());
        diag.extend(std::iter::repeat_n(joint, self.joint_rank()));
        for (view, s) in self.sigma.iter().enumerate() {
            diag.extend(std::iter::repeat_n(T::one() / self.noise_var[view], s.len()));
        }
        DMatrix::from_diagonal(&DVector::from_vec(diag))
    }

    /// Factorizes the inner system. `closed_form` selects the orthogonal-mode
    /// diagonal Δ instead of the general block assembly.
    pub fn inner_system(&self, closed_form: bool) -> Result<InnerSystem<T>> {
        self.check()?;
        let delta = if closed_form {
            self.delta_orthogonal()
        } else {
            self.delta()
        };
        let sqrt_prior = self.prior_diag().map(|d| d.max(T::zero()).sqrt());
        let total = sqrt_prior.len();
        let mut inner = DMatrix::identity(total, total);
        for i in 0..total {
            for j in 0..total {
                inner[(i, j)] += sqrt_prior[i] * delta[(i, j)] * sqrt_prior[j];
            }
        }
        let chol = Cholesky::new(inner).ok_or_else(|| {
            SifaError::Singular("inner Woodbury system is not positive definite".into())
        })?;
        Ok(InnerSystem {
            sqrt_prior,
            delta,
            chol,
        })
    }

    /// `(V0,V★)ᵀ Σ★⁻¹ (V0,V★) = Δ − Δ·[blkdiag(Σ0⁻¹,Σ_F⁻¹) + Δ]⁻¹·Δ`.
    pub fn whitened_quadform(&self, closed_form: bool) -> Result<DMatrix<T>> {
        let inner = self.inner_system(closed_form)?;
        let post = inner.posterior_cov();
        let delta = &inner.delta;
        let out = delta - delta * post * delta;
        Ok((&out + out.transpose()) * T::lit(0.5))
    }

    /// Whitens centred data rows: `Z·Σ_E⁻¹·(V0, V★)` for `Z` n×Σp_k.
    pub fn whiten_rows(&self, residual: &DMatrix<T>) -> DMatrix<T> {
        let n = residual.nrows();
        let r0 = self.joint_rank();
        let mut out = DMatrix::zeros(n, self.total_rank());
        let mut col = 0;
        for k in 0..self.num_views() {
            let pk = self.v[k].nrows();
            let zk = residual.columns(col, pk);
            let w = T::one() / self.noise_var[k];
            if r0 > 0 {
                let mut blk = out.columns_mut(0, r0);
                blk += zk * &self.v0[k] * w;
            }
            let rk = self.sigma[k].len();
            if rk > 0 {
                let off = self.offset(k);
                out.columns_mut(off, rk).copy_from(&(zk * &self.v[k] * w));
            }
            col += pk;
        }
        out
    }

    /// Materializes Σ★. Only meant for small instances and test oracles.
    pub fn dense(&self) -> DMatrix<T> {
        let w = self.combined_loadings();
        let d = DMatrix::from_diagonal(&self.prior_diag());
        let mut s = &w * d * w.transpose();
        let mut row = 0;
        for (k, v) in self.v.iter().enumerate() {
            for _ in 0..v.nrows() {
                s[(row, row)] += self.noise_var[k];
                row += 1;
            }
        }
        s
    }

    /// `(V0, V★)` as one (Σp_k)×(r0+Σr_k) matrix.
    pub fn combined_loadings(&self) -> DMatrix<T> {
        let p: usize = self.dims().iter().sum();
        let r0 = self.joint_rank();
        let mut w = DMatrix::zeros(p, self.total_rank());
        let mut row = 0;
        for k in 0..self.num_views() {
            let pk = self.v[k].nrows();
            if r0 > 0 {
                w.view_mut((row, 0), (pk, r0)).copy_from(&self.v0[k]);
            }
            let rk = self.sigma[k].len();
            if rk > 0 {
                w.view_mut((row, self.offset(k)), (pk, rk))
                    .copy_from(&self.v[k]);
            }
            row += pk;
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn svd_identity_and_diagonal() {
        let svd = thin_svd(&DMatrix::<f64>::identity(3, 3), 3).unwrap();
        assert_relative_eq!(svd.values, DVector::from_vec(vec![1.0, 1.0, 1.0]), epsilon = 1e-14);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let svd = thin_svd(&d, 2).unwrap();
        assert_relative_eq!(svd.values, DVector::from_vec(vec![3.0, 2.0]), epsilon = 1e-14);
        assert!(thin_svd(&d, 4).is_err());
    }

    #[test]
    fn svd_full_rank_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = gaussian(&mut rng, 6, 4);
        let svd = thin_svd(&a, 4).unwrap();
        assert!((svd.reconstruct() - &a).amax() < 1e-10);
        assert!(gram_deviation(&svd.left, 1.0) < 1e-10);
        assert!(gram_deviation(&svd.right, 1.0) < 1e-10);
        // values agree with eigenvalues of AᵀA
        let (_, eig) = sym_eig_desc(&(a.transpose() * &a)).unwrap();
        for i in 0..4 {
            assert!((svd.values[i] - eig[i].sqrt()).abs() < 1e-8);
        }
        for j in 0..4 {
            let col = svd.left.column(j);
            let lead = col.iter().find(|x| x.abs() > 1e-12).unwrap();
            assert!(*lead > 0.0);
        }
    }

    #[test]
    fn gram_route_matches_direct_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = gaussian(&mut rng, 320, 3) * gaussian(&mut rng, 3, 400) + gaussian(&mut rng, 320, 400) * 0.01;
        let direct = thin_svd(&a, 3).unwrap();
        let gram = top_svd(&a, 3).unwrap();
        assert!((&direct.values - &gram.values).amax() < 1e-8 * direct.values[0]);
        assert!((&direct.left - &gram.left).amax() < 1e-8);
        assert!((&direct.right - &gram.right).amax() < 1e-8);
    }

    #[test]
    fn subspace_iteration_matches_full_eigen() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let low = gaussian(&mut rng, 200, 4) * 5.0;
        let noise = gaussian(&mut rng, 200, 300);
        let g = &low * low.transpose() + &noise * noise.transpose() / 300.0;
        let (q, lambda) = sym_eig_desc(&g).unwrap();
        let (v, l) = leading_eig(&g, 3).unwrap().expect("well separated spectrum converges");
        for j in 0..3 {
            assert!((l[j] - lambda[j]).abs() < 1e-10 * lambda[0]);
            assert!((v.column(j) - q.column(j)).amax() < 1e-8);
        }
        // flat spectrum: either declines or agrees with the full decomposition
        let flat = gaussian(&mut rng, 200, 200);
        let g = &flat * flat.transpose();
        let (q, lambda) = sym_eig_desc(&g).unwrap();
        if let Some((v, l)) = leading_eig(&g, 2).unwrap() {
            for j in 0..2 {
                assert!((l[j] - lambda[j]).abs() < 1e-9 * lambda[0]);
                assert!((v.column(j) - q.column(j)).amax() < 1e-6);
            }
        }
        assert!(leading_eig(&g, 30).unwrap().is_none());
    }

    #[test]
    fn eig_sorts_descending() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 2.0]));
        let (_, vals) = sym_eig_desc(&s).unwrap();
        assert_eq!(vals.as_slice(), &[4.0, 2.0, 1.0]);
        let (q, vals) = sym_eig_desc(&DMatrix::<f64>::zeros(3, 3)).unwrap();
        assert_eq!(vals.as_slice(), &[0.0, 0.0, 0.0]);
        assert!(gram_deviation(&q, 1.0) < 1e-12);
    }

    #[test]
    fn eig_of_spd_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = gaussian(&mut rng, 5, 5);
        let s = a.transpose() * &a + DMatrix::identity(5, 5);
        let (q, vals) = sym_eig_desc(&s).unwrap();
        assert!(vals.iter().all(|&v| v > 0.0));
        assert!(gram_deviation(&q, 1.0) < 1e-10);
        let recon = &q * DMatrix::from_diagonal(&vals) * q.transpose();
        assert!((recon - &s).amax() < 1e-8 * s.amax());
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let s = dmatrix![1.0, 2.0; 0.0, 1.0];
        assert!(matches!(sym_eig_desc(&s), Err(SifaError::NotSymmetric { .. })));
    }

    #[test]
    fn low_rank_eig_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = gaussian(&mut rng, 7, 3);
        let w = DVector::from_vec(vec![2.0, 0.5, 1.3]);
        let (q, vals) = low_rank_psd_eig(&a, &w).unwrap();
        let dense = &a * DMatrix::from_diagonal(&w) * a.transpose();
        let (qd, vd) = sym_eig_desc(&dense).unwrap();
        for i in 0..3 {
            assert_relative_eq!(vals[i], vd[i], max_relative = 1e-10);
            let dot = q.column(i).dot(&qd.column(i)).abs();
            assert_relative_eq!(dot, 1.0, epsilon = 1e-8);
        }
        let recon = &q * DMatrix::from_diagonal(&vals) * q.transpose();
        assert!((recon - dense).amax() < 1e-10);
    }

    #[test]
    fn procrustes_cases() {
        let eye = DMatrix::<f64>::identity(3, 3);
        assert!((procrustes(&eye).unwrap() - &eye).amax() < 1e-14);
        let d = dmatrix![5.0, 0.0; 0.0, 0.1];
        assert!((procrustes(&d).unwrap() - DMatrix::identity(2, 2)).amax() < 1e-14);
        let rank1 = dmatrix![1.0, 1.0; 1.0, 1.0; 0.0, 0.0];
        assert!(matches!(procrustes(&rank1), Err(SifaError::RankDeficient { .. })));
    }

    #[test]
    fn procrustes_recovers_polar_factor_and_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = orthonormalize(&gaussian(&mut rng, 8, 3));
        let b = gaussian(&mut rng, 3, 3);
        let p = b.transpose() * &b + DMatrix::identity(3, 3);
        let m = &g * &p;
        let w = procrustes(&m).unwrap();
        assert!((&w - &g).amax() < 1e-10);
        let best = (m.transpose() * &w).trace();
        for _ in 0..200 {
            let cand = orthonormalize(&gaussian(&mut rng, 8, 3));
            assert!((m.transpose() * cand).trace() <= best + 1e-12);
        }
        // orthonormal input is a fixed point
        assert!((procrustes(&g).unwrap() - &g).amax() < 1e-12);
    }

    #[test]
    fn centering() {
        let a = dmatrix![1.0; 2.0; 3.0];
        let (c, means) = center_columns(&a);
        assert_eq!(c.as_slice(), &[-1.0, 0.0, 1.0]);
        assert_eq!(means[0], 2.0);
        let (c2, means2) = center_columns(&c);
        assert_eq!(c2, c);
        assert_eq!(means2[0], 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = gaussian(&mut rng, 9, 4).add_scalar(3.0);
        let (once, _) = center_columns(&r);
        let (twice, _) = center_columns(&once);
        assert!((once - twice).amax() < 1e-14);
    }

    fn scalar_factors(sigma: f64) -> CovarianceFactors<f64> {
        CovarianceFactors {
            v0: vec![DMatrix::from_element(1, 1, 1.0)],
            v: vec![DMatrix::zeros(1, 0)],
            sigma0: DVector::from_element(1, sigma),
            sigma: vec![DVector::zeros(0)],
            noise_var: vec![1.0],
        }
    }

    #[test]
    fn quadform_scalar_case() {
        let q = scalar_factors(1.0).whitened_quadform(false).unwrap();
        assert_relative_eq!(q[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn non_positive_noise_rejected() {
        let mut f = scalar_factors(1.0);
        f.noise_var[0] = 0.0;
        assert!(matches!(
            f.whitened_quadform(false),
            Err(SifaError::NonPositiveNoise { view: 1 })
        ));
    }
}
