use nalgebra::DMatrix;

use crate::error::{Result, SifaError};
use crate::numerics::CovarianceFactors;
use crate::scalar::Real;
use crate::types::{LatentMoments, MarginalMoments, MultiViewDataset, SifaParams};

/// `μ★` and the factored `Σ★` implied by `params` at covariates `x`.
pub fn marginal_moments<T: Real>(
    params: &SifaParams<T>,
    x: Option<&DMatrix<T>>,
    n: usize,
) -> Result<MarginalMoments<T>> {
    params.check_shapes()?;
    let factors = params.covariance_factors();
    let means = params.factor_means(x, n)?;
    Ok(MarginalMoments {
        mu_star: means * factors.combined_loadings().transpose(),
        sigma_star_factors: factors,
    })
}

/// E-step output together with the log-likelihood at the same parameters;
/// both share the whitened residuals and the inner Cholesky factor.
pub(crate) struct Evaluation<T: Real> {
    pub moments: LatentMoments<T>,
    pub loglik: T,
}

/// `closed_form` selects the diagonal Δ valid under the orthogonal conditions.
pub(crate) fn evaluate<T: Real>(
    params: &SifaParams<T>,
    data: &MultiViewDataset<T>,
    ystar: &DMatrix<T>,
    closed_form: bool,
) -> Result<Evaluation<T>> {
    params.check_shapes()?;
    let n = data.n();
    if params.dims() != data.dims() {
        return Err(SifaError::DimensionMismatch(format!(
            "parameters are for views {:?}, data has {:?}",
            params.dims(),
            data.dims()
        )));
    }
    let factors: CovarianceFactors<T> = params.covariance_factors();
    let inner = factors.inner_system(closed_form)?;
    let means = params.factor_means(data.covariates.as_ref(), n)?;
    let w = factors.combined_loadings();
    let z = ystar - &means * w.transpose();
    let b = factors.whiten_rows(&z);
    let c = inner.posterior_cov();
    let bc = &b * &c;

    // Σ_i (y_i − μ_i)ᵀ Σ★⁻¹ (y_i − μ_i) = Σ_i a_i − Σ_i b_i·C·b_iᵀ
    let mut quad = T::zero();
    let mut col = 0;
    let mut log_det = inner.log_det();
    for (k, &s2) in factors.noise_var.iter().enumerate() {
        let pk = data.dims()[k];
        quad += z.columns(col, pk).norm_squared() / s2;
        log_det += T::from_usize_lossy(pk) * s2.ln();
        col += pk;
    }
    quad -= b.component_mul(&bc).sum();

    let nf = T::from_usize_lossy(n);
    let p = T::from_usize_lossy(col);
    let two_pi = T::two_pi();
    let loglik = -(nf * p * two_pi.ln() + nf * log_det + quad) * T::lit(0.5);

    let eu = means + bc;
    let eutu = eu.transpose() * &eu + &c * nf;
    Ok(Evaluation {
        moments: LatentMoments { eu, c, eutu },
        loglik,
    })
}

/// Log-likelihood of `data` under `params`, through the determinant lemma
/// and the Woodbury identity.
pub fn log_likelihood<T: Real>(params: &SifaParams<T>, data: &MultiViewDataset<T>) -> Result<T> {
    Ok(evaluate(params, data, &data.stacked(), false)?.loglik)
}

/// Conditional first and second moments of all latent factors.
pub fn e_step<T: Real>(
    params: &SifaParams<T>,
    data: &MultiViewDataset<T>,
) -> Result<LatentMoments<T>> {
    Ok(evaluate(params, data, &data.stacked(), false)?.moments)
}
