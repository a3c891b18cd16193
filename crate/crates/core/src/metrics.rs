//! Subspace distances, recovery error, variance accounting and the
//! comparison baselines.

use nalgebra::DMatrix;

use crate::em::{decompose_structure, fit};
use crate::error::{Result, SifaError};
use crate::numerics::{gram_deviation, singular_values, top_svd};
use crate::regression::LinearDesign;
use crate::scalar::Real;
use crate::types::{FitOptions, FitReport, MultiViewDataset, RankSet, SifaParams};

const ORTHONORMAL_INPUT_TOL: f64 = 1e-6;

fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Grassmannian distance `√Σ acos(δ_i)²`, δ the singular values of `VᵀV̂`.
pub fn grassmannian<T: Real>(v: &DMatrix<T>, vhat: &DMatrix<T>) -> Result<f64> {
    if v.shape() != vhat.shape() {
        return Err(SifaError::DimensionMismatch(format!(
            "{:?} vs {:?}",
            v.shape(),
            vhat.shape()
        )));
    }
    for m in [v, vhat] {
        let dev = gram_deviation(m, T::one()).to_f64_lossy();
        if dev > ORTHONORMAL_INPUT_TOL {
            return Err(SifaError::InvalidData(format!(
                "input columns are not orthonormal (deviation {dev:e})"
            )));
        }
    }
    if v.ncols() == 0 {
        return Ok(0.0);
    }
    let delta = singular_values(&(v.transpose() * vhat));
    Ok(delta
        .iter()
        .map(|d| clamp_unit(d.to_f64_lossy()).acos().powi(2))
        .sum::<f64>()
        .sqrt())
}

fn orthonormal_basis<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let (p, r) = a.shape();
    if r > p {
        return Err(SifaError::RankTooLarge { rank: r, rows: p, cols: r });
    }
    let qr = a.clone().qr();
    let rr = qr.r();
    let scale = rr.diagonal().amax().to_f64_lossy();
    let smallest = rr
        .diagonal()
        .iter()
        .map(|x| x.abs().to_f64_lossy())
        .fold(f64::INFINITY, f64::min);
    if !(scale > 0.0) || smallest <= 1e-12 * scale {
        return Err(SifaError::RankDeficient {
            ratio: if scale > 0.0 { smallest / scale } else { 0.0 },
        });
    }
    Ok(qr.q().columns(0, r).into_owned())
}

/// Largest principal angle (degrees) between the column spaces of `v` and
/// `vhat`. Inputs need not be orthonormal.
pub fn max_principal_angle<T: Real>(v: &DMatrix<T>, vhat: &DMatrix<T>) -> Result<f64> {
    if v.nrows() != vhat.nrows() {
        return Err(SifaError::DimensionMismatch(format!(
            "{} vs {} rows",
            v.nrows(),
            vhat.nrows()
        )));
    }
    if v.ncols() == 0 || vhat.ncols() == 0 {
        return Ok(0.0);
    }
    let q1 = orthonormal_basis(v)?;
    let q2 = orthonormal_basis(vhat)?;
    let sv = singular_values(&(q1.transpose() * q2));
    let smallest = sv.iter().last().map_or(0.0, |s| s.to_f64_lossy());
    Ok(clamp_unit(smallest).acos().to_degrees().clamp(0.0, 90.0))
}

/// `‖signal − scores·loadingsᵀ‖_F`.
pub fn recovery_error<T: Real>(
    signal: &DMatrix<T>,
    scores: &DMatrix<T>,
    loadings: &DMatrix<T>,
) -> Result<f64> {
    if scores.nrows() != signal.nrows()
        || loadings.nrows() != signal.ncols()
        || scores.ncols() != loadings.ncols()
    {
        return Err(SifaError::DimensionMismatch(format!(
            "signal {:?}, scores {:?}, loadings {:?}",
            signal.shape(),
            scores.shape(),
            loadings.shape()
        )));
    }
    Ok((signal - scores * loadings.transpose()).norm().to_f64_lossy())
}

/// Recovery error of a fitted model: estimate `EU·(V0, blkdiag(V_k))ᵀ`.
pub fn fit_recovery_error<T: Real>(signal: &DMatrix<T>, report: &FitReport<T>) -> Result<f64> {
    let w = report.params.covariance_factors().combined_loadings();
    recovery_error(signal, &report.moments.eu, &w)
}

/// Named set of covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateGroup {
    pub name: String,
    pub columns: Vec<usize>,
}

/// Variance shares of one latent block (joint or individual) of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    /// One share per covariate group, in the order given.
    pub groups: Vec<f64>,
    /// Share of the random (covariate-unrelated) part.
    pub unknown: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    pub view: usize,
    pub joint: f64,
    pub individual: f64,
    pub noise: f64,
    pub joint_attribution: Attribution,
    pub individual_attribution: Attribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceTable {
    pub group_names: Vec<String>,
    pub rows: Vec<VarianceRow>,
}

/// Sequential attribution: group g gets `‖D_{1..g}‖² − ‖D_{1..g−1}‖²` where
/// `D_{1..g}` is the deterministic part driven by the first g groups; the
/// random part's `‖R‖²` goes to "unknown". Shares are normalized by
/// `‖D‖² + ‖R‖²`, so they sum to one.
fn attribute<T: Real>(
    x: Option<&DMatrix<T>>,
    coef: &DMatrix<T>,
    loadings: &DMatrix<T>,
    random: &DMatrix<T>,
    groups: &[CovariateGroup],
) -> Attribution {
    let unknown = random.norm_squared().to_f64_lossy();
    let mut cumulative = Vec::with_capacity(groups.len());
    if let Some(x) = x {
        let mut acc = DMatrix::zeros(x.nrows(), loadings.nrows());
        for g in groups {
            if loadings.ncols() > 0 {
                let part = x.select_columns(&g.columns) * coef.select_rows(&g.columns) * loadings.transpose();
                acc += part;
            }
            cumulative.push(acc.norm_squared().to_f64_lossy());
        }
    } else {
        cumulative.resize(groups.len(), 0.0);
    }
    let det = cumulative.last().copied().unwrap_or(0.0);
    let total = det + unknown;
    if !(total > 0.0) {
        return Attribution {
            groups: vec![0.0; groups.len()],
            unknown: 1.0,
        };
    }
    let mut prev = 0.0;
    let shares = cumulative
        .iter()
        .map(|&c| {
            let s = (c - prev) / total;
            prev = c;
            s
        })
        .collect();
    Attribution {
        groups: shares,
        unknown: unknown / total,
    }
}

/// Per-view shares of joint structure, individual structure and noise, and
/// within each structure the shares of every covariate group and of the
/// random factors. Needs covariate functions that are linear in X (linear
/// or lasso families, or none). Groups must partition the covariate columns.
pub fn variance_explained<T: Real>(
    report: &FitReport<T>,
    data: &MultiViewDataset<T>,
    groups: &[CovariateGroup],
) -> Result<VarianceTable> {
    let q = data.q();
    let mut seen = vec![false; q];
    for g in groups {
        for &c in &g.columns {
            if c >= q || seen[c] {
                return Err(SifaError::InvalidOption(format!(
                    "group '{}' has an invalid or repeated column {c}",
                    g.name
                )));
            }
            seen[c] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(SifaError::InvalidOption(
            "covariate groups must cover every covariate column".into(),
        ));
    }
    let params = &report.params;
    let ranks = params.ranks();
    let mut coefs = Vec::with_capacity(params.functions.len());
    for (b, f) in params.functions.iter().enumerate() {
        let c = if f.is_zero() {
            Some(DMatrix::zeros(q, ranks.width(b)))
        } else {
            f.coefficient_matrix(q)
        };
        coefs.push(c.ok_or_else(|| {
            SifaError::InvalidOption(
                "variance attribution needs covariate functions linear in X".into(),
            )
        })?);
    }
    let parts = decompose_structure(params, &report.moments, data)?;
    let x = data.covariates.as_ref();
    let rows = parts
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let joint = (&p.joint_deterministic + &p.joint_random).norm_squared().to_f64_lossy();
            let individual = (&p.individual_deterministic + &p.individual_random)
                .norm_squared()
                .to_f64_lossy();
            let noise = p.residual.norm_squared().to_f64_lossy();
            let total = joint + individual + noise;
            let (j, i, e) = if total > 0.0 {
                (joint / total, individual / total, noise / total)
            } else {
                (0.0, 0.0, 1.0)
            };
            VarianceRow {
                view: k + 1,
                joint: j,
                individual: i,
                noise: e,
                joint_attribution: attribute(x, &coefs[0], &params.v0[k], &p.joint_random, groups),
                individual_attribution: attribute(
                    x,
                    &coefs[k + 1],
                    &params.v[k],
                    &p.individual_random,
                    groups,
                ),
            }
        })
        .collect();
    Ok(VarianceTable {
        group_names: groups.iter().map(|g| g.name.clone()).collect(),
        rows,
    })
}

/// Rank-`r` PCA of the concatenated views: `(scores = L·diag(d), loadings = R)`.
pub fn pca_baseline<T: Real>(ystar: &DMatrix<T>, r: usize) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let svd = top_svd(ystar, r)?;
    let mut scores = svd.left;
    for (j, mut c) in scores.column_iter_mut().enumerate() {
        c *= svd.values[j];
    }
    Ok((scores, svd.right))
}

/// The covariate-free comparator: the model with every `f ≡ 0`.
pub fn jive_fit<T: Real>(
    data: &MultiViewDataset<T>,
    ranks: &RankSet,
    options: &FitOptions,
) -> Result<FitReport<T>> {
    let mut plain = data.clone();
    plain.covariates = None;
    fit(&plain, ranks, options)
}

/// Regresses every view column on X by least squares, then fits the
/// covariate-free model to the residuals.
pub fn cov_jive_baseline<T: Real>(
    data: &MultiViewDataset<T>,
    ranks: &RankSet,
    options: &FitOptions,
) -> Result<FitReport<T>> {
    let x = data.covariates.as_ref().ok_or_else(|| {
        SifaError::InvalidOption("the covariate-adjusted baseline needs covariates".into())
    })?;
    let design = LinearDesign::new(x)?;
    let mut resid = data.clone();
    resid.covariates = None;
    resid.centered = false;
    for v in &mut resid.views {
        let cols: Vec<_> = v
            .values
            .column_iter()
            .map(|c| {
                let y = c.into_owned();
                let f = design.fit(&y)?;
                let fitted = f.predict(x)?;
                Ok(y - fitted)
            })
            .collect::<Result<_>>()?;
        v.values = DMatrix::from_columns(&cols);
    }
    let mut report = fit(&resid, ranks, options)?;
    report
        .warnings
        .push("covariate-adjusted pipeline: views regressed on X, then fitted with f=0".into());
    Ok(report)
}

/// Supervised SVD of the concatenated views: the single-view model with
/// rank `r` and linear covariate functions.
pub fn supsvd_baseline<T: Real>(
    data: &MultiViewDataset<T>,
    r: usize,
    options: &FitOptions,
) -> Result<FitReport<T>> {
    let single = MultiViewDataset::new(vec![data.stacked()], data.covariates.clone())?;
    fit(&single, &RankSet::new(r, vec![0]), options)
}

/// `(V0, blkdiag(V_k))` of a parameter set.
pub fn combined_loadings<T: Real>(params: &SifaParams<T>) -> DMatrix<T> {
    params.covariance_factors().combined_loadings()
}
