//! Covariate-function backends for the per-column least-squares problems of
//! the M-step: ordinary least squares, cross-validated lasso, and
//! Nadaraya–Watson kernel regression.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SifaError};
use crate::numerics::sym_eig_desc;
use crate::scalar::Real;

/// Condition number of `XᵀX` above which ridge jitter is added.
const MAX_CONDITION: f64 = 1e12;
/// Kernel regression refuses covariate dimensions above this.
const MAX_KERNEL_DIM: usize = 5;
const MIN_KERNEL_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegressionFamily {
    #[default]
    Linear,
    Lasso,
    Kernel,
}

impl std::str::FromStr for RegressionFamily {
    type Err = SifaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "lasso" => Ok(Self::Lasso),
            "kernel" => Ok(Self::Kernel),
            other => Err(SifaError::InvalidOption(format!(
                "unknown regression family '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for RegressionFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Linear => "linear",
            Self::Lasso => "lasso",
            Self::Kernel => "kernel",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoOptions {
    /// Length of the default log-spaced λ grid.
    pub n_lambda: usize,
    /// Smallest grid value as a fraction of `λ_max = ‖Xᵀy‖_∞/n`.
    pub min_ratio: f64,
    pub folds: usize,
    /// Coordinate descent stops when the largest coefficient update is below this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Seed of the fold partition.
    pub seed: u64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            n_lambda: 50,
            min_ratio: 1e-3,
            folds: 5,
            tol: 1e-7,
            max_sweeps: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BandwidthPolicy {
    /// Per-dimension Silverman rule `h_j = s_j·(4/((d+2)n))^(1/(d+4))`.
    #[default]
    Silverman,
    /// The same bandwidth in every dimension.
    Fixed(f64),
    /// Leave-one-out CV over `grid` log-spaced multiples (0.03×..10×) of Silverman.
    Loocv { grid: usize },
}

/// One fitted covariate function `f_{k,j}(·)`.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressionFn<T: Real> {
    /// `f ≡ 0`; used when no covariates are supplied.
    Zero,
    Linear {
        beta: DVector<T>,
        /// Ridge jitter added to `XᵀX` (zero when the Gram matrix was well conditioned).
        ridge: T,
    },
    Lasso {
        beta: DVector<T>,
        active: Vec<usize>,
        lambda: T,
        /// All-zero covariate columns excluded from the fit.
        dropped: Vec<usize>,
    },
    Kernel {
        x: DMatrix<T>,
        y: DVector<T>,
        bandwidth: DVector<T>,
    },
}

impl<T: Real> RegressionFn<T> {
    pub fn family(&self) -> Option<RegressionFamily> {
        match self {
            Self::Zero => None,
            Self::Linear { .. } => Some(RegressionFamily::Linear),
            Self::Lasso { .. } => Some(RegressionFamily::Lasso),
            Self::Kernel { .. } => Some(RegressionFamily::Kernel),
        }
    }

    /// Coefficients when the function is linear in the covariates.
    pub fn coefficients(&self) -> Option<&DVector<T>> {
        match self {
            Self::Linear { beta, .. } | Self::Lasso { beta, .. } => Some(beta),
            _ => None,
        }
    }

    /// Evaluates the function at each row of `x`.
    pub fn predict(&self, x: &DMatrix<T>) -> Result<DVector<T>> {
        match self {
            Self::Zero => Ok(DVector::zeros(x.nrows())),
            Self::Linear { beta, .. } | Self::Lasso { beta, .. } => {
                if x.ncols() != beta.len() {
                    return Err(SifaError::DimensionMismatch(format!(
                        "covariates have {} columns, model was fit on {}",
                        x.ncols(),
                        beta.len()
                    )));
                }
                Ok(x * beta)
            }
            Self::Kernel {
                x: train,
                y,
                bandwidth,
            } => {
                if x.ncols() != train.ncols() {
                    return Err(SifaError::DimensionMismatch(format!(
                        "covariates have {} columns, model was fit on {}",
                        x.ncols(),
                        train.ncols()
                    )));
                }
                Ok(nadaraya_watson(train, y, bandwidth, x, false))
            }
        }
    }

    /// Negates the function's output. Every family is linear in its
    /// coefficients or stored responses, so this is exact.
    pub fn negate(&mut self) {
        match self {
            Self::Zero => {}
            Self::Linear { beta, .. } | Self::Lasso { beta, .. } => beta.neg_mut(),
            Self::Kernel { y, .. } => y.neg_mut(),
        }
    }
}

/// Cached OLS solver for a fixed design matrix.
#[derive(Debug, Clone)]
pub struct LinearDesign<T: Real> {
    x: DMatrix<T>,
    chol: Cholesky<T, Dyn>,
    ridge: T,
}

impl<T: Real> LinearDesign<T> {
    pub fn new(x: &DMatrix<T>) -> Result<Self> {
        let (n, q) = x.shape();
        if n <= q {
            return Err(SifaError::Regression(format!(
                "ordinary least squares needs n > q (n = {n}, q = {q}); use the lasso family"
            )));
        }
        let mut gram = x.transpose() * x;
        let (_, eig) = sym_eig_desc(&gram)?;
        let largest = eig[0];
        let smallest = eig[q - 1];
        let mut ridge = T::zero();
        if !(smallest > T::zero()) || largest / smallest > T::lit(MAX_CONDITION) {
            ridge = T::lit(1e-8) * gram.trace() / T::from_usize_lossy(q);
            if ridge <= T::zero() {
                ridge = T::lit(1e-8);
            }
            warn!("near-singular XᵀX; adding ridge jitter {ridge}");
            for i in 0..q {
                gram[(i, i)] += ridge;
            }
        }
        let chol = Cholesky::new(gram)
            .ok_or_else(|| SifaError::Singular("XᵀX after jitter".into()))?;
        Ok(Self {
            x: x.clone(),
            chol,
            ridge,
        })
    }

    pub fn ridge(&self) -> T {
        self.ridge
    }

    pub fn fit(&self, y: &DVector<T>) -> Result<RegressionFn<T>> {
        if y.len() != self.x.nrows() {
            return Err(SifaError::DimensionMismatch(format!(
                "{} responses for {} rows",
                y.len(),
                self.x.nrows()
            )));
        }
        let xty = self.x.transpose() * y;
        Ok(RegressionFn::Linear {
            beta: self.chol.solve(&xty),
            ridge: self.ridge,
        })
    }
}

/// Ordinary least squares `β = (XᵀX)⁻¹Xᵀy` (no intercept; inputs are centred).
pub fn fit_linear<T: Real>(x: &DMatrix<T>, y: &DVector<T>) -> Result<RegressionFn<T>> {
    LinearDesign::new(x)?.fit(y)
}

fn soft_threshold<T: Real>(z: T, gamma: T) -> T {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        T::zero()
    }
}

/// Coordinate descent for `(1/2n)‖y − Xβ‖² + λ‖β‖₁`, warm-started from `beta`.
fn lasso_cd<T: Real>(
    x: &DMatrix<T>,
    col_sq: &[T],
    y: &DVector<T>,
    lambda: T,
    beta: &mut DVector<T>,
    tol: T,
    max_sweeps: usize,
) {
    let n = T::from_usize_lossy(x.nrows());
    let mut resid = y - x * &*beta;
    for _ in 0..max_sweeps {
        let mut max_step = T::zero();
        for j in 0..x.ncols() {
            if col_sq[j] <= T::zero() {
                continue;
            }
            let xj = x.column(j);
            let old = beta[j];
            let rho = (xj.dot(&resid) + col_sq[j] * old) / n;
            let new = soft_threshold(rho, lambda) / (col_sq[j] / n);
            let step = new - old;
            if step != T::zero() {
                resid.axpy(-step, &xj, T::one());
                beta[j] = new;
                max_step = max_step.max(step.abs());
            }
        }
        if max_step < tol {
            break;
        }
    }
}

/// `λ_max = ‖Xᵀy‖_∞ / n`: the smallest penalty giving β = 0.
pub fn lasso_lambda_max<T: Real>(x: &DMatrix<T>, y: &DVector<T>) -> T {
    let n = T::from_usize_lossy(x.nrows());
    (x.transpose() * y).amax() / n
}

/// Default grid: `n_lambda` log-spaced values from `λ_max` down to `min_ratio·λ_max`.
pub fn lasso_default_grid<T: Real>(lambda_max: T, options: &LassoOptions) -> Vec<T> {
    let m = options.n_lambda.max(1);
    if m == 1 {
        return vec![lambda_max];
    }
    let lo = options.min_ratio.ln();
    (0..m)
        .map(|i| {
            let t = i as f64 / (m - 1) as f64;
            lambda_max * T::lit((lo * t).exp())
        })
        .collect()
}

/// Cross-validated lasso. The penalty minimizing the `folds`-fold held-out
/// squared error is chosen (ties go to the larger penalty) and the model is
/// refit on all rows at that penalty.
pub fn fit_lasso<T: Real>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    lambda_grid: Option<&[T]>,
    options: &LassoOptions,
) -> Result<RegressionFn<T>> {
    let (n, q) = x.shape();
    if y.len() != n {
        return Err(SifaError::DimensionMismatch(format!(
            "{} responses for {n} rows",
            y.len()
        )));
    }
    if options.folds < 2 || n < 3 * options.folds {
        return Err(SifaError::Regression(format!(
            "lasso CV needs folds ≥ 2 and n ≥ 3·folds (n = {n}, folds = {})",
            options.folds
        )));
    }
    let dropped: Vec<usize> = (0..q)
        .filter(|&j| x.column(j).iter().all(|v| *v == T::zero()))
        .collect();
    if !dropped.is_empty() {
        warn!("lasso: dropping all-zero covariate columns {dropped:?}");
    }

    let grid: Vec<T> = match lambda_grid {
        Some(g) => {
            if g.is_empty() || g.iter().any(|l| !(*l > T::zero())) {
                return Err(SifaError::Regression(
                    "lambda grid must be non-empty and positive".into(),
                ));
            }
            if g.windows(2).any(|w| w[1] >= w[0]) {
                return Err(SifaError::Regression(
                    "lambda grid must be strictly decreasing".into(),
                ));
            }
            g.to_vec()
        }
        None => {
            let lmax = lasso_lambda_max(x, y);
            if !(lmax > T::zero()) {
                return Ok(RegressionFn::Lasso {
                    beta: DVector::zeros(q),
                    active: vec![],
                    lambda: T::zero(),
                    dropped,
                });
            }
            lasso_default_grid(lmax, options)
        }
    };

    let tol = T::lit(options.tol);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(options.seed));
    let mut cv_error = vec![T::zero(); grid.len()];
    for fold in 0..options.folds {
        let test: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(pos, _)| pos % options.folds == fold)
            .map(|(_, &i)| i)
            .collect();
        let train: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(pos, _)| pos % options.folds != fold)
            .map(|(_, &i)| i)
            .collect();
        let xt = x.select_rows(&train);
        let yt = y.select_rows(&train);
        let xv = x.select_rows(&test);
        let yv = y.select_rows(&test);
        let col_sq: Vec<T> = xt.column_iter().map(|c| c.norm_squared()).collect();
        let mut beta = DVector::zeros(q);
        for (li, &lambda) in grid.iter().enumerate() {
            lasso_cd(&xt, &col_sq, &yt, lambda, &mut beta, tol, options.max_sweeps);
            cv_error[li] += (&yv - &xv * &beta).norm_squared();
        }
    }
    let mut best = 0;
    for (i, e) in cv_error.iter().enumerate() {
        if *e < cv_error[best] {
            best = i;
        }
    }

    let col_sq: Vec<T> = x.column_iter().map(|c| c.norm_squared()).collect();
    let mut beta = DVector::zeros(q);
    for &lambda in &grid[..=best] {
        lasso_cd(x, &col_sq, y, lambda, &mut beta, tol, options.max_sweeps);
    }
    let active = (0..q).filter(|&j| beta[j] != T::zero()).collect();
    Ok(RegressionFn::Lasso {
        beta,
        active,
        lambda: grid[best],
        dropped,
    })
}

/// Lasso at one fixed penalty (no cross-validation).
pub fn lasso_at<T: Real>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    lambda: T,
    options: &LassoOptions,
) -> DVector<T> {
    let col_sq: Vec<T> = x.column_iter().map(|c| c.norm_squared()).collect();
    let mut beta = DVector::zeros(x.ncols());
    lasso_cd(
        x,
        &col_sq,
        y,
        lambda,
        &mut beta,
        T::lit(options.tol),
        options.max_sweeps,
    );
    beta
}

fn silverman<T: Real>(x: &DMatrix<T>) -> DVector<T> {
    let (n, d) = x.shape();
    let nf = T::from_usize_lossy(n);
    let factor = (T::lit(4.0) / (T::from_usize_lossy(d + 2) * nf))
        .powf(T::one() / T::from_usize_lossy(d + 4));
    DVector::from_iterator(
        d,
        x.column_iter().map(|c| {
            let mean = c.sum() / nf;
            let var = c.iter().fold(T::zero(), |acc, v| acc + (*v - mean) * (*v - mean))
                / T::from_usize_lossy(n.saturating_sub(1).max(1));
            var.sqrt() * factor
        }),
    )
}

/// Kernel-weighted means of `y` at each row of `at`, with a product Gaussian
/// kernel. Distances are shifted by the row minimum before exponentiating so
/// the weights never underflow together. With `leave_one_out`, `at` must be
/// the training matrix and each point's own response is excluded.
fn nadaraya_watson<T: Real>(
    train: &DMatrix<T>,
    y: &DVector<T>,
    bandwidth: &DVector<T>,
    at: &DMatrix<T>,
    leave_one_out: bool,
) -> DVector<T> {
    let n = train.nrows();
    let d = train.ncols();
    let half = T::lit(0.5);
    let mut out = DVector::zeros(at.nrows());
    let mut dist = vec![T::zero(); n];
    for i in 0..at.nrows() {
        let mut min = T::max_value().unwrap();
        for (j, dj) in dist.iter_mut().enumerate() {
            let mut acc = T::zero();
            for c in 0..d {
                let z = (at[(i, c)] - train[(j, c)]) / bandwidth[c];
                acc += z * z;
            }
            *dj = acc;
            if !(leave_one_out && i == j) && acc < min {
                min = acc;
            }
        }
        let mut num = T::zero();
        let mut den = T::zero();
        for (j, dj) in dist.iter().enumerate() {
            if leave_one_out && i == j {
                continue;
            }
            let w = (-(*dj - min) * half).exp();
            num += w * y[j];
            den += w;
        }
        out[i] = num / den;
    }
    out
}

/// Nadaraya–Watson regression with a product Gaussian kernel.
pub fn fit_kernel<T: Real>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    policy: BandwidthPolicy,
) -> Result<RegressionFn<T>> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(SifaError::DimensionMismatch(format!(
            "{} responses for {n} rows",
            y.len()
        )));
    }
    if d == 0 || d > MAX_KERNEL_DIM {
        return Err(SifaError::Regression(format!(
            "kernel regression supports 1..={MAX_KERNEL_DIM} covariates, got {d}"
        )));
    }
    if n < MIN_KERNEL_SAMPLES {
        return Err(SifaError::Regression(format!(
            "kernel regression needs at least {MIN_KERNEL_SAMPLES} samples, got {n}"
        )));
    }
    let underflow = |h: &DVector<T>| h.iter().any(|v| !(*v > T::zero()) || !v.is_finite());
    let bandwidth = match policy {
        BandwidthPolicy::Silverman => silverman(x),
        BandwidthPolicy::Fixed(h) => DVector::from_element(d, T::lit(h)),
        BandwidthPolicy::Loocv { grid } => {
            let base = silverman(x);
            if underflow(&base) {
                return Err(SifaError::Regression(
                    "bandwidth underflow: covariate has zero spread".into(),
                ));
            }
            let grid = grid.max(2);
            let (lo, hi) = ((0.03f64).ln(), (10.0f64).ln());
            let mut best = (T::max_value().unwrap(), base.clone());
            for g in 0..grid {
                let mult = T::lit((lo + (hi - lo) * g as f64 / (grid - 1) as f64).exp());
                let h = &base * mult;
                let pred = nadaraya_watson(x, y, &h, x, true);
                let err = (&pred - y).norm_squared();
                if err < best.0 {
                    best = (err, h);
                }
            }
            best.1
        }
    };
    if underflow(&bandwidth) {
        return Err(SifaError::Regression(
            "bandwidth underflow: non-positive or non-finite bandwidth".into(),
        ));
    }
    Ok(RegressionFn::Kernel {
        x: x.clone(),
        y: y.clone(),
        bandwidth,
    })
}

/// Fits one covariate function per latent column for a fixed design, caching
/// whatever the family can reuse across columns and EM iterations.
#[derive(Debug, Clone)]
pub struct Regressor<T: Real> {
    family: RegressionFamily,
    x: DMatrix<T>,
    design: Option<LinearDesign<T>>,
    lasso: LassoOptions,
    bandwidth: BandwidthPolicy,
}

impl<T: Real> Regressor<T> {
    pub fn new(
        family: RegressionFamily,
        x: &DMatrix<T>,
        lasso: LassoOptions,
        bandwidth: BandwidthPolicy,
    ) -> Result<Self> {
        let design = match family {
            RegressionFamily::Linear => Some(LinearDesign::new(x)?),
            _ => None,
        };
        Ok(Self {
            family,
            x: x.clone(),
            design,
            lasso,
            bandwidth,
        })
    }

    pub fn family(&self) -> RegressionFamily {
        self.family
    }

    pub fn ridge(&self) -> Option<T> {
        self.design.as_ref().map(|d| d.ridge())
    }

    /// Returns the fitted function and its predictions on the design rows.
    pub fn fit(&self, y: &DVector<T>) -> Result<(RegressionFn<T>, DVector<T>)> {
        let f = match self.family {
            RegressionFamily::Linear => self.design.as_ref().expect("linear design").fit(y)?,
            RegressionFamily::Lasso => fit_lasso(&self.x, y, None, &self.lasso)?,
            RegressionFamily::Kernel => fit_kernel(&self.x, y, self.bandwidth)?,
        };
        let fitted = f.predict(&self.x)?;
        Ok((f, fitted))
    }
}
