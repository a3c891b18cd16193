//! Shared domain types, dataset validation and identifiability checks.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SifaError};
use crate::numerics::{center_columns, gram_deviation, leading_sign, singular_values, CovarianceFactors};
use crate::regression::{BandwidthPolicy, LassoOptions, RegressionFamily, RegressionFn};
use crate::scalar::Real;
use crate::tolerances::TOLERANCES;

/// One observed view: n samples by p_k variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMatrix<T: Real> {
    pub values: DMatrix<T>,
    /// 1-based view index k.
    pub view_id: usize,
}

/// K sample-aligned views and an optional covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset<T: Real> {
    pub views: Vec<ViewMatrix<T>>,
    pub covariates: Option<DMatrix<T>>,
    /// Every column of every view and of X has mean zero.
    pub centered: bool,
}

/// Column means removed by [`MultiViewDataset::center`].
#[derive(Debug, Clone, PartialEq)]
pub struct CenteringMeans<T: Real> {
    pub views: Vec<DVector<T>>,
    pub covariates: Option<DVector<T>>,
}

impl<T: Real> MultiViewDataset<T> {
    /// Builds a dataset and rejects it if any invariant fails.
    pub fn new(views: Vec<DMatrix<T>>, covariates: Option<DMatrix<T>>) -> Result<Self> {
        let data = Self::new_unchecked(views, covariates);
        let violations = validate_dataset(&data);
        if let Some(first) = violations.first() {
            return Err(SifaError::InvalidData(first.to_string()));
        }
        Ok(data)
    }

    pub fn new_unchecked(views: Vec<DMatrix<T>>, covariates: Option<DMatrix<T>>) -> Self {
        Self {
            views: views
                .into_iter()
                .enumerate()
                .map(|(i, values)| ViewMatrix {
                    values,
                    view_id: i + 1,
                })
                .collect(),
            covariates,
            centered: false,
        }
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn n(&self) -> usize {
        self.views.first().map_or(0, |v| v.values.nrows())
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.values.ncols()).collect()
    }

    pub fn q(&self) -> usize {
        self.covariates.as_ref().map_or(0, |x| x.ncols())
    }

    pub fn view(&self, k: usize) -> &DMatrix<T> {
        &self.views[k].values
    }

    /// `Y★ = (Y_1, …, Y_K)`.
    pub fn stacked(&self) -> DMatrix<T> {
        let n = self.n();
        let total: usize = self.dims().iter().sum();
        let mut out = DMatrix::zeros(n, total);
        let mut col = 0;
        for v in &self.views {
            let p = v.values.ncols();
            out.columns_mut(col, p).copy_from(&v.values);
            col += p;
        }
        out
    }

    /// Subset of samples, keeping view and covariate alignment.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            views: self
                .views
                .iter()
                .map(|v| ViewMatrix {
                    values: v.values.select_rows(rows),
                    view_id: v.view_id,
                })
                .collect(),
            covariates: self.covariates.as_ref().map(|x| x.select_rows(rows)),
            centered: false,
        }
    }

    /// Centres every column of every view and of X.
    pub fn center(&self) -> (Self, CenteringMeans<T>) {
        let mut view_means = Vec::with_capacity(self.views.len());
        let views = self
            .views
            .iter()
            .map(|v| {
                let (values, means) = center_columns(&v.values);
                view_means.push(means);
                ViewMatrix {
                    values,
                    view_id: v.view_id,
                }
            })
            .collect();
        let (covariates, x_means) = match &self.covariates {
            Some(x) => {
                let (c, m) = center_columns(x);
                (Some(c), Some(m))
            }
            None => (None, None),
        };
        (
            Self {
                views,
                covariates,
                centered: true,
            },
            CenteringMeans {
                views: view_means,
                covariates: x_means,
            },
        )
    }
}

/// One failed dataset invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoViews,
    RowCountMismatch {
        view: usize,
        rows: usize,
        expected: usize,
    },
    CovariateRowMismatch {
        rows: usize,
        expected: usize,
    },
    TooFewSamples {
        rows: usize,
    },
    EmptyView {
        view: usize,
    },
    ViewIdOutOfOrder {
        position: usize,
        view_id: usize,
    },
    NonFinite {
        /// View index, or `None` for the covariate matrix.
        view: Option<usize>,
        row: usize,
        col: usize,
    },
    NotCentered {
        view: Option<usize>,
        col: usize,
        mean: f64,
    },
}

fn block_name(view: &Option<usize>) -> String {
    match view {
        Some(k) => format!("view {k}"),
        None => "covariates".to_string(),
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoViews => write!(f, "dataset has no views"),
            Self::RowCountMismatch {
                view,
                rows,
                expected,
            } => write!(f, "row count mismatch: view {view} has {rows} rows, expected {expected}"),
            Self::CovariateRowMismatch { rows, expected } => write!(
                f,
                "row count mismatch: covariates have {rows} rows, expected {expected}"
            ),
            Self::TooFewSamples { rows } => write!(f, "need at least 2 samples, got {rows}"),
            Self::EmptyView { view } => write!(f, "view {view} has no columns"),
            Self::ViewIdOutOfOrder { position, view_id } => {
                write!(f, "view at position {position} has id {view_id}")
            }
            Self::NonFinite { view, row, col } => write!(
                f,
                "non-finite entry in {} at row {row}, column {col}",
                block_name(view)
            ),
            Self::NotCentered { view, col, mean } => write!(
                f,
                "{} column {col} has mean {mean:e} but the dataset is marked centred",
                block_name(view)
            ),
        }
    }
}

fn scan_block<T: Real>(
    m: &DMatrix<T>,
    view: Option<usize>,
    centered: bool,
    out: &mut Vec<Violation>,
) {
    let n = m.nrows();
    for (col, c) in m.column_iter().enumerate() {
        if let Some(row) = c.iter().position(|x| !x.is_finite()) {
            out.push(Violation::NonFinite { view, row, col });
            continue;
        }
        if centered && n > 0 {
            let sum = c.sum().to_f64_lossy();
            let scale = c.amax().to_f64_lossy().max(1.0);
            if sum.abs() > TOLERANCES.exact * n as f64 * scale {
                out.push(Violation::NotCentered {
                    view,
                    col,
                    mean: sum / n as f64,
                });
            }
        }
    }
}

/// All invariant violations of `data`; empty iff the dataset is valid.
pub fn validate_dataset<T: Real>(data: &MultiViewDataset<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    if data.views.is_empty() {
        out.push(Violation::NoViews);
        return out;
    }
    let expected = data.n();
    if expected < 2 {
        out.push(Violation::TooFewSamples { rows: expected });
    }
    for (i, v) in data.views.iter().enumerate() {
        if v.view_id != i + 1 {
            out.push(Violation::ViewIdOutOfOrder {
                position: i + 1,
                view_id: v.view_id,
            });
        }
        if v.values.nrows() != expected {
            out.push(Violation::RowCountMismatch {
                view: v.view_id,
                rows: v.values.nrows(),
                expected,
            });
        }
        if v.values.ncols() == 0 {
            out.push(Violation::EmptyView { view: v.view_id });
        }
        scan_block(&v.values, Some(v.view_id), data.centered, &mut out);
    }
    if let Some(x) = &data.covariates {
        if x.nrows() != expected {
            out.push(Violation::CovariateRowMismatch {
                rows: x.nrows(),
                expected,
            });
        }
        scan_block(x, None, data.centered, &mut out);
    }
    out
}

/// Joint rank r0 and individual ranks r_1..r_K.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RankSet {
    pub r0: usize,
    pub r: Vec<usize>,
}

impl RankSet {
    pub fn new(r0: usize, r: Vec<usize>) -> Self {
        Self { r0, r }
    }

    pub fn num_views(&self) -> usize {
        self.r.len()
    }

    /// `r0 + Σ r_k`.
    pub fn total(&self) -> usize {
        self.r0 + self.r.iter().sum::<usize>()
    }

    /// Width of latent block `b` (0 = joint, k = view k).
    pub fn width(&self, block: usize) -> usize {
        if block == 0 {
            self.r0
        } else {
            self.r[block - 1]
        }
    }

    /// First column of latent block `b` in `(U0, U_1, …, U_K)`.
    pub fn offset(&self, block: usize) -> usize {
        if block == 0 {
            0
        } else {
            self.r0 + self.r[..block - 1].iter().sum::<usize>()
        }
    }

    /// Checks `r0 + r_k < p_k` for every view and `r0 + Σr_k ≤ n`.
    pub fn validate(&self, dims: &[usize], n: usize) -> Result<()> {
        if self.r.len() != dims.len() {
            return Err(SifaError::InvalidRanks(format!(
                "{} individual ranks for {} views",
                self.r.len(),
                dims.len()
            )));
        }
        for (k, (&rk, &pk)) in self.r.iter().zip(dims).enumerate() {
            if self.r0 + rk >= pk {
                return Err(SifaError::InvalidRanks(format!(
                    "r0 + r{} = {} must be below p{} = {pk}",
                    k + 1,
                    self.r0 + rk,
                    k + 1
                )));
            }
        }
        if self.total() > n {
            return Err(SifaError::InvalidRanks(format!(
                "total rank {} exceeds n = {n}",
                self.total()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for RankSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.r0)?;
        for rk in &self.r {
            write!(f, ",{rk}")?;
        }
        write!(f, ")")
    }
}

impl std::str::FromStr for RankSet {
    type Err = SifaError;

    /// Parses `r0,r1,…,rK` (parentheses optional).
    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim().trim_start_matches('(').trim_end_matches(')');
        let parsed: std::result::Result<Vec<usize>, _> =
            trimmed.split(',').map(|t| t.trim().parse::<usize>()).collect();
        match parsed {
            Ok(v) if v.len() >= 2 => Ok(Self::new(v[0], v[1..].to_vec())),
            _ => Err(SifaError::InvalidRanks(format!(
                "expected r0,r1,..,rK with K ≥ 1, got '{s}'"
            ))),
        }
    }
}

/// The covariate functions of one latent block. Raw per-column fits are
/// combined through `mix`: the block's output is `raw(X)·mix`. Sign flips,
/// reorderings and the rotation of the joint renormalization act on `mix`,
/// which keeps every regression family exact under those transformations.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFunctions<T: Real> {
    pub fns: Vec<RegressionFn<T>>,
    pub mix: DMatrix<T>,
}

impl<T: Real> BlockFunctions<T> {
    pub fn zero(width: usize) -> Self {
        Self {
            fns: vec![RegressionFn::Zero; width],
            mix: DMatrix::identity(width, width),
        }
    }

    pub fn from_fns(fns: Vec<RegressionFn<T>>) -> Self {
        let r = fns.len();
        Self {
            fns,
            mix: DMatrix::identity(r, r),
        }
    }

    pub fn width(&self) -> usize {
        self.mix.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.fns.iter().all(|f| matches!(f, RegressionFn::Zero))
    }

    /// `f(X)` as an n×r matrix.
    pub fn evaluate(&self, x: Option<&DMatrix<T>>, n: usize) -> Result<DMatrix<T>> {
        if self.is_zero() {
            return Ok(DMatrix::zeros(n, self.width()));
        }
        let x = x.ok_or_else(|| {
            SifaError::DimensionMismatch("covariate functions need covariates".into())
        })?;
        if x.nrows() != n {
            return Err(SifaError::DimensionMismatch(format!(
                "covariates have {} rows, expected {n}",
                x.nrows()
            )));
        }
        let mut raw = DMatrix::zeros(n, self.fns.len());
        for (j, f) in self.fns.iter().enumerate() {
            raw.set_column(j, &f.predict(x)?);
        }
        Ok(raw * &self.mix)
    }

    /// Effective q×r coefficient matrix when every function is linear in X.
    pub fn coefficient_matrix(&self, q: usize) -> Option<DMatrix<T>> {
        let mut b = DMatrix::zeros(q, self.fns.len());
        for (j, f) in self.fns.iter().enumerate() {
            match f {
                RegressionFn::Zero => {}
                RegressionFn::Linear { beta, .. } | RegressionFn::Lasso { beta, .. } => {
                    if beta.len() != q {
                        return None;
                    }
                    b.set_column(j, beta);
                }
                RegressionFn::Kernel { .. } => return None,
            }
        }
        Some(b * &self.mix)
    }

    pub fn negate_output(&mut self, j: usize) {
        self.mix.column_mut(j).neg_mut();
    }

    /// Output column j becomes old output column `order[j]`.
    pub fn permute_outputs(&mut self, order: &[usize]) {
        self.mix = self.mix.select_columns(order);
    }

    /// Output becomes `f(X)·g`.
    pub fn transform_outputs(&mut self, g: &DMatrix<T>) {
        self.mix = &self.mix * g;
    }
}

/// The full parameter set θ.
#[derive(Debug, Clone, PartialEq)]
pub struct SifaParams<T: Real> {
    /// Block 0 holds f0 (joint); block k holds f_k.
    pub functions: Vec<BlockFunctions<T>>,
    /// Joint loading blocks V0k, p_k×r0.
    pub v0: Vec<DMatrix<T>>,
    /// Individual loadings V_k, p_k×r_k.
    pub v: Vec<DMatrix<T>>,
    pub sigma0: DVector<T>,
    pub sigma: Vec<DVector<T>>,
    pub noise_var: Vec<T>,
}

impl<T: Real> SifaParams<T> {
    pub fn num_views(&self) -> usize {
        self.v.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.v.iter().map(|v| v.nrows()).collect()
    }

    pub fn ranks(&self) -> RankSet {
        RankSet::new(
            self.sigma0.len(),
            self.sigma.iter().map(|s| s.len()).collect(),
        )
    }

    /// Checks that every block has consistent dimensions.
    pub fn check_shapes(&self) -> Result<()> {
        let k = self.num_views();
        let r0 = self.sigma0.len();
        if self.v0.len() != k
            || self.sigma.len() != k
            || self.noise_var.len() != k
            || self.functions.len() != k + 1
        {
            return Err(SifaError::DimensionMismatch(
                "parameter lists disagree on the number of views".into(),
            ));
        }
        for i in 0..k {
            let pk = self.v[i].nrows();
            if self.v0[i].shape() != (pk, r0) || self.v[i].ncols() != self.sigma[i].len() {
                return Err(SifaError::DimensionMismatch(format!(
                    "loading shapes of view {} are inconsistent",
                    i + 1
                )));
            }
        }
        let ranks = self.ranks();
        for (b, f) in self.functions.iter().enumerate() {
            if f.width() != ranks.width(b) || f.mix.nrows() != f.fns.len() {
                return Err(SifaError::DimensionMismatch(format!(
                    "covariate block {b} has width {}, expected {}",
                    f.width(),
                    ranks.width(b)
                )));
            }
        }
        Ok(())
    }

    pub fn covariance_factors(&self) -> CovarianceFactors<T> {
        CovarianceFactors {
            v0: self.v0.clone(),
            v: self.v.clone(),
            sigma0: self.sigma0.clone(),
            sigma: self.sigma.clone(),
            noise_var: self.noise_var.clone(),
        }
    }

    /// `[f0(X), f1(X), …, fK(X)]`, n×(r0+Σr_k).
    pub fn factor_means(&self, x: Option<&DMatrix<T>>, n: usize) -> Result<DMatrix<T>> {
        let ranks = self.ranks();
        let mut out = DMatrix::zeros(n, ranks.total());
        for (b, f) in self.functions.iter().enumerate() {
            let w = ranks.width(b);
            if w > 0 {
                out.columns_mut(ranks.offset(b), w)
                    .copy_from(&f.evaluate(x, n)?);
            }
        }
        Ok(out)
    }

    /// Joint loadings stacked into one (Σp_k)×r0 matrix.
    pub fn stacked_v0(&self) -> DMatrix<T> {
        let p: usize = self.dims().iter().sum();
        let r0 = self.sigma0.len();
        let mut out = DMatrix::zeros(p, r0);
        let mut row = 0;
        for b in &self.v0 {
            out.rows_mut(row, b.nrows()).copy_from(b);
            row += b.nrows();
        }
        out
    }

    /// Loadings of view k against the full latent vector: `(V0k, 0, …, V_k, …, 0)`.
    pub fn view_loadings(&self, k: usize) -> DMatrix<T> {
        let ranks = self.ranks();
        let mut w = DMatrix::zeros(self.v[k].nrows(), ranks.total());
        if ranks.r0 > 0 {
            w.columns_mut(0, ranks.r0).copy_from(&self.v0[k]);
        }
        let rk = ranks.r[k];
        if rk > 0 {
            w.columns_mut(ranks.offset(k + 1), rk).copy_from(&self.v[k]);
        }
        w
    }

    /// Per-column signs (+1/−1) that make each loading column's first
    /// non-negligible entry positive; joint columns are judged on the
    /// stacked V0.
    pub fn sign_flips(&self) -> DVector<T> {
        let ranks = self.ranks();
        let mut signs = DVector::from_element(ranks.total(), T::one());
        for j in 0..ranks.r0 {
            signs[j] = leading_sign(self.v0.iter().flat_map(|b| b.column(j).iter().copied().collect::<Vec<_>>()));
        }
        for (k, vk) in self.v.iter().enumerate() {
            let off = ranks.offset(k + 1);
            for j in 0..vk.ncols() {
                signs[off + j] = leading_sign(vk.column(j).iter().copied());
            }
        }
        signs
    }

    /// Multiplies latent column j's loadings and function output by `signs[j]`.
    pub fn apply_signs(&mut self, signs: &DVector<T>) {
        let ranks = self.ranks();
        for j in 0..ranks.r0 {
            if signs[j] < T::zero() {
                for b in &mut self.v0 {
                    b.column_mut(j).neg_mut();
                }
                self.functions[0].negate_output(j);
            }
        }
        for k in 0..self.num_views() {
            let off = ranks.offset(k + 1);
            for j in 0..ranks.r[k] {
                if signs[off + j] < T::zero() {
                    self.v[k].column_mut(j).neg_mut();
                    self.functions[k + 1].negate_output(j);
                }
            }
        }
    }
}

/// Returns `params` with every loading column's first entry of magnitude
/// above 1e-12 positive. Each flip negates the matching covariate-function
/// output, so `f(X)·Vᵀ`, Σ★ and the likelihood are unchanged.
pub fn fix_signs<T: Real>(params: &SifaParams<T>) -> SifaParams<T> {
    let mut out = params.clone();
    let signs = out.sign_flips();
    out.apply_signs(&signs);
    out
}

/// Conditional moments of the latent factors given the data.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMoments<T: Real> {
    /// `E[(U0, U★) | Y★]`, n×(r0+Σr_k).
    pub eu: DMatrix<T>,
    /// Posterior covariance of one latent row (shared by all samples).
    pub c: DMatrix<T>,
    /// `E[(U0,U★)ᵀ(U0,U★) | Y★] = EUᵀEU + n·C`.
    pub eutu: DMatrix<T>,
}

impl<T: Real> LatentMoments<T> {
    pub fn n(&self) -> usize {
        self.eu.nrows()
    }

    /// Applies per-column signs to EU, C and EUtU.
    pub fn apply_signs(&mut self, signs: &DVector<T>) {
        for (j, &s) in signs.iter().enumerate() {
            if s < T::zero() {
                self.eu.column_mut(j).neg_mut();
                self.c.column_mut(j).neg_mut();
                self.c.row_mut(j).neg_mut();
                self.eutu.column_mut(j).neg_mut();
                self.eutu.row_mut(j).neg_mut();
            }
        }
    }
}

/// Marginal mean μ★ and the factored marginal covariance Σ★.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalMoments<T: Real> {
    pub mu_star: DMatrix<T>,
    pub sigma_star_factors: CovarianceFactors<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Conditions A1/A2 (SIFA-A).
    #[default]
    General,
    /// Conditions B1/B2 (SIFA-B).
    Orthogonal,
}

impl std::str::FromStr for Mode {
    type Err = SifaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(Self::General),
            "orthogonal" => Ok(Self::Orthogonal),
            other => Err(SifaError::InvalidOption(format!("unknown mode '{other}'"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::General => "general",
            Self::Orthogonal => "orthogonal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMethod {
    #[default]
    Svd,
    Random,
}

impl std::str::FromStr for InitMethod {
    type Err = SifaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svd" => Ok(Self::Svd),
            "random" => Ok(Self::Random),
            other => Err(SifaError::InvalidOption(format!("unknown init '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub mode: Mode,
    pub regression: RegressionFamily,
    pub max_iters: usize,
    /// Relative log-likelihood change below which the fit stops.
    pub tol: f64,
    pub seed: u64,
    /// Loading update rounds per EM iteration (general mode).
    pub inner_rounds: usize,
    pub init: InitMethod,
    pub lasso: LassoOptions,
    pub bandwidth: BandwidthPolicy,
    /// Attach the five-part structure decomposition to the report.
    pub structure: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            mode: Mode::General,
            regression: RegressionFamily::Linear,
            max_iters: 500,
            tol: 1e-6,
            seed: 0,
            inner_rounds: 1,
            init: InitMethod::Svd,
            lasso: LassoOptions::default(),
            bandwidth: BandwidthPolicy::Silverman,
            structure: false,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(SifaError::InvalidOption(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(SifaError::InvalidOption("max_iters must be at least 1".into()));
        }
        if self.inner_rounds == 0 {
            return Err(SifaError::InvalidOption("inner_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

/// Whether covariates informed the fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Configuration {
    Supervised,
    /// No covariates: every `f_k ≡ 0`.
    Jive,
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Supervised => "supervised",
            Self::Jive => "JIVE configuration (f=0)",
        })
    }
}

/// Five-part decomposition of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureParts<T: Real> {
    /// `f0(X)·V0kᵀ`
    pub joint_deterministic: DMatrix<T>,
    /// `f_k(X)·V_kᵀ`
    pub individual_deterministic: DMatrix<T>,
    /// `F̂0·V0kᵀ`
    pub joint_random: DMatrix<T>,
    /// `F̂_k·V_kᵀ`
    pub individual_random: DMatrix<T>,
    pub residual: DMatrix<T>,
}

impl<T: Real> StructureParts<T> {
    pub fn sum(&self) -> DMatrix<T> {
        &self.joint_deterministic
            + &self.individual_deterministic
            + &self.joint_random
            + &self.individual_random
            + &self.residual
    }
}

#[derive(Debug, Clone)]
pub struct FitReport<T: Real> {
    pub params: SifaParams<T>,
    /// Log-likelihood after initialization and after every iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Wall-clock seconds.
    pub elapsed: f64,
    pub mode: Mode,
    pub regression: Option<RegressionFamily>,
    pub configuration: Configuration,
    /// Moments at the final parameters.
    pub moments: LatentMoments<T>,
    pub structure: Option<Vec<StructureParts<T>>>,
    pub warnings: Vec<String>,
}

impl<T: Real> FitReport<T> {
    pub fn final_loglik(&self) -> f64 {
        self.loglik_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Per-condition deviations of a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    /// A1: smallest singular value of each V0k.
    pub a1_min_singular: Vec<f64>,
    /// A2: smallest singular value of each `[V0k, V_k]`.
    pub a2_min_singular: Vec<f64>,
    /// B1: `‖V0kᵀV0k − I/K‖_max` per view.
    pub b1_deviation: Vec<f64>,
    /// B2: `‖V0kᵀV_k‖_max` per view.
    pub b2_deviation: Vec<f64>,
    /// `‖V0ᵀV0 − I‖_max` of the stacked joint loadings.
    pub joint_orthonormal: f64,
    /// `‖V_kᵀV_k − I‖_max` per view.
    pub individual_orthonormal: Vec<f64>,
    /// Every Σ diagonal strictly positive and non-increasing.
    pub sigma_ordered: bool,
}

impl ConditionReport {
    /// Basic conditions plus the mode's identifiability conditions within `tol`.
    pub fn satisfied(&self, mode: Mode, tol: f64) -> bool {
        let basic = self.joint_orthonormal <= tol
            && self.individual_orthonormal.iter().all(|d| *d <= tol)
            && self.sigma_ordered;
        match mode {
            Mode::General => {
                basic
                    && self.a1_min_singular.iter().all(|s| *s > 0.0)
                    && self.a2_min_singular.iter().all(|s| *s > 0.0)
            }
            Mode::Orthogonal => {
                basic
                    && self.b1_deviation.iter().all(|d| *d <= tol)
                    && self.b2_deviation.iter().all(|d| *d <= tol)
            }
        }
    }
}

fn min_singular<T: Real>(m: &DMatrix<T>) -> f64 {
    if m.ncols() == 0 {
        return f64::INFINITY;
    }
    if m.nrows() < m.ncols() {
        return 0.0;
    }
    singular_values(m)
        .iter()
        .last()
        .map_or(0.0, |s| s.to_f64_lossy())
}

fn positive_nonincreasing<T: Real>(d: &DVector<T>) -> bool {
    d.iter().all(|x| *x > T::zero()) && d.as_slice().windows(2).all(|w| w[1] <= w[0])
}

/// Reports every identifiability quantity. All fields are computed
/// regardless of mode; [`ConditionReport::satisfied`] interprets them.
pub fn check_conditions<T: Real>(params: &SifaParams<T>) -> ConditionReport {
    let k = params.num_views();
    let inv_k = T::one() / T::from_usize_lossy(k.max(1));
    let mut report = ConditionReport {
        a1_min_singular: Vec::with_capacity(k),
        a2_min_singular: Vec::with_capacity(k),
        b1_deviation: Vec::with_capacity(k),
        b2_deviation: Vec::with_capacity(k),
        joint_orthonormal: gram_deviation(&params.stacked_v0(), T::one()).to_f64_lossy(),
        individual_orthonormal: params
            .v
            .iter()
            .map(|v| gram_deviation(v, T::one()).to_f64_lossy())
            .collect(),
        sigma_ordered: positive_nonincreasing(&params.sigma0)
            && params.sigma.iter().all(positive_nonincreasing),
    };
    for i in 0..k {
        let v0k = &params.v0[i];
        let vk = &params.v[i];
        report.a1_min_singular.push(min_singular(v0k));
        let mut both = DMatrix::zeros(vk.nrows(), v0k.ncols() + vk.ncols());
        both.columns_mut(0, v0k.ncols()).copy_from(v0k);
        both.columns_mut(v0k.ncols(), vk.ncols()).copy_from(vk);
        report.a2_min_singular.push(min_singular(&both));
        report
            .b1_deviation
            .push(gram_deviation(v0k, inv_k).to_f64_lossy());
        let cross = v0k.transpose() * vk;
        report.b2_deviation.push(if cross.is_empty() {
            0.0
        } else {
            cross.amax().to_f64_lossy()
        });
    }
    report
}
