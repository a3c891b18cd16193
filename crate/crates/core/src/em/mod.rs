//! The estimator: likelihood, E-step, both M-step variants and the EM driver.

mod estep;
mod init;
mod mstep;

use std::time::Instant;

use log::warn;
use nalgebra::DMatrix;

pub use estep::{e_step, log_likelihood, marginal_moments};
pub use init::init_params;
pub use mstep::{
    cross_moments, mstep_loadings_general, mstep_loadings_orthogonal, mstep_noise,
    mstep_regressions, GeneralLoadings, RegressionUpdate,
};

use crate::error::{Result, SifaError};
use crate::regression::Regressor;
use crate::scalar::Real;
use crate::types::{
    validate_dataset, Configuration, FitOptions, FitReport, LatentMoments, Mode, MultiViewDataset,
    RankSet, SifaParams, StructureParts,
};

/// Relative log-likelihood drop that triggers a warning in general mode.
const GENERAL_DROP_WARNING: f64 = 1e-4;
/// Relative drop reported for orthogonal mode, where the trace is monotone.
const ORTHOGONAL_DROP_WARNING: f64 = 1e-8;

/// Relabels latent columns: new column j is old column `order[j]`.
fn permute_moments<T: Real>(m: &LatentMoments<T>, order: &[usize]) -> LatentMoments<T> {
    LatentMoments {
        eu: m.eu.select_columns(order),
        c: m.c.select_rows(order).select_columns(order),
        eutu: m.eutu.select_rows(order).select_columns(order),
    }
}

fn permute_loadings<T: Real>(params: &mut SifaParams<T>, ranks: &RankSet, order: &[usize]) {
    let r0 = ranks.r0;
    let joint: Vec<usize> = order[..r0].to_vec();
    for b in &mut params.v0 {
        *b = b.select_columns(&joint);
    }
    for (i, v) in params.v.iter_mut().enumerate() {
        let off = ranks.offset(i + 1);
        let local: Vec<usize> = order[off..off + ranks.r[i]].iter().map(|j| j - off).collect();
        *v = v.select_columns(&local);
    }
}

struct Driver<'a, T: Real> {
    data: &'a MultiViewDataset<T>,
    ystar: DMatrix<T>,
    ranks: RankSet,
    options: &'a FitOptions,
    regressor: Option<Regressor<T>>,
    warnings: Vec<String>,
}

impl<T: Real> Driver<'_, T> {
    fn closed_form(&self) -> bool {
        self.options.mode == Mode::Orthogonal
    }

    fn note(&mut self, msg: String) {
        if !self.warnings.contains(&msg) {
            warn!("{msg}");
            self.warnings.push(msg);
        }
    }

    fn evaluate(&self, params: &SifaParams<T>) -> Result<estep::Evaluation<T>> {
        estep::evaluate(params, self.data, &self.ystar, self.closed_form())
    }

    fn mstep(&mut self, params: &SifaParams<T>, moments: &LatentMoments<T>) -> Result<SifaParams<T>> {
        let ranks = self.ranks.clone();
        let upd = mstep_regressions(moments, &ranks, self.regressor.as_ref())?;
        if upd.floored > 0 {
            self.note("factor variances floored at 1e-8".into());
        }
        let moments = permute_moments(moments, &upd.order);
        let mut next = params.clone();
        permute_loadings(&mut next, &ranks, &upd.order);
        next.functions = upd.functions;
        next.sigma0 = upd.sigma0;
        next.sigma = upd.sigma;
        let cross = cross_moments(self.data, &moments.eu);

        match self.options.mode {
            Mode::General => {
                let gl = mstep_loadings_general(
                    &moments,
                    &cross,
                    &ranks,
                    &next.v0,
                    &next.v,
                    &next.sigma0,
                    self.options.inner_rounds,
                )?;
                if gl.gram_jitter {
                    self.note("singular E(U0ᵀU0): jitter added".into());
                }
                if gl.procrustes_jitter {
                    self.note("rank-deficient Procrustes input: jitter added".into());
                }
                if gl.floored > 0 {
                    self.note("joint eigenvalues floored at 1e-8; r0 kept".into());
                }
                // Noise uses the relaxed loadings, which share the basis of EU.
                next.noise_var = mstep_noise(&moments, self.data, &cross, &ranks, &gl.v0_relaxed, &gl.v);
                if ranks.r0 > 0 {
                    next.functions[0].transform_outputs(&gl.rotation);
                }
                next.v0 = gl.v0;
                next.v = gl.v;
                next.sigma0 = gl.sigma0;
            }
            Mode::Orthogonal => {
                let (v0, v, jitter) = mstep_loadings_orthogonal(&cross, &ranks)?;
                if jitter {
                    self.note("rank-deficient Procrustes input: jitter added".into());
                }
                next.noise_var = mstep_noise(&moments, self.data, &cross, &ranks, &v0, &v);
                next.v0 = v0;
                next.v = v;
            }
        }
        Ok(next)
    }

    #[allow(clippy::type_complexity)]
    fn run(&mut self, mut params: SifaParams<T>) -> Result<(SifaParams<T>, LatentMoments<T>, Vec<f64>, usize, bool)> {
        let mut current = self.evaluate(&params)?;
        let mut trace = vec![current.loglik.to_f64_lossy()];
        let mut iterations = 0;
        let mut converged = false;
        let drop_tol = match self.options.mode {
            Mode::General => GENERAL_DROP_WARNING,
            Mode::Orthogonal => ORTHOGONAL_DROP_WARNING,
        };
        while iterations < self.options.max_iters {
            let next = self.mstep(&params, &current.moments)?;
            let eval = self.evaluate(&next)?;
            iterations += 1;
            let old = current.loglik.to_f64_lossy();
            let new = eval.loglik.to_f64_lossy();
            trace.push(new);
            if !new.is_finite() {
                return Err(SifaError::Singular(format!(
                    "log-likelihood became non-finite at iteration {iterations}"
                )));
            }
            if new < old - drop_tol * old.abs() {
                self.note(format!(
                    "log-likelihood decreased at iteration {iterations} ({old} -> {new})"
                ));
            }
            params = next;
            current = eval;
            if (new - old).abs() <= self.options.tol * old.abs() {
                converged = true;
                break;
            }
        }
        Ok((params, current.moments, trace, iterations, converged))
    }
}

/// Fits the model by EM. Without covariates every covariate function is
/// fixed at zero (the JIVE configuration). Non-convergence is reported via
/// `converged = false`, never as an error.
pub fn fit<T: Real>(
    data: &MultiViewDataset<T>,
    ranks: &RankSet,
    options: &FitOptions,
) -> Result<FitReport<T>> {
    let start = Instant::now();
    options.validate()?;
    if let Some(v) = validate_dataset(data).first() {
        return Err(SifaError::InvalidData(v.to_string()));
    }
    ranks.validate(&data.dims(), data.n())?;
    let params = init_params(data, ranks, options)?;
    fit_from(data, params, options, start)
}

/// Runs EM from the given starting parameters.
pub fn fit_with_start<T: Real>(
    data: &MultiViewDataset<T>,
    start_params: SifaParams<T>,
    options: &FitOptions,
) -> Result<FitReport<T>> {
    let start = Instant::now();
    options.validate()?;
    if let Some(v) = validate_dataset(data).first() {
        return Err(SifaError::InvalidData(v.to_string()));
    }
    start_params.check_shapes()?;
    start_params.ranks().validate(&data.dims(), data.n())?;
    fit_from(data, start_params, options, start)
}

fn fit_from<T: Real>(
    data: &MultiViewDataset<T>,
    params: SifaParams<T>,
    options: &FitOptions,
    start: Instant,
) -> Result<FitReport<T>> {
    let ranks = params.ranks();
    let regressor = match &data.covariates {
        Some(x) if x.ncols() > 0 => Some(Regressor::new(
            options.regression,
            x,
            options.lasso.clone(),
            options.bandwidth,
        )?),
        _ => None,
    };
    let configuration = if regressor.is_some() {
        Configuration::Supervised
    } else {
        Configuration::Jive
    };
    let mut driver = Driver {
        data,
        ystar: data.stacked(),
        ranks,
        options,
        regressor,
        warnings: Vec::new(),
    };
    if let Some(ridge) = driver.regressor.as_ref().and_then(|r| r.ridge()) {
        if ridge > T::zero() {
            driver.note(format!("near-singular XᵀX: ridge jitter {ridge} added"));
        }
    }
    let (mut params, mut moments, trace, iterations, converged) = driver.run(params)?;
    if !converged {
        driver.note(format!("no convergence within {iterations} iterations"));
    }
    let signs = params.sign_flips();
    params.apply_signs(&signs);
    moments.apply_signs(&signs);
    let structure = if options.structure {
        Some(decompose_structure(&params, &moments, data)?)
    } else {
        None
    };
    Ok(FitReport {
        regression: driver.regressor.as_ref().map(|r| r.family()),
        params,
        loglik_trace: trace,
        iterations,
        converged,
        elapsed: start.elapsed().as_secs_f64(),
        mode: options.mode,
        configuration,
        moments,
        structure,
        warnings: driver.warnings,
    })
}

/// Splits every view into `f0(X)V0kᵀ`, `f_k(X)V_kᵀ`, `F̂0V0kᵀ`, `F̂_kV_kᵀ`
/// and the residual, with `F̂ = EU − f(X)`. The parts sum to `Y_k`.
pub fn decompose_structure<T: Real>(
    params: &SifaParams<T>,
    moments: &LatentMoments<T>,
    data: &MultiViewDataset<T>,
) -> Result<Vec<StructureParts<T>>> {
    let n = data.n();
    let ranks = params.ranks();
    let means = params.factor_means(data.covariates.as_ref(), n)?;
    if moments.eu.shape() != means.shape() {
        return Err(SifaError::DimensionMismatch(
            "moments do not match the parameters".into(),
        ));
    }
    let random = &moments.eu - &means;
    let r0 = ranks.r0;
    Ok((0..data.num_views())
        .map(|k| {
            let yk = data.view(k);
            let off = ranks.offset(k + 1);
            let rk = ranks.r[k];
            let v0k = &params.v0[k];
            let vk = &params.v[k];
            let jd = means.columns(0, r0) * v0k.transpose();
            let id = means.columns(off, rk) * vk.transpose();
            let jr = random.columns(0, r0) * v0k.transpose();
            let ir = random.columns(off, rk) * vk.transpose();
            let residual = yk - &jd - &id - &jr - &ir;
            StructureParts {
                joint_deterministic: jd,
                individual_deterministic: id,
                joint_random: jr,
                individual_random: ir,
                residual,
            }
        })
        .collect())
}
