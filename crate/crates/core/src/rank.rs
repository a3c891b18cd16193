//! Rank selection: variance-explained signal ranks, the two-step joint and
//! individual rank estimate, and likelihood cross-validation.

use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::em::{fit, log_likelihood};
use crate::error::{Result, SifaError};
use crate::numerics::{center_columns, singular_values};
use crate::scalar::Real;
use crate::types::{FitOptions, MultiViewDataset, RankSet};

/// Smallest r whose leading r singular values carry at least `threshold`
/// of the centred matrix's total squared singular values.
pub fn estimate_signal_rank<T: Real>(y: &DMatrix<T>, threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(SifaError::InvalidOption(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let (centered, _) = center_columns(y);
    let d2: Vec<f64> = singular_values(&centered)
        .iter()
        .map(|d| d.to_f64_lossy().powi(2))
        .collect();
    let total: f64 = d2.iter().sum();
    if !(total > 0.0) {
        return Ok(0);
    }
    let mut acc = 0.0;
    for (i, v) in d2.iter().enumerate() {
        acc += v;
        if acc >= threshold * total {
            return Ok(i + 1);
        }
    }
    Ok(d2.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepRanks {
    pub ranks: RankSet,
    /// `(Σ r_k★ − r★_total)/(K − 1)` before rounding.
    pub r0_raw: f64,
    pub r0_clamped: bool,
    /// Views (1-based) whose individual rank was clamped at zero.
    pub clamped_views: Vec<usize>,
}

/// Joint and individual ranks from the concatenated signal rank and the
/// per-view signal ranks: `r0 = (Σ r_k★ − r★_total)/(K − 1)` rounded to
/// the nearest non-negative integer, `r_k = max(r_k★ − r0, 0)`.
pub fn two_step_ranks(r_total: usize, r_star: &[usize]) -> Result<TwoStepRanks> {
    let k = r_star.len();
    if k < 2 {
        return Err(SifaError::InvalidRanks("two-step estimation needs K ≥ 2".into()));
    }
    let sum: usize = r_star.iter().sum();
    let raw = (sum as f64 - r_total as f64) / (k - 1) as f64;
    let rounded = raw.round();
    let r0_clamped = rounded < 0.0;
    let r0 = rounded.max(0.0) as usize;
    let mut clamped_views = Vec::new();
    let r = r_star
        .iter()
        .enumerate()
        .map(|(i, &rs)| {
            if rs < r0 {
                clamped_views.push(i + 1);
            }
            rs.saturating_sub(r0)
        })
        .collect();
    Ok(TwoStepRanks {
        ranks: RankSet::new(r0, r),
        r0_raw: raw,
        r0_clamped,
        clamped_views,
    })
}

/// All rank sets within ±1 of `center` in every coordinate (non-negative).
pub fn neighbours(center: &RankSet) -> Vec<RankSet> {
    let coords: Vec<usize> = std::iter::once(center.r0).chain(center.r.iter().copied()).collect();
    let mut out: Vec<Vec<usize>> = vec![vec![]];
    for &c in &coords {
        let options: Vec<usize> = [c.checked_sub(1), Some(c), Some(c + 1)]
            .into_iter()
            .flatten()
            .collect();
        out = out
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |&o| {
                    let mut p = prefix.clone();
                    p.push(o);
                    p
                })
            })
            .collect();
    }
    out.into_iter()
        .map(|v| RankSet::new(v[0], v[1..].to_vec()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcvResult {
    pub candidates: Vec<RankSet>,
    /// `scores[c][f]`: negative held-out log-likelihood of candidate c on fold f.
    pub scores: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub best: usize,
    /// (candidate, fold) pairs whose fit stopped before converging.
    pub unconverged: Vec<(usize, usize)>,
}

impl LcvResult {
    pub fn selected(&self) -> &RankSet {
        &self.candidates[self.best]
    }
}

/// Seeded partition of `0..n` into `folds` groups: shuffle, then group i
/// takes every `folds`-th shuffled index starting at i.
pub fn fold_partition(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (0..folds)
        .map(|f| order.iter().skip(f).step_by(folds).copied().collect())
        .collect()
}

/// Index of the smallest mean; near-ties (1e-10 relative) go to the
/// candidate with the smaller total rank, then to the earlier one.
fn argmin_with_ties(means: &[f64], candidates: &[RankSet]) -> usize {
    let mut best = 0;
    for i in 1..means.len() {
        let (a, b) = (means[i], means[best]);
        let tie = (a - b).abs() <= 1e-10 * a.abs().max(b.abs());
        if (!tie && a < b) || (tie && candidates[i].total() < candidates[best].total()) {
            best = i;
        }
    }
    best
}

/// N-fold likelihood cross-validation over `candidates`. Every candidate
/// sees the same partition (seeded by `options.seed`); each fold's model is
/// fit on the other folds and scored by the negative log-likelihood of the
/// held-out rows, using the fitted covariate functions at the held-out X.
pub fn lcv<T: Real>(
    data: &MultiViewDataset<T>,
    candidates: &[RankSet],
    folds: usize,
    options: &FitOptions,
) -> Result<LcvResult> {
    if candidates.is_empty() {
        return Err(SifaError::InvalidRanks("no candidate rank sets".into()));
    }
    let n = data.n();
    if folds < 2 || n < 2 * folds {
        return Err(SifaError::InvalidOption(format!(
            "need folds ≥ 2 and n ≥ 2·folds (n = {n}, folds = {folds})"
        )));
    }
    let parts = fold_partition(n, folds, options.seed);
    let train_n = n - parts.iter().map(|p| p.len()).max().unwrap_or(0);
    for c in candidates {
        c.validate(&data.dims(), train_n)?;
    }
    let splits: Vec<(MultiViewDataset<T>, MultiViewDataset<T>)> = parts
        .iter()
        .map(|test| {
            let mut in_test = vec![false; n];
            for &i in test {
                in_test[i] = true;
            }
            let train: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
            (data.select_rows(&train), data.select_rows(test))
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|c| (0..folds).map(move |f| (c, f)))
        .collect();
    let results: Vec<(f64, bool)> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (train, test) = &splits[f];
            let report = fit(train, &candidates[c], options)?;
            let ll = log_likelihood(&report.params, test)?;
            Ok((-ll.to_f64_lossy(), report.converged))
        })
        .collect::<Result<_>>()?;

    let mut scores = vec![vec![0.0; folds]; candidates.len()];
    let mut unconverged = Vec::new();
    for (&(c, f), &(score, converged)) in jobs.iter().zip(&results) {
        scores[c][f] = score;
        if !converged {
            warn!("LCV fit for candidate {} on fold {f} did not converge", candidates[c]);
            unconverged.push((c, f));
        }
    }
    let means: Vec<f64> = scores
        .iter()
        .map(|s| s.iter().sum::<f64>() / folds as f64)
        .collect();
    let best = argmin_with_ties(&means, candidates);
    Ok(LcvResult {
        candidates: candidates.to_vec(),
        scores,
        means,
        best,
        unconverged,
    })
}
