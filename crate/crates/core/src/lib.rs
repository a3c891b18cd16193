//! Supervised integrated factor analysis for multi-view data with covariates.
//!
//! Each view is modelled as `Y_k = U0·V0kᵀ + U_k·V_kᵀ + E_k` with joint and
//! individual factors whose means are functions of the covariates. Fitting
//! is by EM, in a general mode and in an orthogonal mode with closed-form
//! loading updates.
//!
//! Everything is generic over an `f32`/`f64` scalar; the `*F64` aliases
//! below fix the common case.

// NaN must fail every positivity check, so `!(x > 0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod em;
pub mod error;
pub mod metrics;
pub mod numerics;
pub mod rank;
pub mod regression;
pub mod scalar;
pub mod simulate;
pub mod tolerances;
pub mod types;

pub use em::{decompose_structure, e_step, fit, fit_with_start, init_params, log_likelihood};
pub use error::{Result, SifaError};
pub use rank::{estimate_signal_rank, lcv, neighbours, two_step_ranks, LcvResult, TwoStepRanks};
pub use regression::{BandwidthPolicy, LassoOptions, RegressionFamily, RegressionFn};
pub use scalar::Real;
pub use simulate::{gen_setting, GroundTruth, Noise, Setting, SimSpec};
pub use types::{
    check_conditions, fix_signs, BlockFunctions, ConditionReport, Configuration, FitOptions,
    FitReport, InitMethod, LatentMoments, Mode, MultiViewDataset, RankSet, SifaParams,
    StructureParts, ViewMatrix,
};

pub type SifaParamsF64 = SifaParams<f64>;
pub type FitReportF64 = FitReport<f64>;
pub type MultiViewDatasetF64 = MultiViewDataset<f64>;
pub type LatentMomentsF64 = LatentMoments<f64>;
pub type GroundTruthF64 = GroundTruth<f64>;
