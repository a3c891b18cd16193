use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SifaError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("requested rank {rank} exceeds min({rows}, {cols})")]
    RankTooLarge { rank: usize, rows: usize, cols: usize },

    #[error("matrix is rank deficient (smallest/largest singular value {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("invalid ranks: {0}")]
    InvalidRanks(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("regression failed: {0}")]
    Regression(String),

    #[error("non-positive noise variance for view {view}")]
    NonPositiveNoise { view: usize },
}

pub type Result<T, E = SifaError> = std::result::Result<T, E>;
