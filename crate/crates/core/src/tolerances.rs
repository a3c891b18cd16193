//! Numerical tolerances used across the crate, kept in one place so tests
//! and the estimator agree on them.

/// Tolerance record. Values are `f64` and converted to the working scalar
/// at the point of use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Orthonormality of loadings and the orthogonal identifiability conditions.
    pub orthonormal: f64,
    /// Identities that hold exactly in exact arithmetic.
    pub exact: f64,
    /// Entries below this magnitude are treated as zero by the sign convention.
    pub sign_zero: f64,
    /// Relative singular-value cutoff used to declare rank deficiency.
    pub rank_relative: f64,
    /// Relative asymmetry accepted by the symmetric eigensolver.
    pub symmetry: f64,
    /// Floor applied to factor variances (diagonals of Sigma).
    pub factor_variance_floor: f64,
    /// Floor applied to the noise variances.
    pub noise_variance_floor: f64,
    /// Relative jitter added to singular Gram matrices and Procrustes inputs.
    pub jitter: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    orthonormal: 1e-8,
    exact: 1e-10,
    sign_zero: 1e-12,
    rank_relative: 1e-12,
    symmetry: 1e-8,
    factor_variance_floor: 1e-8,
    noise_variance_floor: 1e-12,
    jitter: 1e-8,
};
