//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the estimators, solvers and samplers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("non-finite value at entry ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("shifted matrix is numerically singular (smallest eigenvalue {min_eig:.3e} <= {tol:.1e})")]
    SingularShift { min_eig: f64, tol: f64 },

    #[error("invalid covariance spec: {0}")]
    InvalidSpec(String),

    #[error("invalid augmentation scheme: {0}")]
    InvalidScheme(String),

    #[error("estimator denominator is degenerate ({0:.3e}); expected only when d >= n at small lambda")]
    DegenerateDenominator(f64),

    #[error("fixed-point solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("eta bound requires d < n - 1 (got d = {d}, n = {n})")]
    InvalidRegime { d: usize, n: usize },

    #[error("phi shift matrix is singular at lambda = {lambda:.3e} (smallest eigenvalue {min_eig:.3e}); lambda = 0 needs a strictly positive-definite Lambda_G")]
    SingularM { lambda: f64, min_eig: f64 },

    #[error("covariance must be strictly positive definite (smallest eigenvalue {0:.3e})")]
    SingularSigma(f64),

    #[error("mixture fit produced an empty component after {restarts} restarts")]
    DegenerateCluster { restarts: usize },

    #[error("{0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
