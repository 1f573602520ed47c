//! Precision-matrix estimation with linear shrinkage and data augmentation.
//!
//! The crate is organised around two estimators of the inverse covariance
//! matrix of a zero-mean sample `X`:
//!
//! * the shrinkage (diagonal-loading) estimator `(C_X + lambda I)^{-1}`, and
//! * the augmented estimator `((n+m)^{-1}(X X' + G G') + lambda I)^{-1}`,
//!   where `G` holds artificial samples drawn by a data-augmentation scheme.
//!
//! For both, the crate provides data-only estimators of the quadratic error
//! `d^{-1} ||R - Sigma^{-1}||_F^2`, the fixed-point machinery behind their
//! deterministic equivalents, and a seeded Monte-Carlo harness that checks
//! every claim at desk scale.

pub mod augment;
pub mod augmented;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod shrinkage;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::{SampleMatrix, SpdMatrix};

/// Re-export of the dense matrix backend used throughout the public API.
pub use nalgebra;
