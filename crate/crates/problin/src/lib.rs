//! Matrix-free probabilistic linear solver.
//!
//! Solves `A x = b` for symmetric positive definite `A` by maintaining joint
//! Gaussian beliefs over the matrix, its inverse and the solution, updated
//! from matrix-vector product observations. The posterior quantifies the
//! numerical uncertainty left by finite computation; scalar degrees of
//! freedom on the unexplored subspaces can be calibrated from spectral prior
//! knowledge or from the Rayleigh quotients collected during the solve.
//!
//! Entry points:
//! - [`solver::solve`] — the main iteration.
//! - [`priors::PriorSpec`] — prior mean/covariance-class configuration.
//! - [`calibration::CalibrationMethod`] — uncertainty calibration schemes.
//! - [`problems`] — kernel Gram, random SPD, and Poisson test systems.
//! - [`cli`] — the `problin` command-line harness.

pub mod calibration;
pub mod cli;
pub mod dist;
pub mod error;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod priors;
pub mod problems;
pub mod solver;

#[doc(hidden)]
pub mod testutil;

pub use error::{Error, Result};
pub use linalg::LinearOperator;

/// Crate version string recorded in result records.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
