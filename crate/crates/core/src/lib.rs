//! Randomized Nyström preconditioning for regularized psd systems
//! `(A + μI)x = b`.
//!
//! The crate is organized bottom-up:
//!
//! - [`operator`]: matvec-only operators (dense, regularized, ridge Gram,
//!   Gaussian kernel, synthetic spectra).
//! - [`nystrom`]: stable randomized Nyström approximation, column
//!   sampling, sketch extension and the definitional oracle.
//! - [`precond`]: the Nyström preconditioner, the optimal low-rank
//!   preconditioner, Woodbury inversion and sketch-and-solve.
//! - [`solvers`]: CG, Nyström PCG and block PCG.
//! - [`adaptive`]: power-method error estimates and sketch-size doubling.
//! - [`diagnostics`]: effective dimension, condition-number bounds and
//!   dense oracles.
//!
//! Randomness is always passed in as an explicit generator.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod nystrom;
pub mod operator;
pub mod precond;
pub mod solvers;

pub use error::{Error, Result};
pub use nystrom::{NystromApproximation, SketchPair};
pub use operator::{LinearOperator, SpectrumProfile};
pub use precond::{NystromPreconditioner, Preconditioner};
pub use solvers::{SolveOptions, SolveReport, Tolerance};
