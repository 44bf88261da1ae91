//! Two-phase infinity-Laplacian free boundary problems on uniform grids:
//! a monotone solver, discrete viscosity checks, and a numerical version of
//! the doubling-of-variables Lipschitz certificate.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barrier;
pub mod cli;
pub mod doubling;
pub mod error;
pub mod grid;
pub mod lipschitz;
pub mod report;
pub mod solver;
pub mod viscosity;

pub use error::{Error, Result};
pub use grid::ScalarField;
