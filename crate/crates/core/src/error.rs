use std::path::PathBuf;

use thiserror::Error;

use crate::grid::ScalarField;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate pair: x0 and y0 coincide")]
    DegeneratePair,

    #[error("grid coverage: {0}")]
    GridCoverage(String),

    #[error("index {0} has no full stencil")]
    BoundaryIndex(usize),

    #[error("phase mismatch: {0}")]
    PhaseMismatch(String),

    #[error("inconsistent phase: {0}")]
    InconsistentPhase(String),

    #[error("jet fit failed at index {index}: {reason}")]
    JetFit { index: usize, reason: String },

    #[error("free boundary condition needs a nonzero jet gradient")]
    ZeroXi,

    #[error("ray leaves the grid at t = {0}")]
    OutOfDomainRay(f64),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error(
        "solver did not converge after {iterations} iterations \
         (last update {last_update:.3e}, residual {residual:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        last_update: f64,
        residual: f64,
        last_iterate: Box<ScalarField>,
    },

    #[error("malformed grid file: {0}")]
    GridFormat(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
