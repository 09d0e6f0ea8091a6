use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("index {index} out of range for dimension {bound}")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid matrix structure: {0}")]
    InvalidStructure(String),

    #[error("{routine} failed: {reason}")]
    Decomposition {
        routine: &'static str,
        reason: String,
    },

    #[error("matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: String },

    #[error(
        "subdomain {subdomain}: row {row} couples to column {col} outside the extended subdomain"
    )]
    ClosureViolation {
        subdomain: usize,
        row: usize,
        col: usize,
    },

    #[error("subdomain {subdomain}: local block row is zero, splitting is singular")]
    SingularSplitting { subdomain: usize },

    #[error("subdomain {subdomain}: {detail}")]
    SchurBreakdown { subdomain: usize, detail: String },

    #[error("operator is not symmetric: relative asymmetry {asymmetry:.3e} ({context})")]
    NotSymmetric { context: String, asymmetry: f64 },

    #[error("nested coarse solve did not converge: {iterations} iterations, relative residual {residual:.3e}")]
    InnerSolveDiverged { iterations: usize, residual: f64 },

    #[error("conjugate gradient detected indefiniteness at iteration {iteration} (p'Ap = {curvature:.3e})")]
    Indefinite { iteration: usize, curvature: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn decomposition(routine: &'static str, reason: impl ToString) -> Self {
        Error::Decomposition {
            routine,
            reason: reason.to_string(),
        }
    }
}
