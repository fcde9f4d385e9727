use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulation and estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("coefficient bound violated: value {value} at ({x}, {y}) is not strictly positive")]
    CoefficientBound { value: f64, x: f64, y: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations at t = {time} (residual trace: {trace:?})")]
    NonConvergence {
        iterations: usize,
        time: f64,
        trace: Vec<f64>,
    },

    #[error("singular operator: non-positive pivot {pivot} at row {row}")]
    SingularOperator { row: usize, pivot: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("probability {0} outside the open interval (0, 1)")]
    Domain(f64),

    #[error("sample {sample} (shift {shift:?}) failed: {source}")]
    Sample {
        sample: usize,
        shift: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergence { .. }
            | Error::SingularOperator { .. }
            | Error::Numeric(_)
            | Error::CoefficientBound { .. } => true,
            Error::Sample { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
