use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("spaces are not nested: {0}")]
    NotNested(String),

    #[error("innovation covariance is numerically singular (min eigenvalue {min_eigenvalue:e})")]
    SingularInnovation { min_eigenvalue: f64 },

    #[error("Riccati iteration did not converge after {iterations} iterations (last step {last_step:e})")]
    RiccatiDivergence { iterations: usize, last_step: f64 },

    #[error("filter is unstable: spectral radius of the closed-loop transition is {spectral_radius}")]
    UnstableFilter { spectral_radius: f64 },

    #[error("no feasible point found from {starts} starts")]
    NoFeasiblePoint { starts: usize },

    #[error("finite-difference stencil stays in the penalty region at coordinate {coordinate}")]
    StencilInfeasible { coordinate: usize },

    #[error("Hessian estimate is singular (condition number {condition:e})")]
    SingularHessian { condition: f64 },

    #[error("expected {expected} strictly positive eigenvalues, found {found} (spectrum {spectrum:?})")]
    RankAnomaly {
        expected: usize,
        found: usize,
        spectrum: Vec<f64>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed data at line {line}: {reason}")]
    MalformedData { line: usize, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::InvalidParameter(_)
            | Error::NotNested(_)
            | Error::Unsupported(_)
            | Error::MalformedData { .. }
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Io { .. } => 2,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
