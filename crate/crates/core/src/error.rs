use std::path::PathBuf;

use crate::solver::NewtonReport;

/// Errors produced by mesh construction, assembly and the solvers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("saddle-point solve failed: {0}")]
    SolverBreakdown(String),

    #[error("damped Newton did not converge: {}", .0.reason)]
    NonConvergence(Box<NewtonReport>),

    #[error("unknown case `{name}` (available: {available})")]
    UnknownCase { name: String, available: String },

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
