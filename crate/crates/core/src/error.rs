use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no connected Erdős–Rényi graph with n={n}, p={p} after {attempts} draws")]
    ConnectivityFailure { n: usize, p: f64, attempts: usize },

    #[error("eigensolver did not reach relative tolerance {tol:e} within {max_iter} iterations")]
    ToleranceFailure { tol: f64, max_iter: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("node {node} holds no samples")]
    EmptyLocalDataset { node: usize },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("row {row}: label {label} outside [0, {classes})")]
    LabelOutOfRange { row: usize, label: String, classes: usize },

    #[error("non-finite state at iteration {t} (node {node})")]
    NonFiniteState { t: usize, node: usize },

    #[error("{method} failed at iteration {t}: {source}")]
    Run {
        method: String,
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("z-sequence needs the previous iterate for t >= 2")]
    MissingPrevious,

    #[error("history has no state snapshot for iteration {t}")]
    SnapshotMissing { t: usize },

    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Strips any [`Error::Run`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Run { source, .. } => source.root(),
            other => other,
        }
    }
}
