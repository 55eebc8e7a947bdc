use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no connected graph after {attempts} attempts (n={n}, k={k}); k is likely too small")]
    ConnectivityRetries { n: usize, k: f64, attempts: u32 },

    #[error("node id {id} out of range for graph with {n} nodes")]
    InvalidNode { id: usize, n: usize },

    #[error("{path}:{line}: cannot parse `{token}` as a node id")]
    Parse { path: PathBuf, line: usize, token: String },

    #[error("edge list {0} contains no edges")]
    EmptyGraph(PathBuf),

    #[error("node {0} has degree 0; normalized coupling is undefined")]
    IsolatedNode(usize),

    #[error("non-finite state at t = {time}")]
    NonFinite { time: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate layer recurrence: {0}")]
    Degenerate(String),

    #[error("inconsistent layer parameters: {0}")]
    InconsistentLayers(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
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

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
