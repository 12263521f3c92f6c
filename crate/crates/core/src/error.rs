use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("training failed: {0}")]
    Train(String),
    #[error("failed to spawn black-box process: {0}")]
    Spawn(String),
    #[error("black-box protocol violation: {0}")]
    Protocol(String),
    #[error("black-box did not reply within {0:?}")]
    Timeout(std::time::Duration),
    #[error("black-box error: {0}")]
    BlackBox(String),
    #[error("normal matrix is singular")]
    SingularSystem,
    #[error("inner solver diverged for player {player}")]
    InnerDivergence { player: usize },
    #[error("all per-environment coefficients are zero; no l-infinity bound can be derived")]
    DegenerateGamma,
    #[error("class {0} has a constant mean vector; correlation undefined")]
    DegenerateClass(usize),
    #[error("paired differences have zero variance")]
    DegenerateVariance,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
