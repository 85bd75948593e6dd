use std::path::PathBuf;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("position ({x:.3}, {y:.3}) outside the allowed area")]
    OutOfBounds { x: f64, y: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid camera pose: {0}")]
    InvalidPose(String),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("spawn spec {spec:?}: {reason} (at {token:?})")]
    SpawnSpec {
        spec: String,
        token: String,
        reason: String,
    },
    #[error("unknown object class {0:?}")]
    UnknownClass(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("alignment impossible: {uncovered_mass:.4} of target mass has no source coverage")]
    AlignmentImpossible { uncovered_mass: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Stream(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("png encoding: {0}")]
    Png(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
