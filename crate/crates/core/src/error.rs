use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: left {left:?}, right {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular value iteration did not converge after {sweeps} sweeps")]
    NonConvergence { sweeps: usize },

    #[error("no rows survive selection (tau = {tau}, band = {band})")]
    NoRowsSurvived { tau: f64, band: String },

    #[error("non-finite value encountered in {context} at iteration {iteration}")]
    NonFinite { context: String, iteration: usize },

    #[error("unsupported container version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("unexpected container format {0:?}")]
    UnknownFormat(String),

    #[error("checksum mismatch for array file {}", file.display())]
    ChecksumMismatch { file: PathBuf },

    #[error("array {name:?} missing from container")]
    MissingArray { name: String },

    #[error("array {name:?} has {found} values but shape implies {expected}")]
    ShapeMismatch {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest parse error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
