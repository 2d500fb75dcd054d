use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure surfaced by the library.
///
/// The discriminants returned by [`Error::code`] are stable and are what the
/// C interface hands back to callers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic bytes: expected \"MTF1\", found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("truncated tensor file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("label parse error at line {line}: {content:?}")]
    LabelParse { line: usize, content: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("eigen-solver failure: {0}")]
    Eigen(String),
    #[error("empty cluster after k-means restarts; try a smaller k (k = {k})")]
    EmptyCluster { k: usize },
    #[error("registration diverged: max |v| = {max_norm} exceeds grid extent {extent}")]
    Diverged { max_norm: f64, extent: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("model selection failed for k = {k}, run {run}: {reason}")]
    SelectionRun { k: usize, run: usize, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable numeric code; 0 is reserved for success.
    pub fn code(&self) -> i32 {
        match self {
            Error::Io { .. } => 1,
            Error::BadMagic { .. } => 2,
            Error::Truncated { .. } => 3,
            Error::DimMismatch(_) => 4,
            Error::InvalidTensor(_) => 5,
            Error::NonFinite { .. } => 6,
            Error::LabelParse { .. } => 7,
            Error::InvalidArgument(_) => 8,
            Error::NegativeEntry { .. } => 9,
            Error::Eigen(_) => 10,
            Error::EmptyCluster { .. } => 11,
            Error::Diverged { .. } => 12,
            Error::Config(_) => 13,
            Error::SelectionRun { .. } => 14,
        }
    }

    /// Usage/config problems map to exit code 2, everything else to 1.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidArgument(_) | Error::LabelParse { .. }
        )
    }
}
