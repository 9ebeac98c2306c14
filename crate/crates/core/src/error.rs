use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or extents that cannot be combined.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A hyperparameter or argument outside its valid range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An API used out of order or on the wrong kind of value.
    #[error("contract error: {0}")]
    Contract(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// Several per-file dataset problems reported together.
    #[error("{} dataset error(s):\n  {}", .0.len(), .0.join("\n  "))]
    Dataset(Vec<String>),

    #[error("config error: {0}")]
    Config(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("config mismatch in {}: file was written for config {found:016x}, expected {expected:016x}", path.display())]
    ConfigMismatch {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("unsupported format version {found} in {} (this build reads version {supported})", path.display())]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        supported: u32,
    },

    #[error("corrupt file {}: {reason}", path.display())]
    Corrupt { path: PathBuf, reason: String },

    /// A training step produced a non-finite value.
    #[error("numerical error: {0}")]
    NonFinite(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
