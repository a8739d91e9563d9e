use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the crate.
///
/// The variants line up with the CLI exit-code contract: usage errors exit 1,
/// shape/data/format/I/O errors exit 2 and numeric failures exit 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor or layer shapes do not line up.
    #[error("shape error: {0}")]
    Shape(String),
    /// A non-finite value appeared where a finite one is required.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// The caller violated an API contract (bad argument, stale state).
    #[error("usage error: {0}")]
    Usage(String),
    /// Input data is malformed. Messages carry a line number or byte offset where one exists.
    #[error("data error: {0}")]
    Data(String),
    /// A binary model file is corrupt or of an unknown version.
    #[error("format error: {0}")]
    Format(String),
    #[error("I/O error on {}: {source}", path.display())]
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

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Shape(_) | Error::Data(_) | Error::Format(_) | Error::Io { .. } => 2,
            Error::Numeric(_) => 3,
        }
    }
}
