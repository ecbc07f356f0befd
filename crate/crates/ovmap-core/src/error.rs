use std::path::PathBuf;

/// Crate-wide error type.
///
/// Variants map onto the CLI exit-code contract: `Io` is an I/O failure,
/// `Internal` is a broken invariant, everything else is input validation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file does not look like the format it claims to be (bad magic,
    /// unsupported version, unparseable JSON).
    #[error("format error: {0}")]
    Format(String),

    /// The file parsed but its payload is inconsistent with its header.
    #[error("corrupt data: {0}")]
    Corruption(String),

    /// Inputs violate a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Shapes of related buffers do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A bug: an internal invariant did not hold.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
