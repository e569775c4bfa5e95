use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Shapes or extents that cannot be combined.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A NaN or infinity appeared where a finite value is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Training produced a non-finite loss and was aborted.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// A binary file did not start with the expected magic bytes.
    #[error("bad magic bytes: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },

    /// A binary file ended before its declared payload was complete.
    #[error("truncated file: {0}")]
    Truncated(String),

    /// Declared extents whose product overflows or disagrees with the payload.
    #[error("shape overflow: {0}")]
    ShapeOverflow(String),

    /// Malformed textual content (manifest, checkpoint header, report file).
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
