use thiserror::Error;

/// Errors produced by the core types and the bag/manifest stores.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A domain invariant was violated (bad shapes, duplicate ids, bad labels).
    #[error("validation: {0}")]
    Validation(String),
    /// The file is not a bag file or has an unsupported version.
    #[error("format: {0}")]
    Format(String),
    /// The file started out as a valid bag file but its payload is damaged.
    #[error("corruption: {0}")]
    Corruption(String),
    /// Underlying I/O failure.
    #[error("storage: {0}")]
    Storage(#[from] std::io::Error),
}
