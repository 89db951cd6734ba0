//! Crate-wide error type.
//!
//! Every fallible public operation returns [`DycpError`]. Variants are
//! grouped by what the caller can do about them: contract violations in
//! input data, cache file problems, and provider failures (split into
//! transport errors, which are retryable, and contract errors, which
//! are not).

use thiserror::Error;

/// Unified error for all dycp operations.
#[derive(Debug, Error)]
pub enum DycpError {
    /// An embedding had a different dimension than the one in effect.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An embedding component was NaN or infinite.
    #[error("non-finite embedding component at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    /// A cache file is structurally recognizable but not ours / not a
    /// version we speak (bad magic or version).
    #[error("cache format: {0}")]
    CacheFormat(String),

    /// A cache file matched magic and version but its contents do not
    /// add up (truncated rows, trailing bytes, size mismatch).
    #[error("cache corrupted: {0}")]
    CacheCorrupt(String),

    /// A dataset file failed to parse or violated the record schema.
    #[error("dataset: {0}")]
    Dataset(String),

    /// Invalid argument or request (bad turn index, unknown method,
    /// empty history where one is required, ...).
    #[error("validation: {0}")]
    Validation(String),

    /// The embedding provider answered, but with something unusable
    /// (wrong count, wrong dimension, non-finite values). Not retried.
    #[error("provider contract: {0}")]
    ProviderContract(String),

    /// The embedding provider could not be reached or kept failing
    /// after retries.
    #[error("provider transport: {0}")]
    ProviderTransport(String),

    /// A judge reply did not contain a parsable rating.
    #[error("rating parse: {0}")]
    RatingParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, DycpError>;
