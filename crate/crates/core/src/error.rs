use std::io;

use thiserror::Error;

/// Errors produced by the filter core, the maplet layer and the applications
/// built on top of them.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    /// The filter is at its maximum load factor; the caller must resize.
    #[error("filter capacity exceeded")]
    CapacityExceeded,
    /// Resizing would leave zero remainder bits.
    #[error("cannot resize further: remainder bits exhausted")]
    RemainderExhausted,
    #[error("no matching instance found")]
    NotFound,
    /// A merged-slot filter holds the same fingerprint more than once.
    #[error("fingerprint stored {0} times in merged-slot mode")]
    MultipleInstances(usize),
    #[error("incompatible parameters: {0}")]
    IncompatibleParams(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("value does not fit in the configured value bits")]
    ValueOverflow,
    #[error("value underflow: cancellation would leave the codec domain")]
    Underflow,
    #[error("deletion is not supported for this operator in merged-slot mode")]
    UnsupportedDelete,
    #[error("operation not supported by this operator")]
    Unsupported,
    #[error("value outside codec domain: {0}")]
    Domain(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("truncated stream")]
    TruncatedStream,
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("too many experiments: {count} exceeds bitset width {width}")]
    TooManyExperiments { count: usize, width: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
