use thiserror::Error;

/// Errors raised by the predictor, the oracles and the generators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("alphabet size must be at least 2, got {0}")]
    AlphabetTooSmall(usize),

    #[error("symbol {symbol} out of range for alphabet of size {size}")]
    SymbolOutOfRange { symbol: usize, size: usize },

    #[error("point has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension must be at least 1")]
    ZeroDimension,

    #[error("invalid label prior: {0}")]
    InvalidPrior(String),

    #[error("no pending sample: process_features must precede observe_label")]
    NoPendingSample,

    #[error("a sample is already pending its label")]
    SamplePending,

    #[error("oracle refuses a subsequence of length {len} (limit {limit})")]
    OracleTooLarge { len: usize, limit: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("write failed: {0}")]
    Write(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Write(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
