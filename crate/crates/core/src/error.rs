use thiserror::Error;

/// Errors shared by the field arithmetic, sharing, and protocol layers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("evaluation points must be pairwise distinct")]
    DuplicateEvalPoint,
    #[error("zero is not a valid evaluation point")]
    ZeroEvalPoint,
    #[error("need at least {need} points, got {got}")]
    InsufficientPoints { got: usize, need: usize },
    #[error("no degree-{degree} polynomial is consistent within {max_errors} errors")]
    DecodeFailure { degree: usize, max_errors: usize },
    #[error("threshold {t} must be below the share count {ell}")]
    InvalidThreshold { t: usize, ell: usize },
    #[error("need at least {need} shares to reconstruct, got {got}")]
    InsufficientShares { got: usize, need: usize },
    #[error("corrupted shares exceed the decodable bound {max_errors} (degree {degree}, {responders} responders)")]
    ByzantineOverload {
        degree: usize,
        responders: usize,
        max_errors: usize,
    },
    #[error("need more than {need} responses, got {got}")]
    InsufficientResponses { got: usize, need: usize },
    #[error("all {expected} responses are required, got {got}")]
    IncompleteResponses { got: usize, expected: usize },
    #[error("query key falls outside the configured grid coverage")]
    OutOfCoverage,
    #[error("row index {index} outside 1..={rows}")]
    RowIndexOutOfRange { index: u64, rows: u64 },
    #[error("{context}: expected length {expected}, got {got}")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid protocol parameters: {0}")]
    InvalidParams(String),
    #[error("malformed message: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
