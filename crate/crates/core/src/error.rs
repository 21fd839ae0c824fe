use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("arity mismatch: expected {expected}, got {found}")]
    ArityMismatch { expected: usize, found: usize },

    #[error("coordinate {index} out of range for arity {arity}")]
    CoordinateOutOfRange { index: usize, arity: usize },

    #[error("coordinate {0} assigned twice")]
    DuplicateAssignment(usize),

    #[error("arity {n} exceeds the enumeration cap {cap}")]
    EnumerationCap { n: usize, cap: usize },

    #[error("arity {0} is not supported (at most 64 variables)")]
    ArityOverflow(usize),

    #[error("invalid function: {0}")]
    InvalidFunction(String),

    #[error("malformed decision tree: {0}")]
    MalformedTree(String),

    #[error("decision tree does not compute the reference function (distance {0})")]
    TreeMismatch(f64),

    #[error("pruning contract violated: {0}")]
    PruningContract(String),

    #[error("invalid cost vector: {0}")]
    InvalidCosts(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step limit of {0} invest steps exceeded")]
    StepLimit(u64),

    #[error("session used after its run halted")]
    SessionClosed,

    #[error("exact evaluation requires a deterministic strategy, got {0}")]
    Randomized(String),

    #[error("no computable influence for the restricted function: {0}")]
    NoInfluencePath(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
