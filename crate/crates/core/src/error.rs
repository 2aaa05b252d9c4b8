use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed generator `{text}`: {reason}")]
    MalformedGenerator { text: String, reason: String },

    #[error("unsupported generator: {0}")]
    Unsupported(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("no consistent tailbiting start state for this input")]
    TailbitingInconsistent,

    #[error("invalid stream mapping: {0}")]
    InvalidMapping(String),

    #[error("variable sets differ: {0:?} vs {1:?}")]
    VariableMismatch(Vec<String>, Vec<String>),

    #[error("problem too large: {0}")]
    SizeGuard(String),

    #[error("insufficient caps: {0}")]
    CapInsufficient(String),

    #[error("coverage gap: {0}")]
    CoverageGap(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("boundary violation: {0}")]
    BoundaryViolation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
