use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain mismatch: expected {expected}, found {found}")]
    DomainMismatch { expected: String, found: String },

    #[error("shape is undefined for a histogram with zero scale")]
    UndefinedShape,

    #[error("budget composition violated: fractions sum to {0} > 1")]
    CompositionViolation(f64),

    #[error("privacy budget exhausted: requested {requested}, remaining {remaining}")]
    BudgetExhausted { requested: f64, remaining: f64 },

    #[error("unsupported domain for {algorithm}: {reason}")]
    Unsupported { algorithm: String, reason: String },

    #[error("malformed tree: {0}")]
    MalformedTree(String),

    #[error("rank-deficient strategy: {0}")]
    RankDeficient(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
