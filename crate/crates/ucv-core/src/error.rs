use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Lexical or syntax error with source position (1-based line/column).
    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    /// Semantically invalid input (arity mismatch, unknown element, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// An operation was asked to certify something outside its dialect.
    #[error("unsupported dialect: {0}")]
    UnsupportedDialect(String),

    /// A configurable budget (enumeration cap, retries, time) was exhausted.
    #[error("resource budget exceeded: {0}")]
    Resource(String),

    /// A pipeline stage could not be carried out on the given forest.
    #[error("construction error: {0}")]
    Construction(String),

    /// A stated precondition does not hold for the given arguments.
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
