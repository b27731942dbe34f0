use thiserror::Error;

/// Errors produced anywhere in the compile/execute pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("bounds error: {0}")]
    Bounds(String),

    #[error("malformed input on line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(
        "closure violation: worker {color} touched {tensor}{region}[{index}] outside its sub-region"
    )]
    Closure {
        tensor: String,
        region: String,
        index: usize,
        color: usize,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            column,
            message: message.into(),
        }
    }

    pub(crate) fn validation(message: impl Into<String>) -> Self {
        Error::Validation(message.into())
    }

    /// True for user-facing input problems (bad syntax, inconsistent programs),
    /// false for failures that happen while executing a valid program.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::Shape(_)
                | Error::Bounds(_)
                | Error::Malformed { .. }
                | Error::Unsupported(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
