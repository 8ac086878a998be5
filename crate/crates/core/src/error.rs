//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter set violates one of its invariants.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    /// Malformed configuration, data file, or command-line input.
    #[error("configuration error: {0}")]
    Config(String),

    /// A linear or nonlinear solve failed beyond recovery.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A fitting stage failed; the pipeline stops with a partial report.
    #[error("pipeline failure in stage `{stage}`: {reason}")]
    Pipeline { stage: String, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam { field, reason: reason.into() }
    }

    /// Process exit code for the CLI: 0 ok, 2 input error, 3 pipeline
    /// failure, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParam { .. } | Error::Config(_) | Error::Io(_) => 2,
            Error::Pipeline { .. } => 3,
            Error::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
