//! Error taxonomy shared by the whole crate.
//!
//! Two classes matter to callers: ordinary argument/configuration mistakes,
//! and guard violations where a requested computation would exceed the
//! enumeration limits of the exact oracles or audits. The CLI maps the
//! former to exit code 2 and the latter to exit code 3.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter value is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A structural configuration is inconsistent (e.g. an even number of
    /// Count-Sketch rows, or a budget too small to split).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An operation was called before the object reached the required state.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// The requested computation exceeds a hard enumeration or table-size
    /// guard and will not be attempted.
    #[error("guard exceeded: {0}")]
    GuardExceeded(String),

    /// Input data cannot be used (e.g. nonpositive values in a log-log fit).
    #[error("data error: {0}")]
    Data(String),

    /// A serialized report could not be parsed back.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
