//! Crate-wide error type.

use std::fmt;

/// Error raised by library operations.
#[derive(Debug)]
pub enum Error {
    /// A caller-supplied argument is out of range or inconsistent.
    InvalidArgument(String),
    /// A numerical operation failed (singular system, condition cap
    /// exceeded, NaN in a recursion, ...).
    Numerical(String),
    /// A configured resource cap would be exceeded.
    ResourceLimit(String),
    /// A text input (CIR file, config file, CLI grid) could not be parsed.
    Parse(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical error: {msg}"),
            Error::ResourceLimit(msg) => write!(f, "resource limit: {msg}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
