//! Crate-wide error type and result alias.

use std::fmt;

/// Errors produced by the public API.
///
/// The variants map onto failure classes rather than call sites: `Shape`
/// for dimension mismatches, `Contract` for violated preconditions,
/// `Numeric` for non-finite values or failed numeric gates, `Load` for
/// data/checkpoint ingestion problems and `Usage` for CLI/config errors.
#[derive(Debug)]
pub enum Error {
    Shape(String),
    Contract(String),
    Numeric(String),
    Load(String),
    Usage(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::Contract(msg) => write!(f, "contract error: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Load(msg) => write!(f, "load error: {msg}"),
            Error::Usage(msg) => write!(f, "usage error: {msg}"),
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn numeric(msg: impl Into<String>) -> Error {
    Error::Numeric(msg.into())
}

pub(crate) fn load(msg: impl Into<String>) -> Error {
    Error::Load(msg.into())
}

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}
