use alloc::string::String;
use core::fmt;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a documented precondition.
    Argument(String),
    /// A value lies outside the domain on which a bound or formula is defined.
    Domain { what: &'static str, value: f64, limit: f64 },
    /// A computation would exceed its evaluation budget.
    Resource(String),
    /// A numerical solve lost accuracy beyond its tolerance.
    Resolution(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Argument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Domain { what, value, limit } => {
                write!(f, "{what} = {value} is outside the admissible domain (boundary {limit})")
            }
            Error::Resource(msg) => write!(f, "resource limit: {msg}"),
            Error::Resolution(msg) => write!(f, "insufficient resolution: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
