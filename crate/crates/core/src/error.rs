use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside the domain of the operation.
    InvalidParameter { name: &'static str, reason: String },
    /// A hypothesis of the contraction/propagation-of-chaos bounds fails.
    Inadmissible(String),
    /// Non-finite values, failed quadrature, or a step-size blowup.
    Numerical(String),
    /// Arrays whose shapes do not line up.
    Shape(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter { name, reason } => {
                write!(f, "invalid parameter `{name}`: {reason}")
            }
            Error::Inadmissible(msg) => write!(f, "hypothesis violated: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
