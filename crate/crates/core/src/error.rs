use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    Shape { op: &'static str, detail: String },
    InvalidArgument(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, detail } => write!(f, "{op}: dimension mismatch: {detail}"),
            Error::InvalidArgument(msg) => f.write_str(msg),
        }
    }
}

impl core::error::Error for Error {}
