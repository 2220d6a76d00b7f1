use alloc::string::String;
use core::fmt;

/// Errors raised by the tracking core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A parameter is outside its documented domain.
    Parameter(String),
    /// Malformed input text (replay files, fraction strings).
    Format { line: usize, reason: String },
    /// A caller broke an operation's precondition.
    Contract(String),
    /// A protocol handler observed a state its invariants rule out.
    Protocol(String),
    /// Invalid stream content, e.g. deleting an item that is not present.
    Input(String),
    /// A query outside the recorded range.
    OutOfRange { index: usize, len: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::Format { line, reason } => write!(f, "format error at line {line}: {reason}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Protocol(msg) => write!(f, "protocol state violation: {msg}"),
            Error::Input(msg) => write!(f, "invalid input: {msg}"),
            Error::OutOfRange { index, len } => {
                write!(f, "index {index} out of range (valid: 1..={len})")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

macro_rules! param_err {
    ($($arg:tt)*) => { $crate::error::Error::Parameter(alloc::format!($($arg)*)) };
}
pub(crate) use param_err;
