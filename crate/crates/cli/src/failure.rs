use std::fmt;

use noisecoder::{BridgeError, Error};

/// Exit status plus a one-line reason, printed as `error[<kind>]: <message>`.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_CAPACITY: u8 = 2;
pub const EXIT_UNREACHABLE: u8 = 3;
pub const EXIT_COLLAPSE: u8 = 4;

impl Failure {
    pub fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Self { code, kind, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, "usage", message)
    }

    pub fn missing(message: impl Into<String>) -> Self {
        Self::new(EXIT_UNREACHABLE, "missing", message)
    }

    pub fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_line = self.message.replace(['\n', '\r'], " ");
        write!(f, "error[{}]: {one_line}", self.kind)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Capacity(_) | Error::PayloadUnderflow { .. } => Self::new(EXIT_CAPACITY, "capacity", message),
            Error::MissingCodebook | Error::InvalidKey(_) => Self::new(EXIT_CAPACITY, "key", message),
            Error::Bridge(b) => b.into(),
            Error::Io(_) => Self::missing(message),
            Error::Diverged { .. } => Self::new(EXIT_USAGE, "diverged", message),
            _ => Self::new(EXIT_USAGE, "invalid", message),
        }
    }
}

impl From<BridgeError> for Failure {
    fn from(e: BridgeError) -> Self {
        match e {
            BridgeError::BadEndpoint(_) => Self::usage(e.to_string()),
            _ => Self::new(EXIT_UNREACHABLE, "model", e.to_string()),
        }
    }
}
