use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("payload underflow: requested {requested} bits, only {available} available")]
    PayloadUnderflow { requested: usize, available: usize },

    #[error("bad magic")]
    BadMagic,

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("dimension overflow")]
    DimensionOverflow,

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("missing codebook")]
    MissingCodebook,

    #[error("invalid key: {0}")]
    InvalidKey(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("integration diverged at step {step} (sigma = {sigma})")]
    Diverged { step: usize, sigma: f64 },

    #[error("tensor too small: {0} elements, need at least 100")]
    TooSmall(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("expected 3-channel image, got {0} channels")]
    ExpectedRgb(usize),

    #[error("image: {0}")]
    Image(String),

    #[error(transparent)]
    Bridge(#[from] crate::bridge::BridgeError),

    #[error(transparent)]
    Io(#[from] io::Error),
}
