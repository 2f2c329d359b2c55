//! Remote denoiser evaluation over a byte stream.
//!
//! Endpoints are `cmd:<shell command>` (frames over the child's stdin and
//! stdout) or `tcp:<host>:<port>`.

mod client;
mod frame;
mod server;

use std::io;

use thiserror::Error;

pub use client::{BridgeConfig, BridgeModel, Endpoint, Session, DEFAULT_TIMEOUT, ENDPOINT_ENV};
pub use frame::{read_header, read_payload, Frame, FrameHeader, Op, MAX_HEADER_BYTES, PROTOCOL_VERSION};
pub use server::{serve_connection, serve_tcp, spawn_tcp_server, IdentityModel};

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("bridge: connection lost")]
    ConnectionLost,

    #[error("bridge: timeout after {0:?}")]
    Timeout(std::time::Duration),

    #[error("bridge: malformed frame: {0}")]
    Malformed(String),

    #[error("bridge: non-finite payload")]
    NonFinite,

    #[error("bridge: unsupported protocol version {0:?}")]
    UnsupportedProtocol(String),

    #[error("bridge: shape mismatch: client {client:?}, server {server:?}")]
    ShapeMismatch { client: Vec<usize>, server: Vec<usize> },

    #[error("bridge: protocol violation: {0}")]
    Protocol(String),

    #[error("bridge: server error: {0}")]
    Server(String),

    #[error("bridge: bad endpoint {0:?}; expected cmd:<command> or tcp:<host>:<port>")]
    BadEndpoint(String),

    #[error("bridge: transport failure: {0}")]
    Transport(io::Error),
}

impl BridgeError {
    /// Stream errors that mean the peer went away map to `ConnectionLost`.
    pub fn from_io(e: io::Error) -> Self {
        use io::ErrorKind::*;
        match e.kind() {
            UnexpectedEof | BrokenPipe | ConnectionReset | ConnectionAborted | NotConnected => Self::ConnectionLost,
            _ => Self::Transport(e),
        }
    }

    /// Stable numeric code per failure class.
    pub fn code(&self) -> u8 {
        match self {
            Self::ConnectionLost => 1,
            Self::Timeout(_) => 2,
            Self::Malformed(_) => 3,
            Self::NonFinite => 4,
            Self::UnsupportedProtocol(_) => 5,
            Self::ShapeMismatch { .. } => 6,
            Self::Protocol(_) => 7,
            Self::Server(_) => 8,
            Self::BadEndpoint(_) => 9,
            Self::Transport(_) => 10,
        }
    }

    /// Whether a session that produced this error can still be reused.
    pub(crate) fn keeps_session(&self) -> bool {
        matches!(self, Self::Server(_))
    }
}
