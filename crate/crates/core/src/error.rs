use std::io;

use crate::gm::CryptoError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Crypto(#[from] CryptoError),

    #[error("i/o: {0}")]
    Io(#[from] io::Error),

    /// The peer closed the stream at a frame boundary.
    #[error("channel closed by peer")]
    Closed,

    #[error("malformed message: {0}")]
    Decode(String),

    #[error("protocol violation: {0}")]
    Violation(String),

    /// The peer sent SESSION_ABORT.
    #[error("session aborted by peer: {0}")]
    Aborted(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl Error {
    pub fn violation(msg: impl Into<String>) -> Self {
        Error::Violation(msg.into())
    }
}
