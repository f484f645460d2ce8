use thiserror::Error;

use crate::frame::ErrorCode;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] specpir_core::Error),
    #[error("store: {0}")]
    Store(#[from] specpir_core::spectrumdb::StoreError),
    #[error("server {server_id} reported {code:?}: {message}")]
    Server {
        server_id: u8,
        code: ErrorCode,
        message: String,
    },
    #[error("malformed frame: {0}")]
    BadFrame(String),
    #[error("frame of {got} bytes exceeds the {max} byte limit")]
    OversizedFrame { got: usize, max: usize },
    #[error("replica digests disagree; servers are not serving the same content")]
    DigestDisagreement,
    #[error("server {server_id} is not serving the expected content role")]
    WrongRole { server_id: u8 },
    #[error("quorum not reached: {got} of {need} responses, no answer from servers {missing:?}")]
    QuorumNotReached {
        got: usize,
        need: usize,
        missing: Vec<u8>,
    },
}

pub type Result<T> = std::result::Result<T, NetError>;
