//! Deployment layer for the retrieval protocols: a framed binary
//! request/response protocol over TCP, a server daemon serving one store,
//! a client engine that fans out to all servers concurrently, and
//! deterministic fault injection for robustness testing.
//!
//! The threat model is honest-but-curious or byzantine servers, not
//! network eavesdroppers; transport encryption is an orthogonal concern
//! for the operator.

pub mod client;
pub mod error;
pub mod fault;
pub mod frame;
pub mod server;
pub mod store;

pub use client::{
    fetch_rows, private_fetch, FetchOptions, FetchOutcome, LoopbackServer, ServerDescriptor,
    Transcript, Transport,
};
pub use error::{NetError, Result};
pub use fault::{ByzantineMode, FaultProfile};
pub use server::{serve, ServerConfig, ServerHandle};
pub use store::ServerStore;
