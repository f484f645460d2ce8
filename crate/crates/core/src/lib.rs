//! Multi-server private information retrieval for spectrum availability
//! databases.
//!
//! A client retrieves one record, keyed by (location, channel, timeslot),
//! from a set of replicated, partitioned, or secret-shared database servers
//! without any bounded coalition of servers learning which record was asked
//! for. Four protocols cover the efficiency/robustness spectrum:
//!
//! * [`chor`] - XOR queries over replicas; cheapest, private against any
//!   l-1 colluding servers, no tolerance for missing or corrupt answers.
//! * [`goldberg`] - Shamir-shared queries over GF(2^8); t-private, recovers
//!   from any k > t responses and identifies byzantine servers.
//! * [`batch`] - stacked Goldberg queries answered with one Strassen
//!   matrix product, for mobile clients fetching several cells at once.
//! * [`raid`] - partitioned chunks with redundancy pi; trades collusion
//!   resistance for a pi/l fraction of per-server work and seed-compressed
//!   uploads.
//!
//! [`tau`] additionally secret-shares the database content itself so that
//! coalitions of up to tau servers learn nothing about the records they
//! store.
//!
//! With the default `parallel` feature the server-side scan kernels split
//! across threads; disabling it yields the sequential fallback used by the
//! benchmark comparisons.

pub mod batch;
pub mod bits;
pub mod chor;
pub mod error;
pub mod gf256;
pub mod goldberg;
pub mod params;
pub mod raid;
pub mod sharing;
pub mod spectrumdb;
pub mod tau;
pub mod wire;

pub use error::{Error, Result};
pub use gf256::Gf256;
pub use params::{ProtocolId, ProtocolParams};
