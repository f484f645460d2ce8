//! Global protocol parameters and their validity constraints.

use crate::error::{Error, Result};

/// Wire identifiers for the retrieval protocols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ProtocolId {
    Chor = 1,
    Goldberg = 2,
    Batch = 3,
    Raid = 4,
}

impl ProtocolId {
    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            1 => Ok(ProtocolId::Chor),
            2 => Ok(ProtocolId::Goldberg),
            3 => Ok(ProtocolId::Batch),
            4 => Ok(ProtocolId::Raid),
            other => Err(Error::Malformed(format!("unknown protocol id {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProtocolId::Chor => "chor",
            ProtocolId::Goldberg => "goldberg",
            ProtocolId::Batch => "batch",
            ProtocolId::Raid => "raid",
        }
    }

    /// The privacy guarantee as reported in benchmark output.
    pub fn privacy_label(self, p: &ProtocolParams) -> String {
        match self {
            ProtocolId::Chor => format!("({}-1)-private", p.ell),
            ProtocolId::Goldberg | ProtocolId::Batch => {
                if p.tau > 0 {
                    format!("{}-private, {}-independent", p.t, p.tau)
                } else {
                    format!("{}-private", p.t)
                }
            }
            ProtocolId::Raid => format!("({}-1)-private", p.pi),
        }
    }
}

impl std::str::FromStr for ProtocolId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "chor" => Ok(ProtocolId::Chor),
            "goldberg" | "gold" => Ok(ProtocolId::Goldberg),
            "batch" => Ok(ProtocolId::Batch),
            "raid" => Ok(ProtocolId::Raid),
            other => Err(Error::Malformed(format!("unknown protocol \"{other}\""))),
        }
    }
}

/// The full parameter tuple; individual protocols use the subset that
/// applies to them and validate it before any bytes leave the client.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolParams {
    /// Number of servers.
    pub ell: usize,
    /// Query privacy threshold (Goldberg family).
    pub t: usize,
    /// Response quorum the client waits for (Goldberg family).
    pub k: usize,
    /// Database-content privacy threshold (shared-database mode).
    pub tau: usize,
    /// Chunk redundancy (partitioned mode).
    pub pi: usize,
    /// Word size in bits; fixed to 8.
    pub w: usize,
    /// Number of records.
    pub r: usize,
    /// Record size in bits.
    pub b_bits: usize,
}

impl ProtocolParams {
    pub fn new(ell: usize, r: usize, b_bytes: usize) -> Self {
        ProtocolParams {
            ell,
            t: 1,
            k: ell,
            tau: 0,
            pi: 2,
            w: 8,
            r,
            b_bits: b_bytes * 8,
        }
    }

    pub fn with_t(mut self, t: usize) -> Self {
        self.t = t;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_tau(mut self, tau: usize) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_pi(mut self, pi: usize) -> Self {
        self.pi = pi;
        self
    }

    /// Words per record.
    pub fn s(&self) -> usize {
        self.b_bits / self.w
    }

    pub fn b_bytes(&self) -> usize {
        self.b_bits / 8
    }

    /// Database size in bits.
    pub fn n_bits(&self) -> u128 {
        self.r as u128 * self.b_bits as u128
    }

    /// Checks the constraints of the given protocol.
    pub fn validate(&self, protocol: ProtocolId) -> Result<()> {
        if self.w != 8 {
            return Err(Error::InvalidParams(format!(
                "word size {} unsupported, only w = 8",
                self.w
            )));
        }
        if self.b_bits == 0 || self.b_bits % 8 != 0 {
            return Err(Error::InvalidParams(format!(
                "record size {} bits must be a positive multiple of 8",
                self.b_bits
            )));
        }
        if self.r == 0 {
            return Err(Error::InvalidParams("empty database".into()));
        }
        match protocol {
            ProtocolId::Chor => {
                if self.ell < 2 {
                    return Err(Error::InvalidParams(format!(
                        "chor needs at least 2 servers, got {}",
                        self.ell
                    )));
                }
            }
            ProtocolId::Goldberg | ProtocolId::Batch => {
                if self.ell < 2 || self.ell > 255 {
                    return Err(Error::InvalidParams(format!(
                        "server count {} outside 2..=255",
                        self.ell
                    )));
                }
                if self.t == 0 || self.t >= self.ell {
                    return Err(Error::InvalidParams(format!(
                        "privacy level t={} must satisfy 0 < t < {}",
                        self.t, self.ell
                    )));
                }
                // 0 < t <= t + tau < k <= ell
                if self.k <= self.t + self.tau || self.k > self.ell {
                    return Err(Error::InvalidParams(format!(
                        "quorum k={} must satisfy t+tau={} < k <= {}",
                        self.k,
                        self.t + self.tau,
                        self.ell
                    )));
                }
            }
            ProtocolId::Raid => {
                if self.pi < 2 || self.pi > self.ell {
                    return Err(Error::InvalidParams(format!(
                        "redundancy pi={} must satisfy 2 <= pi <= {}",
                        self.pi, self.ell
                    )));
                }
                if self.r % self.ell != 0 {
                    return Err(Error::InvalidParams(format!(
                        "row count {} must be divisible by the server count {}",
                        self.r, self.ell
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_constraint_chain() {
        // 0 < t <= t + tau < k <= ell
        let ok = ProtocolParams::new(6, 64, 16).with_t(2).with_tau(3).with_k(6);
        assert!(ok.validate(ProtocolId::Goldberg).is_ok());
        let bad = ProtocolParams::new(6, 64, 16).with_t(3).with_tau(3).with_k(6);
        assert!(bad.validate(ProtocolId::Goldberg).is_err());
    }

    #[test]
    fn raid_needs_divisible_rows() {
        let p = ProtocolParams::new(3, 100, 16).with_pi(2);
        assert!(p.validate(ProtocolId::Raid).is_err());
        let p = ProtocolParams::new(3, 99, 16).with_pi(2);
        assert!(p.validate(ProtocolId::Raid).is_ok());
        let p = ProtocolParams::new(3, 99, 16).with_pi(1);
        assert!(p.validate(ProtocolId::Raid).is_err());
    }

    #[test]
    fn chor_needs_two_servers() {
        assert!(ProtocolParams::new(1, 8, 16).validate(ProtocolId::Chor).is_err());
        assert!(ProtocolParams::new(2, 8, 16).validate(ProtocolId::Chor).is_ok());
    }
}
