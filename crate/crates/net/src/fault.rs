//! Deterministic fault injection for robustness testing: response drops,
//! fixed added latency, and byzantine corruption, all driven by a seeded
//! generator so a failing run replays exactly.

use std::time::Duration;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ByzantineMode {
    #[default]
    None,
    /// XOR a keyed mask over the answer payload.
    FlipBytes,
    /// Replace the answer payload with pseudorandom bytes.
    RandomGarbage,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaultProfile {
    pub drop_probability: f64,
    pub added_latency: Duration,
    pub byzantine: ByzantineMode,
    pub seed: u64,
}

impl Default for FaultProfile {
    fn default() -> Self {
        FaultProfile {
            drop_probability: 0.0,
            added_latency: Duration::ZERO,
            byzantine: ByzantineMode::None,
            seed: 0,
        }
    }
}

impl FaultProfile {
    pub fn is_benign(&self) -> bool {
        self.drop_probability == 0.0
            && self.added_latency.is_zero()
            && self.byzantine == ByzantineMode::None
    }
}

/// Per-server injector; decisions are drawn in query-arrival order from the
/// profile seed.
#[derive(Debug)]
pub struct FaultInjector {
    profile: FaultProfile,
    rng: ChaCha20Rng,
}

impl FaultInjector {
    pub fn new(profile: FaultProfile) -> Self {
        FaultInjector {
            rng: ChaCha20Rng::seed_from_u64(profile.seed),
            profile,
        }
    }

    pub fn latency(&self) -> Duration {
        self.profile.added_latency
    }

    /// Whether to swallow the next response.
    pub fn should_drop(&mut self) -> bool {
        self.profile.drop_probability > 0.0 && self.rng.gen::<f64>() < self.profile.drop_probability
    }

    /// Applies byzantine corruption to the payload region of a response
    /// body (the trailing `payload_len` bytes), leaving the identity header
    /// intact so the response still parses and blame can be assigned.
    pub fn corrupt(&mut self, body: &mut [u8], payload_len: usize) {
        let start = body.len().saturating_sub(payload_len);
        match self.profile.byzantine {
            ByzantineMode::None => {}
            ByzantineMode::FlipBytes => {
                // Nonzero mask guarantees the payload actually changes.
                let mask = (self.rng.gen::<u8>() % 255) + 1;
                for b in body[start..].iter_mut() {
                    *b ^= mask;
                }
            }
            ByzantineMode::RandomGarbage => {
                self.rng.fill_bytes(&mut body[start..]);
            }
        }
    }

    pub fn is_byzantine(&self) -> bool {
        self.profile.byzantine != ByzantineMode::None
    }
}
