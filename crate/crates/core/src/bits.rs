//! Packed bit-vectors in 64-bit lanes, the query representation for the
//! XOR-based protocols. Bit `i` selects database row `i + 1`.

use rand::RngCore;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedBits {
    lanes: Vec<u64>,
    len: usize,
}

impl PackedBits {
    pub fn zeros(len: usize) -> Self {
        PackedBits {
            lanes: vec![0; len.div_ceil(64)],
            len,
        }
    }

    /// Uniformly random bits from the caller's generator.
    pub fn random(len: usize, rng: &mut impl RngCore) -> Self {
        let mut bytes = vec![0u8; len.div_ceil(8)];
        rng.fill_bytes(&mut bytes);
        let mut v = Self::from_bytes(&bytes, len).expect("sized buffer");
        v.mask_tail();
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, idx: usize) -> bool {
        debug_assert!(idx < self.len);
        self.lanes[idx / 64] >> (idx % 64) & 1 != 0
    }

    #[inline]
    pub fn set(&mut self, idx: usize, value: bool) {
        debug_assert!(idx < self.len);
        let lane = &mut self.lanes[idx / 64];
        if value {
            *lane |= 1 << (idx % 64);
        } else {
            *lane &= !(1 << (idx % 64));
        }
    }

    pub fn flip(&mut self, idx: usize) {
        debug_assert!(idx < self.len);
        self.lanes[idx / 64] ^= 1 << (idx % 64);
    }

    pub fn xor_assign(&mut self, other: &PackedBits) -> Result<()> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                context: "bit-vector xor",
                expected: self.len,
                got: other.len,
            });
        }
        for (a, b) in self.lanes.iter_mut().zip(&other.lanes) {
            *a ^= b;
        }
        Ok(())
    }

    pub fn lanes(&self) -> &[u64] {
        &self.lanes
    }

    pub fn count_ones(&self) -> usize {
        self.lanes.iter().map(|l| l.count_ones() as usize).sum()
    }

    /// Little-endian byte serialization: bit `i` is byte `i / 8`, bit `i % 8`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(self.len.div_ceil(8));
        for lane in &self.lanes {
            bytes.extend_from_slice(&lane.to_le_bytes());
        }
        bytes.truncate(self.len.div_ceil(8));
        bytes
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::LengthMismatch {
                context: "packed bits",
                expected: len.div_ceil(8),
                got: bytes.len(),
            });
        }
        let mut lanes = vec![0u64; len.div_ceil(64)];
        for (i, &b) in bytes.iter().enumerate() {
            lanes[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        let mut v = PackedBits { lanes, len };
        v.mask_tail();
        Ok(v)
    }

    fn mask_tail(&mut self) {
        let tail = self.len % 64;
        if tail != 0 {
            if let Some(last) = self.lanes.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
    }
}

/// Test-friendly construction from a "1011" style string, leftmost bit first.
impl std::str::FromStr for PackedBits {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut v = PackedBits::zeros(s.len());
        for (i, c) in s.chars().enumerate() {
            match c {
                '1' => v.set(i, true),
                '0' => {}
                _ => return Err(Error::Malformed("bit string must be 0/1".into())),
            }
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn set_get_round_trip() {
        let mut v = PackedBits::zeros(130);
        v.set(0, true);
        v.set(64, true);
        v.set(129, true);
        assert!(v.get(0) && v.get(64) && v.get(129));
        assert!(!v.get(1) && !v.get(128));
        assert_eq!(v.count_ones(), 3);
    }

    #[test]
    fn byte_round_trip_preserves_bits() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for len in [1usize, 7, 8, 63, 64, 65, 1000] {
            let v = PackedBits::random(len, &mut rng);
            let back = PackedBits::from_bytes(&v.to_bytes(), len).unwrap();
            assert_eq!(v, back);
        }
    }

    #[test]
    fn parse_matches_order() {
        let v: PackedBits = "1011".parse().unwrap();
        assert!(v.get(0) && !v.get(1) && v.get(2) && v.get(3));
    }

    #[test]
    fn xor_length_checked() {
        let a = PackedBits::zeros(10);
        let mut b = PackedBits::zeros(12);
        assert!(b.xor_assign(&a).is_err());
    }
}
