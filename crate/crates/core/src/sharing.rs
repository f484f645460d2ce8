//! (t, l)-Shamir secret sharing of field-element vectors: share generation,
//! threshold reconstruction, and error-tolerant reconstruction.
//!
//! Randomness comes from a caller-supplied generator so that every protocol
//! transcript is reproducible under a fixed seed; production callers must
//! seed from a cryptographically secure source.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::gf256::{lagrange_at_zero, rs_decode, Gf256};

/// The agreed evaluation points, one per server. All nonzero and distinct.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalPointSet {
    alphas: Vec<Gf256>,
}

impl EvalPointSet {
    pub fn new(alphas: Vec<Gf256>) -> Result<Self> {
        if alphas.iter().any(|a| a.is_zero()) {
            return Err(Error::ZeroEvalPoint);
        }
        let mut seen = [false; 256];
        for a in &alphas {
            if seen[a.0 as usize] {
                return Err(Error::DuplicateEvalPoint);
            }
            seen[a.0 as usize] = true;
        }
        Ok(EvalPointSet { alphas })
    }

    /// The default handshake agreement: alpha_i = i for servers 1..=l.
    pub fn server_indices(ell: usize) -> Result<Self> {
        if ell == 0 || ell > 255 {
            return Err(Error::InvalidParams(format!(
                "server count {ell} outside 1..=255"
            )));
        }
        Self::new((1..=ell as u8).map(Gf256).collect())
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn alphas(&self) -> &[Gf256] {
        &self.alphas
    }

    pub fn get(&self, idx: usize) -> Gf256 {
        self.alphas[idx]
    }
}

/// One party's share of a secret vector: its evaluation point plus one
/// share per secret coordinate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareVector {
    pub alpha: Gf256,
    pub values: Vec<Gf256>,
}

/// Shares a secret vector coordinate-wise with independent uniformly random
/// degree-`t` polynomials. `t = 0` degenerates to plain replication.
pub fn share_vector(
    secret: &[Gf256],
    t: usize,
    points: &EvalPointSet,
    rng: &mut impl RngCore,
) -> Result<Vec<ShareVector>> {
    let ell = points.len();
    if t >= ell {
        return Err(Error::InvalidThreshold { t, ell });
    }
    let mut shares: Vec<ShareVector> = points
        .alphas()
        .iter()
        .map(|&alpha| ShareVector {
            alpha,
            values: Vec::with_capacity(secret.len()),
        })
        .collect();
    let mut coeffs = vec![Gf256::ZERO; t + 1];
    for &s in secret {
        coeffs[0] = s;
        for c in coeffs[1..].iter_mut() {
            *c = Gf256(random_byte(rng));
        }
        for share in shares.iter_mut() {
            share.values.push(horner(&coeffs, share.alpha));
        }
    }
    Ok(shares)
}

#[inline]
fn horner(coeffs: &[Gf256], x: Gf256) -> Gf256 {
    let mut acc = Gf256::ZERO;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

#[inline]
fn random_byte(rng: &mut impl RngCore) -> u8 {
    let mut b = [0u8; 1];
    rng.fill_bytes(&mut b);
    b[0]
}

fn check_share_shape(shares: &[ShareVector]) -> Result<usize> {
    let width = shares.first().map(|s| s.values.len()).unwrap_or(0);
    for s in shares {
        if s.values.len() != width {
            return Err(Error::LengthMismatch {
                context: "share vector width",
                expected: width,
                got: s.values.len(),
            });
        }
    }
    Ok(width)
}

/// Reconstructs the secret from at least `t + 1` consistent shares.
pub fn reconstruct(shares: &[ShareVector], t: usize) -> Result<Vec<Gf256>> {
    if shares.len() < t + 1 {
        return Err(Error::InsufficientShares {
            got: shares.len(),
            need: t + 1,
        });
    }
    let width = check_share_shape(shares)?;
    let xs: Vec<Gf256> = shares.iter().map(|s| s.alpha).collect();
    let weights = crate::gf256::LagrangeWeights::at_zero(&xs)?;
    let mut secret = Vec::with_capacity(width);
    let mut column = vec![Gf256::ZERO; shares.len()];
    for j in 0..width {
        for (c, s) in column.iter_mut().zip(shares) {
            *c = s.values[j];
        }
        secret.push(weights.combine(&column));
    }
    Ok(secret)
}

/// Error-tolerant reconstruction: coordinate-wise Reed-Solomon decoding.
/// Returns the secret and the alphas of shares flagged corrupted in any
/// coordinate.
pub fn reconstruct_with_errors(
    shares: &[ShareVector],
    t: usize,
) -> Result<(Vec<Gf256>, Vec<Gf256>)> {
    let k = shares.len();
    if k <= t {
        return Err(Error::InsufficientShares { got: k, need: t + 1 });
    }
    let width = check_share_shape(shares)?;
    let max_errors = (k - t - 1) / 2;
    let mut corrupted = vec![false; k];
    let mut secret = Vec::with_capacity(width);
    let mut points: Vec<(Gf256, Gf256)> = shares.iter().map(|s| (s.alpha, Gf256::ZERO)).collect();
    for j in 0..width {
        for (p, s) in points.iter_mut().zip(shares) {
            p.1 = s.values[j];
        }
        let decoded = rs_decode(&points, t).map_err(|e| match e {
            Error::DecodeFailure { .. } => Error::ByzantineOverload {
                degree: t,
                responders: k,
                max_errors,
            },
            other => other,
        })?;
        secret.push(decoded.poly.constant_term());
        for idx in decoded.corrupted {
            corrupted[idx] = true;
        }
    }
    let flagged: Vec<Gf256> = corrupted
        .iter()
        .enumerate()
        .filter(|(_, &c)| c)
        .map(|(i, _)| shares[i].alpha)
        .collect();
    if flagged.len() > max_errors {
        return Err(Error::ByzantineOverload {
            degree: t,
            responders: k,
            max_errors,
        });
    }
    Ok((secret, flagged))
}

/// Plain interpolation fallback used when no errors are possible.
pub fn interpolate_at_zero(points: &[(Gf256, Gf256)]) -> Result<Gf256> {
    lagrange_at_zero(points)
}

#[cfg(test)]
pub(crate) mod test_rng {
    use rand::RngCore;

    /// Emits a scripted byte sequence, then falls back to zero. Lets tests
    /// force specific polynomial coefficients.
    pub struct ScriptedRng {
        bytes: Vec<u8>,
        pos: usize,
    }

    impl ScriptedRng {
        pub fn new(bytes: &[u8]) -> Self {
            ScriptedRng {
                bytes: bytes.to_vec(),
                pos: 0,
            }
        }
    }

    impl RngCore for ScriptedRng {
        fn next_u32(&mut self) -> u32 {
            let mut b = [0u8; 4];
            self.fill_bytes(&mut b);
            u32::from_le_bytes(b)
        }
        fn next_u64(&mut self) -> u64 {
            let mut b = [0u8; 8];
            self.fill_bytes(&mut b);
            u64::from_le_bytes(b)
        }
        fn fill_bytes(&mut self, dest: &mut [u8]) {
            for d in dest.iter_mut() {
                *d = self.bytes.get(self.pos).copied().unwrap_or(0);
                self.pos += 1;
            }
        }
        fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
            self.fill_bytes(dest);
            Ok(())
        }
    }
}
