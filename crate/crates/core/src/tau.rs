//! Database-content privacy: licensed users (or the sensing entity)
//! populate each server with Shamir shares of every database word, so no
//! coalition of up to tau servers learns the stored records.
//!
//! Servers answer exactly as in the Goldberg protocol - they cannot tell a
//! share replica from a plaintext one - but the response shares now lie on
//! polynomials of degree t + tau (the product of the degree-t query
//! polynomial and the degree-tau content polynomial; cross terms vanish at
//! zero), so the client interpolates with t + tau + 1 points and the
//! byzantine bound tightens to floor((k - (t+tau) - 1) / 2).
//!
//! The evaluation points are provisioning secrets: they are agreed between
//! clients and data owners out-of-band and never appear in anything a
//! server receives; a server holds only its opaque share matrix.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gf256::Gf256;
use crate::goldberg::{self, GoldbergResponse, RecoveryReport, RecoveryStats};
use crate::sharing::EvalPointSet;
use crate::spectrumdb::{
    read_store, write_store, DatabaseMatrix, GridShape, SpectrumRecord, StoreError, StoreKind,
};

/// The l share replicas plus the secrets that created them.
#[derive(Clone, Debug)]
pub struct SharedDatabaseSet {
    pub replicas: Vec<DatabaseMatrix>,
    pub points: EvalPointSet,
    pub tau: usize,
}

impl SharedDatabaseSet {
    /// Digest identifying this sharing run; stamped into every replica file
    /// so a client can confirm all servers hold pieces of the same encode.
    pub fn set_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"spdb-share-set");
        h.update([self.tau as u8, self.replicas.len() as u8]);
        for (replica, alpha) in self.replicas.iter().zip(self.points.alphas()) {
            h.update([alpha.0]);
            h.update(replica.body_digest());
        }
        h.finalize().into()
    }
}

/// Word-wise Shamir sharing of the whole database at threshold `tau`.
/// `tau = 0` degenerates to l identical replicas.
pub fn encode_database(
    plain: &DatabaseMatrix,
    tau: usize,
    points: &EvalPointSet,
    rng: &mut impl RngCore,
) -> Result<SharedDatabaseSet> {
    let ell = points.len();
    if tau >= ell {
        return Err(Error::InvalidThreshold { t: tau, ell });
    }
    // One sub-seed per row, drawn sequentially so the transcript is
    // reproducible, then each (replica, row) pair re-derives the same
    // coefficient stream independently - embarrassingly parallel.
    let mut row_seeds = vec![[0u8; 32]; plain.rows()];
    for seed in row_seeds.iter_mut() {
        rng.fill_bytes(seed);
    }
    let replicas = points
        .alphas()
        .iter()
        .map(|&alpha| {
            let mut data = vec![0u8; plain.rows() * plain.record_bytes()];
            let encode_row = |(idx, out): (usize, &mut [u8])| {
                share_row(plain.row(idx), tau, alpha, &row_seeds[idx], out);
            };
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                data.par_chunks_mut(plain.record_bytes())
                    .enumerate()
                    .for_each(encode_row);
            }
            #[cfg(not(feature = "parallel"))]
            data.chunks_mut(plain.record_bytes())
                .enumerate()
                .for_each(encode_row);
            DatabaseMatrix::from_parts(plain.rows(), plain.record_bytes(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SharedDatabaseSet {
        replicas,
        points: points.clone(),
        tau,
    })
}

/// Shares one plaintext row into the replica row at `alpha`, with the
/// coefficient stream keyed by the row seed.
fn share_row(plain_row: &[u8], tau: usize, alpha: Gf256, seed: &[u8; 32], out: &mut [u8]) {
    let mut rng = ChaCha20Rng::from_seed(*seed);
    let mut coeffs = vec![0u8; tau];
    for (word, dst) in plain_row.iter().zip(out.iter_mut()) {
        rng.fill_bytes(&mut coeffs);
        // Horner over [word, c_1, .., c_tau] at alpha.
        let mut acc = Gf256::ZERO;
        for &c in coeffs.iter().rev() {
            acc = acc * alpha + Gf256(c);
        }
        *dst = (acc * alpha + Gf256(*word)).0;
    }
}

/// Re-shares row `beta` (1-based) in place with fresh randomness; other
/// rows are untouched. Single-writer contract per set.
pub fn add_record(
    set: &mut SharedDatabaseSet,
    beta: u64,
    record: &SpectrumRecord,
    rng: &mut impl RngCore,
) -> Result<()> {
    let rows = set.replicas[0].rows();
    if beta == 0 || beta > rows as u64 {
        return Err(Error::RowIndexOutOfRange {
            index: beta,
            rows: rows as u64,
        });
    }
    if record.len() != set.replicas[0].record_bytes() {
        return Err(Error::LengthMismatch {
            context: "record payload",
            expected: set.replicas[0].record_bytes(),
            got: record.len(),
        });
    }
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    let mut row = vec![0u8; record.len()];
    for (replica, &alpha) in set.replicas.iter_mut().zip(set.points.alphas()) {
        share_row(record.as_bytes(), set.tau, alpha, &seed, &mut row);
        replica.replace_row(beta as usize - 1, &row);
    }
    Ok(())
}

/// Record recovery against a shared database: Goldberg recovery at
/// effective degree t + tau. Requires k > t + tau responses.
pub fn recover(responses: &[GoldbergResponse], t: usize, tau: usize) -> Result<RecoveryReport> {
    goldberg::recover_with_degree(responses, t + tau).map(|(r, _)| r)
}

/// As [`recover`] with the cost trace.
pub fn recover_traced(
    responses: &[GoldbergResponse],
    t: usize,
    tau: usize,
) -> Result<(RecoveryReport, RecoveryStats)> {
    goldberg::recover_with_degree(responses, t + tau)
}

/// One share replica as loaded from disk.
#[derive(Clone, Debug)]
pub struct ShareStore {
    pub matrix: DatabaseMatrix,
    pub shape: GridShape,
    pub tau: u8,
    pub alpha: Gf256,
    pub set_digest: [u8; 32],
}

/// Writes replica `index` of the set to `path`.
pub fn store_share_replica(
    set: &SharedDatabaseSet,
    shape: &GridShape,
    index: usize,
    path: &Path,
) -> std::result::Result<(), StoreError> {
    let mut ext = [0u8; 64];
    ext[0] = set.tau as u8;
    ext[1] = set.points.get(index).0;
    ext[32..64].copy_from_slice(&set.set_digest());
    write_store(path, StoreKind::Share, shape, &set.replicas[index], Some(ext))
}

pub fn load_share_replica(path: &Path) -> std::result::Result<ShareStore, StoreError> {
    let raw = read_store(path)?;
    if raw.kind != StoreKind::Share {
        return Err(StoreError::WrongKind {
            found: raw.kind as u8,
        });
    }
    let ext = raw.extension.expect("share stores carry an extension");
    let mut set_digest = [0u8; 32];
    set_digest.copy_from_slice(&ext[32..64]);
    Ok(ShareStore {
        matrix: raw.matrix,
        shape: raw.shape,
        tau: ext[0],
        alpha: Gf256(ext[1]),
        set_digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrumdb::generate_database;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn points(ell: usize) -> EvalPointSet {
        EvalPointSet::server_indices(ell).unwrap()
    }

    #[test]
    fn tau_zero_is_replication() {
        let shape = GridShape::linear(16);
        let plain = generate_database(&shape, 16, 1);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let set = encode_database(&plain, 0, &points(3), &mut rng).unwrap();
        for replica in &set.replicas {
            assert_eq!(replica, &plain);
        }
    }

    #[test]
    fn hand_share_values() {
        // One word 0x10, tau=1, coefficient forced to 0x01:
        // shares 0x10 + 0x01*alpha at alpha = 1, 2, 3.
        let mut out = [0u8; 1];
        let mut seed = [0u8; 32];
        // share_row draws coefficients from ChaCha20; force via a scripted
        // construction instead: evaluate directly.
        for (alpha, expect) in [(1u8, 0x11u8), (2, 0x12), (3, 0x13)] {
            let acc = Gf256(0x01) * Gf256(alpha) + Gf256(0x10);
            assert_eq!(acc.0, expect);
        }
        // And the seeded path is consistent with itself across replicas.
        rand::RngCore::fill_bytes(&mut ChaCha20Rng::seed_from_u64(3), &mut seed);
        share_row(&[0x10], 1, Gf256(1), &seed, &mut out);
        let s1 = out[0];
        share_row(&[0x10], 1, Gf256(2), &seed, &mut out);
        let s2 = out[0];
        share_row(&[0x10], 1, Gf256(3), &seed, &mut out);
        let s3 = out[0];
        // Three points of one degree-1 polynomial with constant term 0x10.
        let rec = crate::gf256::lagrange_at_zero(&[
            (Gf256(1), Gf256(s1)),
            (Gf256(2), Gf256(s2)),
        ])
        .unwrap();
        assert_eq!(rec, Gf256(0x10));
        let rec = crate::gf256::lagrange_at_zero(&[
            (Gf256(2), Gf256(s2)),
            (Gf256(3), Gf256(s3)),
        ])
        .unwrap();
        assert_eq!(rec, Gf256(0x10));
    }

    #[test]
    fn every_word_is_a_valid_sharing() {
        let shape = GridShape::linear(8);
        let plain = generate_database(&shape, 16, 9);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let set = encode_database(&plain, 2, &points(4), &mut rng).unwrap();
        for row in 0..8 {
            for c in 0..16 {
                let pts: Vec<(Gf256, Gf256)> = set
                    .replicas
                    .iter()
                    .enumerate()
                    .map(|(i, rep)| (set.points.get(i), Gf256(rep.row(row)[c])))
                    .collect();
                assert_eq!(
                    crate::gf256::lagrange_at_zero(&pts[..3]).unwrap().0,
                    plain.row(row)[c]
                );
            }
        }
    }

    #[test]
    fn end_to_end_through_goldberg_answers() {
        let shape = GridShape::linear(32);
        let plain = generate_database(&shape, 16, 11);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let pts = points(4);
        let (t, tau) = (1usize, 1usize);
        let set = encode_database(&plain, tau, &pts, &mut rng).unwrap();
        for beta in [1u64, 17, 32] {
            let queries = goldberg::build_queries(beta, 32, t, &pts, &mut rng).unwrap();
            let responses: Vec<GoldbergResponse> = queries
                .iter()
                .enumerate()
                .map(|(i, q)| {
                    goldberg::server_answer(i as u8 + 1, q, &set.replicas[i]).unwrap()
                })
                .collect();
            let report = recover(&responses, t, tau).unwrap();
            assert_eq!(report.record, plain.record(beta).unwrap());
            assert!(report.record.verify_checksum());
        }
    }

    #[test]
    fn split_of_t_plus_tau_has_identical_recovery_cost() {
        let shape = GridShape::linear(64);
        let plain = generate_database(&shape, 24, 13);
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let pts = points(6);
        let mut traces = Vec::new();
        for (t, tau) in [(1usize, 3usize), (3, 1)] {
            let set = encode_database(&plain, tau, &pts, &mut rng).unwrap();
            let queries = goldberg::build_queries(40, 64, t, &pts, &mut rng).unwrap();
            let responses: Vec<GoldbergResponse> = queries
                .iter()
                .enumerate()
                .map(|(i, q)| {
                    goldberg::server_answer(i as u8 + 1, q, &set.replicas[i]).unwrap()
                })
                .collect();
            let (report, stats) = recover_traced(&responses, t, tau).unwrap();
            assert_eq!(report.record, plain.record(40).unwrap());
            traces.push(stats);
        }
        assert_eq!(traces[0], traces[1]);
    }

    #[test]
    fn quorum_constraint_enforced() {
        let shape = GridShape::linear(16);
        let plain = generate_database(&shape, 16, 14);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let pts = points(4);
        let set = encode_database(&plain, 2, &pts, &mut rng).unwrap();
        let queries = goldberg::build_queries(3, 16, 1, &pts, &mut rng).unwrap();
        let responses: Vec<GoldbergResponse> = queries
            .iter()
            .enumerate()
            .map(|(i, q)| goldberg::server_answer(i as u8 + 1, q, &set.replicas[i]).unwrap())
            .collect();
        // k = 3 = t + tau: not enough.
        assert_eq!(
            recover(&responses[..3], 1, 2),
            Err(Error::InsufficientResponses { got: 3, need: 4 })
        );
        assert!(recover(&responses, 1, 2).is_ok());
    }

    #[test]
    fn add_record_reshares_one_row() {
        let shape = GridShape::linear(8);
        let plain = generate_database(&shape, 16, 15);
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let pts = points(3);
        let mut set = encode_database(&plain, 1, &pts, &mut rng).unwrap();
        let untouched: Vec<Vec<u8>> = set.replicas.iter().map(|r| r.row(3).to_vec()).collect();
        let fresh = SpectrumRecord::synthesize(999, 5, 16);
        add_record(&mut set, 5, &fresh, &mut rng).unwrap();
        // Record 5 (row index 4) changed, record 4 untouched, and the new
        // row reconstructs.
        for (replica, old) in set.replicas.iter().zip(&untouched) {
            assert_eq!(replica.row(3), &old[..]);
        }
        for c in 0..16 {
            let pts2: Vec<(Gf256, Gf256)> = set
                .replicas
                .iter()
                .enumerate()
                .map(|(i, rep)| (pts.get(i), Gf256(rep.row(4)[c])))
                .collect();
            assert_eq!(
                crate::gf256::lagrange_at_zero(&pts2[..2]).unwrap().0,
                fresh.as_bytes()[c]
            );
        }
        // Same record re-added yields different shares, same reconstruction.
        let snapshot: Vec<Vec<u8>> = set.replicas.iter().map(|r| r.row(4).to_vec()).collect();
        add_record(&mut set, 5, &fresh, &mut rng).unwrap();
        let resnap: Vec<Vec<u8>> = set.replicas.iter().map(|r| r.row(4).to_vec()).collect();
        assert_ne!(snapshot, resnap);
    }

    #[test]
    fn tau_zero_add_is_plain_write() {
        let shape = GridShape::linear(4);
        let plain = generate_database(&shape, 16, 16);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut set = encode_database(&plain, 0, &points(3), &mut rng).unwrap();
        let fresh = SpectrumRecord::synthesize(1234, 2, 16);
        add_record(&mut set, 2, &fresh, &mut rng).unwrap();
        for replica in &set.replicas {
            assert_eq!(replica.row(1), fresh.as_bytes());
        }
    }

    #[test]
    fn tau_zero_recover_matches_goldberg_on_same_transcript() {
        let shape = GridShape::linear(16);
        let plain = generate_database(&shape, 16, 17);
        let pts = points(3);
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let queries = goldberg::build_queries(7, 16, 1, &pts, &mut rng).unwrap();
        let responses: Vec<GoldbergResponse> = queries
            .iter()
            .enumerate()
            .map(|(i, q)| goldberg::server_answer(i as u8 + 1, q, &plain).unwrap())
            .collect();
        assert_eq!(
            recover(&responses, 1, 0).unwrap(),
            goldberg::recover(&responses, 1).unwrap()
        );
    }

    #[test]
    fn share_replica_file_round_trip() {
        let dir = std::env::temp_dir().join("spdb-test-share");
        std::fs::create_dir_all(&dir).unwrap();
        let shape = GridShape::linear(8);
        let plain = generate_database(&shape, 16, 18);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let set = encode_database(&plain, 1, &points(3), &mut rng).unwrap();
        let path = dir.join("replica1.spdb");
        store_share_replica(&set, &shape, 1, &path).unwrap();
        let loaded = load_share_replica(&path).unwrap();
        assert_eq!(loaded.matrix, set.replicas[1]);
        assert_eq!(loaded.tau, 1);
        assert_eq!(loaded.alpha, Gf256(2));
        assert_eq!(loaded.set_digest, set.set_digest());
        std::fs::remove_file(&path).unwrap();
    }

}
