//! Shamir-shared retrieval over GF(2^8): t-private queries, recovery from
//! any k > t responses, and byzantine identification.
//!
//! Each query coordinate is a share of the matching e_beta coordinate, so
//! by linearity every server's answer is a share of the requested record.
//! Recovery first tries plain interpolation over the lowest-id responses
//! and verifies the rest against it; on any inconsistency it escalates the
//! whole record to word-wise Reed-Solomon decoding, which both recovers
//! the record and names the corrupted servers, up to
//! floor((k - degree - 1) / 2) of them.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::gf256::{mul_row, Gf256, LagrangeWeights};
use crate::sharing::{reconstruct_with_errors, share_vector, EvalPointSet, ShareVector};
use crate::spectrumdb::{DatabaseMatrix, SpectrumRecord};

/// One server's query: its evaluation point and the r shares.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldbergQuery {
    pub alpha: Gf256,
    pub rho: Vec<Gf256>,
}

/// One server's answer: s shares, one per record word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldbergResponse {
    pub server_id: u8,
    pub alpha: Gf256,
    pub values: Vec<Gf256>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecoveryPath {
    Easy,
    Hard,
}

/// The outcome of record recovery, including blame assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecoveryReport {
    pub record: SpectrumRecord,
    pub honest: Vec<u8>,
    pub byzantine: Vec<u8>,
    pub path: RecoveryPath,
}

/// Deterministic cost trace of one recovery, for the benchmark assertions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RecoveryStats {
    /// Field multiplications spent combining shares.
    pub combine_mults: u64,
    /// Interpolation weight sets computed.
    pub weight_sets: u32,
}

/// Builds the l queries for record `beta`: r independent degree-t
/// polynomials with f_j(0) = e_beta[j], evaluated at each server's point.
pub fn build_queries(
    beta: u64,
    rows: usize,
    t: usize,
    points: &EvalPointSet,
    rng: &mut impl RngCore,
) -> Result<Vec<GoldbergQuery>> {
    if beta == 0 || beta > rows as u64 {
        return Err(Error::RowIndexOutOfRange {
            index: beta,
            rows: rows as u64,
        });
    }
    let mut selection = vec![Gf256::ZERO; rows];
    selection[beta as usize - 1] = Gf256::ONE;
    let shares = share_vector(&selection, t, points, rng)?;
    Ok(shares
        .into_iter()
        .map(|s| GoldbergQuery {
            alpha: s.alpha,
            rho: s.values,
        })
        .collect())
}

/// The vector-matrix product rho . D over GF(2^8): one table lookup and one
/// XOR per database word, independent of t.
pub fn server_answer(
    server_id: u8,
    query: &GoldbergQuery,
    db: &DatabaseMatrix,
) -> Result<GoldbergResponse> {
    check_dims(query, db)?;
    #[cfg(feature = "parallel")]
    let values = {
        use rayon::prelude::*;
        let rows_per_task = (256 * 1024 / db.record_bytes().max(1)).max(64);
        query
            .rho
            .par_chunks(rows_per_task)
            .enumerate()
            .map(|(chunk, rho)| scan_rows(rho, chunk * rows_per_task, db))
            .reduce(
                || vec![0u8; db.record_bytes()],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        *x ^= y;
                    }
                    a
                },
            )
    };
    #[cfg(not(feature = "parallel"))]
    let values = scan_rows(&query.rho, 0, db);
    Ok(GoldbergResponse {
        server_id,
        alpha: query.alpha,
        values: values.into_iter().map(Gf256).collect(),
    })
}

/// Sequential kernel, always available for benchmark comparison.
pub fn server_answer_seq(
    server_id: u8,
    query: &GoldbergQuery,
    db: &DatabaseMatrix,
) -> Result<GoldbergResponse> {
    check_dims(query, db)?;
    Ok(GoldbergResponse {
        server_id,
        alpha: query.alpha,
        values: scan_rows(&query.rho, 0, db).into_iter().map(Gf256).collect(),
    })
}

/// Sequential answer that also reports the number of word operations
/// performed. The scan is branch-free over rows, so the count depends only
/// on the database dimensions, never on t or the query values.
pub fn server_answer_counted(
    server_id: u8,
    query: &GoldbergQuery,
    db: &DatabaseMatrix,
) -> Result<(GoldbergResponse, u64)> {
    let resp = server_answer_seq(server_id, query, db)?;
    let ops = db.rows() as u64 * db.record_bytes() as u64;
    Ok((resp, ops))
}

fn check_dims(query: &GoldbergQuery, db: &DatabaseMatrix) -> Result<()> {
    if query.rho.len() != db.rows() {
        return Err(Error::LengthMismatch {
            context: "query share vector",
            expected: db.rows(),
            got: query.rho.len(),
        });
    }
    Ok(())
}

fn scan_rows(rho: &[Gf256], base_row: usize, db: &DatabaseMatrix) -> Vec<u8> {
    let s = db.record_bytes();
    let mut acc = vec![0u8; s];
    for (offset, scalar) in rho.iter().enumerate() {
        let table = mul_row(scalar.0);
        let row = db.row(base_row + offset);
        for (a, &w) in acc.iter_mut().zip(row) {
            *a ^= table[w as usize];
        }
    }
    acc
}

/// Recovers the record from k > t responses.
pub fn recover(responses: &[GoldbergResponse], t: usize) -> Result<RecoveryReport> {
    recover_with_degree(responses, t).map(|(report, _)| report)
}

/// As [`recover`] but also returns the cost trace.
pub fn recover_traced(
    responses: &[GoldbergResponse],
    t: usize,
) -> Result<(RecoveryReport, RecoveryStats)> {
    recover_with_degree(responses, t)
}

/// Shared implementation: the response shares lie on polynomials of the
/// given degree (t for replicated databases, t + tau for shared ones).
pub(crate) fn recover_with_degree(
    responses: &[GoldbergResponse],
    degree: usize,
) -> Result<(RecoveryReport, RecoveryStats)> {
    let k = responses.len();
    if k <= degree {
        return Err(Error::InsufficientResponses {
            got: k,
            need: degree + 1,
        });
    }
    let width = responses[0].values.len();
    for r in responses {
        if r.values.len() != width {
            return Err(Error::LengthMismatch {
                context: "response width",
                expected: width,
                got: r.values.len(),
            });
        }
    }
    // Deterministic tie-break: interpolate over the lowest server ids.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&i| responses[i].server_id);
    let sorted: Vec<&GoldbergResponse> = order.iter().map(|&i| &responses[i]).collect();
    let mut stats = RecoveryStats::default();

    let head = degree + 1;
    let head_xs: Vec<Gf256> = sorted[..head].iter().map(|r| r.alpha).collect();
    let zero_weights = LagrangeWeights::at_zero(&head_xs)?;
    stats.weight_sets += 1;
    let verify_weights: Vec<LagrangeWeights> = sorted[head..]
        .iter()
        .map(|r| LagrangeWeights::at_point(&head_xs, r.alpha))
        .collect::<Result<_>>()?;
    stats.weight_sets += verify_weights.len() as u32;

    let mut record = vec![0u8; width];
    let mut column = vec![Gf256::ZERO; head];
    let mut consistent = true;
    'words: for c in 0..width {
        for (slot, r) in column.iter_mut().zip(&sorted[..head]) {
            *slot = r.values[c];
        }
        for (m, w) in verify_weights.iter().enumerate() {
            stats.combine_mults += head as u64;
            if w.combine(&column) != sorted[head + m].values[c] {
                consistent = false;
                break 'words;
            }
        }
        stats.combine_mults += head as u64;
        record[c] = zero_weights.combine(&column).0;
    }

    if consistent {
        let honest: Vec<u8> = sorted.iter().map(|r| r.server_id).collect();
        return Ok((
            RecoveryReport {
                record: SpectrumRecord::from_bytes(record),
                honest,
                byzantine: Vec::new(),
                path: RecoveryPath::Easy,
            },
            stats,
        ));
    }

    // Hard path: word-wise error-correcting reconstruction.
    let shares: Vec<ShareVector> = sorted
        .iter()
        .map(|r| ShareVector {
            alpha: r.alpha,
            values: r.values.clone(),
        })
        .collect();
    let (secret, bad_alphas) = reconstruct_with_errors(&shares, degree)?;
    stats.weight_sets += 1;
    stats.combine_mults += (k as u64) * (k as u64) * width as u64;
    let byzantine: Vec<u8> = sorted
        .iter()
        .filter(|r| bad_alphas.contains(&r.alpha))
        .map(|r| r.server_id)
        .collect();
    let honest: Vec<u8> = sorted
        .iter()
        .filter(|r| !bad_alphas.contains(&r.alpha))
        .map(|r| r.server_id)
        .collect();
    Ok((
        RecoveryReport {
            record: SpectrumRecord::from_bytes(secret.into_iter().map(|g| g.0).collect()),
            honest,
            byzantine,
            path: RecoveryPath::Hard,
        },
        stats,
    ))
}
