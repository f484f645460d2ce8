//! XOR-based multi-server retrieval over replicated databases.
//!
//! The client splits the selection vector into l uniformly random bit
//! vectors whose XOR is e_beta; each server XORs together the rows its
//! vector selects. Private against any l-1 colluding servers, but all l
//! answers are required and a corrupt answer is undetectable here (the
//! record checksum catches it after the fact, without attribution).

use rand::RngCore;

use crate::bits::PackedBits;
use crate::error::{Error, Result};
use crate::spectrumdb::{basis_vector, DatabaseMatrix};

/// The per-server query vectors; XOR of all of them is e_beta.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChorQuerySet {
    pub vectors: Vec<PackedBits>,
}

/// One server's answer: the XOR of its selected rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChorResponse {
    pub server_id: u8,
    pub block: Vec<u8>,
}

/// Builds the l query vectors for record `beta` (1-based): l-1 uniformly
/// random strings plus their XOR with e_beta.
pub fn build_query(
    beta: u64,
    rows: usize,
    ell: usize,
    rng: &mut impl RngCore,
) -> Result<ChorQuerySet> {
    if ell < 2 {
        return Err(Error::InvalidParams(format!(
            "need at least 2 servers, got {ell}"
        )));
    }
    let mut last = basis_vector(beta, rows)?;
    let mut vectors = Vec::with_capacity(ell);
    for _ in 0..ell - 1 {
        let v = PackedBits::random(rows, rng);
        last.xor_assign(&v)?;
        vectors.push(v);
    }
    vectors.push(last);
    Ok(ChorQuerySet { vectors })
}

/// XOR of the database rows selected by `query`, scanning 64 rows per lane
/// word. This is the whole per-server cost of the protocol.
pub fn server_answer(
    server_id: u8,
    query: &PackedBits,
    db: &DatabaseMatrix,
) -> Result<ChorResponse> {
    check_dims(query, db)?;
    #[cfg(feature = "parallel")]
    let block = {
        use rayon::prelude::*;
        // One task per group of lanes, each scanning >= 64 KiB of rows.
        let lanes_per_task = (64 * 1024 / (64 * db.record_bytes()).max(1)).max(16);
        query
            .lanes()
            .par_chunks(lanes_per_task)
            .enumerate()
            .map(|(chunk, lanes)| {
                xor_lane_range(lanes, chunk * lanes_per_task * 64, db)
            })
            .reduce(
                || vec![0u8; db.record_bytes()],
                |mut a, b| {
                    xor_into(&mut a, &b);
                    a
                },
            )
    };
    #[cfg(not(feature = "parallel"))]
    let block = xor_lane_range(query.lanes(), 0, db);
    Ok(ChorResponse { server_id, block })
}

/// Sequential kernel, always available for benchmark comparison.
pub fn server_answer_seq(
    server_id: u8,
    query: &PackedBits,
    db: &DatabaseMatrix,
) -> Result<ChorResponse> {
    check_dims(query, db)?;
    Ok(ChorResponse {
        server_id,
        block: xor_lane_range(query.lanes(), 0, db),
    })
}

fn check_dims(query: &PackedBits, db: &DatabaseMatrix) -> Result<()> {
    if query.len() != db.rows() {
        return Err(Error::LengthMismatch {
            context: "query bit-vector",
            expected: db.rows(),
            got: query.len(),
        });
    }
    Ok(())
}

fn xor_lane_range(lanes: &[u64], base_row: usize, db: &DatabaseMatrix) -> Vec<u8> {
    let mut acc = vec![0u8; db.record_bytes()];
    for (lane_idx, &lane) in lanes.iter().enumerate() {
        let mut bits = lane;
        while bits != 0 {
            let bit = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let row = base_row + lane_idx * 64 + bit;
            xor_into(&mut acc, db.row(row));
        }
    }
    acc
}

#[inline]
fn xor_into(acc: &mut [u8], row: &[u8]) {
    for (a, b) in acc.iter_mut().zip(row) {
        *a ^= b;
    }
}

/// XOR of all l responses; exactly l are required.
pub fn reconstruct(responses: &[ChorResponse], ell: usize) -> Result<Vec<u8>> {
    if responses.len() != ell {
        return Err(Error::IncompleteResponses {
            got: responses.len(),
            expected: ell,
        });
    }
    let len = responses[0].block.len();
    let mut acc = vec![0u8; len];
    for r in responses {
        if r.block.len() != len {
            return Err(Error::LengthMismatch {
                context: "response block",
                expected: len,
                got: r.block.len(),
            });
        }
        xor_into(&mut acc, &r.block);
    }
    Ok(acc)
}
