//! Byte-exact encodings of protocol queries and responses. Integers are
//! big-endian on the wire (stores on disk stay little-endian).
//!
//! Every encoding separates PIR payload from bookkeeping: `payload_bytes`
//! counts only the protocol-essential bits (query vectors and seeds going
//! up, answer blocks coming down), so transcript accounting can be checked
//! against the analytic communication formulas exactly; identifiers,
//! lengths, and digests count as framing.

use crate::batch::{FieldMatrix, QueryMatrix, ResponseMatrix};
use crate::bits::PackedBits;
use crate::chor::ChorResponse;
use crate::error::{Error, Result};
use crate::gf256::Gf256;
use crate::goldberg::{GoldbergQuery, GoldbergResponse};
use crate::params::ProtocolId;
use crate::raid::{ChunkLayout, RaidQuery, SEED_BYTES};

/// An encoded body plus how many of its bytes are PIR payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    pub payload_bytes: usize,
}

fn take<'a>(body: &mut &'a [u8], n: usize, what: &'static str) -> Result<&'a [u8]> {
    if body.len() < n {
        return Err(Error::Malformed(format!(
            "{what}: need {n} bytes, have {}",
            body.len()
        )));
    }
    let (head, rest) = body.split_at(n);
    *body = rest;
    Ok(head)
}

fn take_u64(body: &mut &[u8], what: &'static str) -> Result<u64> {
    Ok(u64::from_be_bytes(take(body, 8, what)?.try_into().unwrap()))
}

fn take_u32(body: &mut &[u8], what: &'static str) -> Result<u32> {
    Ok(u32::from_be_bytes(take(body, 4, what)?.try_into().unwrap()))
}

fn expect_protocol(body: &mut &[u8], id: ProtocolId) -> Result<()> {
    let got = take(body, 1, "protocol id")?[0];
    if got != id as u8 {
        return Err(Error::Malformed(format!(
            "expected protocol {} body, got id {got}",
            id.name()
        )));
    }
    Ok(())
}

// --- queries ---------------------------------------------------------------

/// `[id=CHOR][r u64][packed bits]`
pub fn encode_chor_query(query: &PackedBits) -> Encoded {
    let bits = query.to_bytes();
    let payload_bytes = bits.len();
    let mut bytes = Vec::with_capacity(9 + bits.len());
    bytes.push(ProtocolId::Chor as u8);
    bytes.extend_from_slice(&(query.len() as u64).to_be_bytes());
    bytes.extend_from_slice(&bits);
    Encoded {
        bytes,
        payload_bytes,
    }
}

pub fn decode_chor_query(mut body: &[u8]) -> Result<PackedBits> {
    expect_protocol(&mut body, ProtocolId::Chor)?;
    let r = take_u64(&mut body, "row count")? as usize;
    let bits = take(&mut body, r.div_ceil(8), "query bits")?;
    PackedBits::from_bytes(bits, r)
}

/// `[id=GOLD][r u64][t u8][alpha u8][r share bytes]`
pub fn encode_goldberg_query(query: &GoldbergQuery, t: usize) -> Encoded {
    let r = query.rho.len();
    let mut bytes = Vec::with_capacity(11 + r);
    bytes.push(ProtocolId::Goldberg as u8);
    bytes.extend_from_slice(&(r as u64).to_be_bytes());
    bytes.push(t as u8);
    bytes.push(query.alpha.0);
    bytes.extend(query.rho.iter().map(|g| g.0));
    Encoded {
        bytes,
        payload_bytes: r,
    }
}

pub fn decode_goldberg_query(mut body: &[u8]) -> Result<(GoldbergQuery, usize)> {
    expect_protocol(&mut body, ProtocolId::Goldberg)?;
    let r = take_u64(&mut body, "row count")? as usize;
    let t = take(&mut body, 1, "threshold")?[0] as usize;
    let alpha = Gf256(take(&mut body, 1, "alpha")?[0]);
    let rho = take(&mut body, r, "query shares")?;
    Ok((
        GoldbergQuery {
            alpha,
            rho: rho.iter().map(|&v| Gf256(v)).collect(),
        },
        t,
    ))
}

/// `[id=BATCH][r u64][t u8][alpha u8][q u32][q*r share bytes, row-major]`
pub fn encode_batch_query(batch: &QueryMatrix, t: usize) -> Encoded {
    let (q, r) = (batch.queries.rows(), batch.queries.cols());
    let mut bytes = Vec::with_capacity(15 + q * r);
    bytes.push(ProtocolId::Batch as u8);
    bytes.extend_from_slice(&(r as u64).to_be_bytes());
    bytes.push(t as u8);
    bytes.push(batch.alpha.0);
    bytes.extend_from_slice(&(q as u32).to_be_bytes());
    bytes.extend_from_slice(batch.queries.data());
    Encoded {
        bytes,
        payload_bytes: q * r,
    }
}

pub fn decode_batch_query(mut body: &[u8]) -> Result<(QueryMatrix, usize)> {
    expect_protocol(&mut body, ProtocolId::Batch)?;
    let r = take_u64(&mut body, "row count")? as usize;
    let t = take(&mut body, 1, "threshold")?[0] as usize;
    let alpha = Gf256(take(&mut body, 1, "alpha")?[0]);
    let q = take_u32(&mut body, "batch size")? as usize;
    if q == 0 {
        return Err(Error::Malformed("empty batch".into()));
    }
    let data = take(&mut body, q * r, "query matrix")?;
    Ok((
        QueryMatrix {
            alpha,
            queries: FieldMatrix::from_data(q, r, data.to_vec())?,
        },
        t,
    ))
}

/// `[id=RAID][r u64][layout digest 32][flip bits][seed 16]`
pub fn encode_raid_query(query: &RaidQuery, layout: &ChunkLayout) -> Encoded {
    let flip = query.flip.to_bytes();
    let payload_bytes = flip.len() + SEED_BYTES;
    let mut bytes = Vec::with_capacity(41 + payload_bytes);
    bytes.push(ProtocolId::Raid as u8);
    bytes.extend_from_slice(&(layout.rows as u64).to_be_bytes());
    bytes.extend_from_slice(&layout.digest());
    bytes.extend_from_slice(&flip);
    bytes.extend_from_slice(&query.seed);
    Encoded {
        bytes,
        payload_bytes,
    }
}

pub fn decode_raid_query(mut body: &[u8], layout: &ChunkLayout) -> Result<RaidQuery> {
    expect_protocol(&mut body, ProtocolId::Raid)?;
    let r = take_u64(&mut body, "row count")? as usize;
    let digest = take(&mut body, 32, "layout digest")?;
    if r != layout.rows || digest != layout.digest() {
        return Err(Error::LengthMismatch {
            context: "chunk layout",
            expected: layout.rows,
            got: r,
        });
    }
    let chunk_rows = layout.chunk_rows();
    let flip = take(&mut body, chunk_rows.div_ceil(8), "flip bits")?;
    let seed: [u8; SEED_BYTES] = take(&mut body, SEED_BYTES, "seed")?.try_into().unwrap();
    Ok(RaidQuery {
        flip: PackedBits::from_bytes(flip, chunk_rows)?,
        seed,
    })
}

// --- responses --------------------------------------------------------------

/// `[server id u8][block]` (shared by the XOR protocols)
pub fn encode_block_response(resp: &ChorResponse) -> Encoded {
    let mut bytes = Vec::with_capacity(1 + resp.block.len());
    bytes.push(resp.server_id);
    bytes.extend_from_slice(&resp.block);
    Encoded {
        payload_bytes: resp.block.len(),
        bytes,
    }
}

pub fn decode_block_response(mut body: &[u8]) -> Result<ChorResponse> {
    let server_id = take(&mut body, 1, "server id")?[0];
    Ok(ChorResponse {
        server_id,
        block: body.to_vec(),
    })
}

/// `[server id u8][alpha u8][s share bytes]`
pub fn encode_goldberg_response(resp: &GoldbergResponse) -> Encoded {
    let mut bytes = Vec::with_capacity(2 + resp.values.len());
    bytes.push(resp.server_id);
    bytes.push(resp.alpha.0);
    bytes.extend(resp.values.iter().map(|g| g.0));
    Encoded {
        payload_bytes: resp.values.len(),
        bytes,
    }
}

pub fn decode_goldberg_response(mut body: &[u8]) -> Result<GoldbergResponse> {
    let server_id = take(&mut body, 1, "server id")?[0];
    let alpha = Gf256(take(&mut body, 1, "alpha")?[0]);
    Ok(GoldbergResponse {
        server_id,
        alpha,
        values: body.iter().map(|&v| Gf256(v)).collect(),
    })
}

/// `[server id u8][alpha u8][q u32][q*s share bytes, row-major]`
pub fn encode_batch_response(resp: &ResponseMatrix) -> Encoded {
    let (q, s) = (resp.values.rows(), resp.values.cols());
    let mut bytes = Vec::with_capacity(6 + q * s);
    bytes.push(resp.server_id);
    bytes.push(resp.alpha.0);
    bytes.extend_from_slice(&(q as u32).to_be_bytes());
    bytes.extend_from_slice(resp.values.data());
    Encoded {
        payload_bytes: q * s,
        bytes,
    }
}

pub fn decode_batch_response(mut body: &[u8]) -> Result<ResponseMatrix> {
    let server_id = take(&mut body, 1, "server id")?[0];
    let alpha = Gf256(take(&mut body, 1, "alpha")?[0]);
    let q = take_u32(&mut body, "batch size")? as usize;
    if q == 0 || body.len() % q != 0 {
        return Err(Error::Malformed(format!(
            "batch response of {} bytes not divisible into {q} rows",
            body.len()
        )));
    }
    let s = body.len() / q;
    Ok(ResponseMatrix {
        server_id,
        alpha,
        values: FieldMatrix::from_data(q, s, body.to_vec())?,
    })
}

/// Peeks the protocol id byte of a query body.
pub fn query_protocol(body: &[u8]) -> Result<ProtocolId> {
    let first = body
        .first()
        .ok_or_else(|| Error::Malformed("empty query body".into()))?;
    ProtocolId::from_byte(*first)
}
