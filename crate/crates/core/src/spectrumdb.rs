//! The spectrum database model: record layout, the row-major matrix view,
//! the inverted index from (location, channel, timeslot) to a row index,
//! synthetic data generation, and the on-disk container shared by plain,
//! secret-shared, and chunked stores.

use std::io::{Read, Write};
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bits::PackedBits;
use crate::error::{Error as PirError, Result as PirResult};

/// Meters per degree of latitude; longitude is scaled by cos(origin latitude).
const METERS_PER_DEGREE: f64 = 111_320.0;

/// Distinct failure modes when reading a database container.
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a spectrum database file")]
    BadMagic,
    #[error("unsupported format version {found}")]
    VersionMismatch { found: u16 },
    #[error("file truncated: expected {expected} body bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("body digest mismatch: the store is corrupt")]
    DigestMismatch,
    #[error("unsupported word size {found}")]
    BadWordSize { found: u8 },
    #[error("store kind {found} not valid here")]
    WrongKind { found: u8 },
    #[error("invalid header field: {0}")]
    BadHeader(String),
}

/// The cell lattice: width x height cells, each with a channel and
/// timeslot axis. Its product is the unpadded row count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridShape {
    pub width: u32,
    pub height: u16,
    pub channels: u8,
    pub timeslots: u8,
}

impl GridShape {
    pub fn rows(&self) -> u64 {
        self.width as u64 * self.height as u64 * self.channels as u64 * self.timeslots as u64
    }

    /// A degenerate one-dimensional lattice of `rows` records.
    pub fn linear(rows: u32) -> Self {
        GridShape {
            width: rows,
            height: 1,
            channels: 1,
            timeslots: 1,
        }
    }
}

/// Geographic anchoring of the lattice. Only the client needs the origin
/// and cell size; stores carry the lattice dimensions alone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridConfig {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub cell_meters: f64,
    pub shape: GridShape,
}

impl GridConfig {
    /// The default coverage agreement: 100 m cells anchored at the origin.
    pub fn anchored(shape: GridShape) -> Self {
        GridConfig {
            origin_lat: 0.0,
            origin_lon: 0.0,
            cell_meters: 100.0,
            shape,
        }
    }
}

/// A retrieval key: position, channel number, and timeslot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumKey {
    pub lat: f64,
    pub lon: f64,
    pub channel: u8,
    pub timeslot: u8,
}

impl GridConfig {
    /// Maps a key to its 1-based record index.
    ///
    /// Row-major over (cell row, cell column, channel, timeslot); two keys
    /// closer than one cell size land in the same cell.
    pub fn record_index(&self, key: &SpectrumKey) -> PirResult<u64> {
        if !(-90.0..=90.0).contains(&key.lat) || !(-180.0..=180.0).contains(&key.lon) {
            return Err(PirError::OutOfCoverage);
        }
        let dy = (key.lat - self.origin_lat) * METERS_PER_DEGREE;
        let dx =
            (key.lon - self.origin_lon) * METERS_PER_DEGREE * self.origin_lat.to_radians().cos();
        let col = (dx / self.cell_meters).floor();
        let row = (dy / self.cell_meters).floor();
        if col < 0.0
            || row < 0.0
            || col >= self.shape.width as f64
            || row >= self.shape.height as f64
            || key.channel >= self.shape.channels
            || key.timeslot >= self.shape.timeslots
        {
            return Err(PirError::OutOfCoverage);
        }
        let (col, row) = (col as u64, row as u64);
        let cell = row * self.shape.width as u64 + col;
        let idx = (cell * self.shape.channels as u64 + key.channel as u64)
            * self.shape.timeslots as u64
            + key.timeslot as u64;
        Ok(idx + 1)
    }

    /// A key at the center of the given cell; the inverse companion of
    /// `record_index` for tests and tooling.
    pub fn cell_center(&self, row: u32, col: u32, channel: u8, timeslot: u8) -> SpectrumKey {
        let lat = self.origin_lat + (row as f64 + 0.5) * self.cell_meters / METERS_PER_DEGREE;
        let lon = self.origin_lon
            + (col as f64 + 0.5) * self.cell_meters
                / (METERS_PER_DEGREE * self.origin_lat.to_radians().cos());
        SpectrumKey {
            lat,
            lon,
            channel,
            timeslot,
        }
    }
}

/// Standard basis selection vector: all zeros except position `beta`
/// (1-based).
pub fn basis_vector(beta: u64, rows: usize) -> PirResult<PackedBits> {
    if beta == 0 || beta > rows as u64 {
        return Err(PirError::RowIndexOutOfRange {
            index: beta,
            rows: rows as u64,
        });
    }
    let mut v = PackedBits::zeros(rows);
    v.set(beta as usize - 1, true);
    Ok(v)
}

/// One availability record: a fixed-size payload whose last four bytes
/// checksum the rest, giving every protocol an end-to-end oracle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpectrumRecord {
    payload: Vec<u8>,
}

/// Smallest payload that fits the structured fields plus the checksum.
pub const MIN_RECORD_BYTES: usize = 16;

impl SpectrumRecord {
    pub fn from_bytes(payload: Vec<u8>) -> Self {
        SpectrumRecord { payload }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.payload
    }

    pub fn len(&self) -> usize {
        self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payload.is_empty()
    }

    /// Deterministic synthetic record for row `beta` under `seed`; the
    /// generated fields are a keyed hash of (seed, beta) so reconstructions
    /// can be validated without the database at hand.
    pub fn synthesize(seed: u64, beta: u64, record_bytes: usize) -> Self {
        assert!(record_bytes >= MIN_RECORD_BYTES, "record too small");
        let mut key = Sha256::new();
        key.update(b"spdb-record");
        key.update(seed.to_le_bytes());
        key.update(beta.to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(key.finalize().into());
        let mut payload = vec![0u8; record_bytes];
        let body_len = record_bytes - 4;
        rng.fill_bytes(&mut payload[..body_len]);
        payload[0] &= 1; // availability flag
        let sum = fnv1a32(&payload[..body_len]);
        payload[body_len..].copy_from_slice(&sum.to_le_bytes());
        SpectrumRecord { payload }
    }

    pub fn verify_checksum(&self) -> bool {
        if self.payload.len() < MIN_RECORD_BYTES {
            return false;
        }
        let body_len = self.payload.len() - 4;
        let stored = u32::from_le_bytes(self.payload[body_len..].try_into().unwrap());
        fnv1a32(&self.payload[..body_len]) == stored
    }

    pub fn available(&self) -> bool {
        self.payload[0] == 1
    }

    pub fn max_power_dbm(&self) -> i16 {
        i16::from_le_bytes(self.payload[1..3].try_into().unwrap())
    }

    pub fn valid_from_slot(&self) -> u32 {
        u32::from_le_bytes(self.payload[3..7].try_into().unwrap())
    }

    pub fn valid_slots(&self) -> u32 {
        u32::from_le_bytes(self.payload[7..11].try_into().unwrap())
    }
}

fn fnv1a32(bytes: &[u8]) -> u32 {
    let mut hash = 0x811C_9DC5u32;
    for &b in bytes {
        hash ^= b as u32;
        hash = hash.wrapping_mul(0x0100_0193);
    }
    hash
}

/// The database as an r x s matrix of 8-bit words, row-major. Row `k`
/// (1-based) is record `k`. Immutable once built; concurrent readers need
/// no coordination.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatabaseMatrix {
    rows: usize,
    words_per_row: usize,
    data: Vec<u8>,
}

impl DatabaseMatrix {
    pub fn from_parts(rows: usize, words_per_row: usize, data: Vec<u8>) -> PirResult<Self> {
        if data.len() != rows * words_per_row {
            return Err(PirError::LengthMismatch {
                context: "database body",
                expected: rows * words_per_row,
                got: data.len(),
            });
        }
        Ok(DatabaseMatrix {
            rows,
            words_per_row,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn word_bits(&self) -> usize {
        8
    }

    pub fn record_bytes(&self) -> usize {
        self.words_per_row
    }

    pub fn n_bits(&self) -> u128 {
        self.data.len() as u128 * 8
    }

    /// Row by 0-based index.
    #[inline]
    pub fn row(&self, idx: usize) -> &[u8] {
        &self.data[idx * self.words_per_row..(idx + 1) * self.words_per_row]
    }

    /// Record by 1-based index.
    pub fn record(&self, beta: u64) -> PirResult<SpectrumRecord> {
        if beta == 0 || beta > self.rows as u64 {
            return Err(PirError::RowIndexOutOfRange {
                index: beta,
                rows: self.rows as u64,
            });
        }
        Ok(SpectrumRecord::from_bytes(
            self.row(beta as usize - 1).to_vec(),
        ))
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn body_digest(&self) -> [u8; 32] {
        Sha256::digest(&self.data).into()
    }

    pub(crate) fn replace_row(&mut self, idx: usize, row: &[u8]) {
        self.data[idx * self.words_per_row..(idx + 1) * self.words_per_row].copy_from_slice(row);
    }
}

/// Generates the synthetic database for a grid: `grid.rows()` records of
/// `record_bytes` bytes, each a deterministic function of (seed, row).
pub fn generate_database(grid: &GridShape, record_bytes: usize, seed: u64) -> DatabaseMatrix {
    generate_rows(grid.rows() as usize, record_bytes, seed)
}

/// As `generate_database` but pads the row count up to a multiple of
/// `align` (the partitioned protocol requires server-count divisibility).
/// Returns the matrix and the number of padding rows appended.
pub fn generate_database_padded(
    grid: &GridShape,
    record_bytes: usize,
    seed: u64,
    align: usize,
) -> (DatabaseMatrix, usize) {
    let base = grid.rows() as usize;
    let pad = if align <= 1 { 0 } else { (align - base % align) % align };
    (generate_rows(base + pad, record_bytes, seed), pad)
}

fn generate_rows(rows: usize, record_bytes: usize, seed: u64) -> DatabaseMatrix {
    assert!(record_bytes >= MIN_RECORD_BYTES, "record too small");
    let mut data = vec![0u8; rows * record_bytes];
    let fill = |(idx, chunk): (usize, &mut [u8])| {
        let record = SpectrumRecord::synthesize(seed, idx as u64 + 1, record_bytes);
        chunk.copy_from_slice(record.as_bytes());
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(record_bytes).enumerate().for_each(fill);
    }
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(record_bytes).enumerate().for_each(fill);
    DatabaseMatrix {
        rows,
        words_per_row: record_bytes,
        data,
    }
}

// --- on-disk container -----------------------------------------------------
//
// 64-byte little-endian header:
//   magic "SPDB" | version u16 | w u8 | kind u8 | r u64 | s u64
//   | width u32 | height u16 | channels u8 | timeslots u8
//   | body sha256 (32 bytes)
// Share and chunk stores append one 64-byte extension block before the body.

pub const STORE_MAGIC: [u8; 4] = *b"SPDB";
pub const STORE_VERSION: u16 = 1;
pub const HEADER_BYTES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum StoreKind {
    Plain = 0,
    Share = 1,
    Chunk = 2,
}

impl StoreKind {
    fn from_byte(b: u8) -> Result<Self, StoreError> {
        match b {
            0 => Ok(StoreKind::Plain),
            1 => Ok(StoreKind::Share),
            2 => Ok(StoreKind::Chunk),
            found => Err(StoreError::WrongKind { found }),
        }
    }
}

pub(crate) struct RawStore {
    pub kind: StoreKind,
    pub shape: GridShape,
    pub matrix: DatabaseMatrix,
    pub extension: Option<[u8; 64]>,
}

pub(crate) fn write_store(
    path: &Path,
    kind: StoreKind,
    shape: &GridShape,
    matrix: &DatabaseMatrix,
    extension: Option<[u8; 64]>,
) -> Result<(), StoreError> {
    debug_assert_eq!(extension.is_some(), kind != StoreKind::Plain);
    let mut header = [0u8; HEADER_BYTES];
    header[0..4].copy_from_slice(&STORE_MAGIC);
    header[4..6].copy_from_slice(&STORE_VERSION.to_le_bytes());
    header[6] = 8;
    header[7] = kind as u8;
    header[8..16].copy_from_slice(&(matrix.rows() as u64).to_le_bytes());
    header[16..24].copy_from_slice(&(matrix.words_per_row() as u64).to_le_bytes());
    header[24..28].copy_from_slice(&shape.width.to_le_bytes());
    header[28..30].copy_from_slice(&shape.height.to_le_bytes());
    header[30] = shape.channels;
    header[31] = shape.timeslots;
    header[32..64].copy_from_slice(&matrix.body_digest());
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(&header)?;
    if let Some(ext) = extension {
        file.write_all(&ext)?;
    }
    file.write_all(matrix.data())?;
    file.flush()?;
    Ok(())
}

pub(crate) fn read_store(path: &Path) -> Result<RawStore, StoreError> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header = [0u8; HEADER_BYTES];
    file.read_exact(&mut header).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            StoreError::Truncated {
                expected: HEADER_BYTES as u64,
                found: 0,
            }
        } else {
            StoreError::Io(e)
        }
    })?;
    if header[0..4] != STORE_MAGIC {
        return Err(StoreError::BadMagic);
    }
    let version = u16::from_le_bytes(header[4..6].try_into().unwrap());
    if version != STORE_VERSION {
        return Err(StoreError::VersionMismatch { found: version });
    }
    if header[6] != 8 {
        return Err(StoreError::BadWordSize { found: header[6] });
    }
    let kind = StoreKind::from_byte(header[7])?;
    let rows = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let words = u64::from_le_bytes(header[16..24].try_into().unwrap());
    let shape = GridShape {
        width: u32::from_le_bytes(header[24..28].try_into().unwrap()),
        height: u16::from_le_bytes(header[28..30].try_into().unwrap()),
        channels: header[30],
        timeslots: header[31],
    };
    // Plain and share stores hold one body row per grid row (plus any
    // alignment padding); chunk stores hold a pi/l fraction.
    if kind != StoreKind::Chunk && shape.rows() > rows {
        return Err(StoreError::BadHeader(format!(
            "grid rows {} exceed stored rows {rows}",
            shape.rows()
        )));
    }
    let mut digest = [0u8; 32];
    digest.copy_from_slice(&header[32..64]);

    let extension = if kind == StoreKind::Plain {
        None
    } else {
        let mut ext = [0u8; 64];
        file.read_exact(&mut ext).map_err(|_| StoreError::Truncated {
            expected: 64,
            found: 0,
        })?;
        Some(ext)
    };

    let expected = rows
        .checked_mul(words)
        .ok_or_else(|| StoreError::BadHeader("row/word counts overflow".into()))?;
    let mut data = Vec::new();
    file.read_to_end(&mut data)?;
    if data.len() as u64 != expected {
        return Err(StoreError::Truncated {
            expected,
            found: data.len() as u64,
        });
    }
    if <[u8; 32]>::from(Sha256::digest(&data)) != digest {
        return Err(StoreError::DigestMismatch);
    }
    let matrix = DatabaseMatrix {
        rows: rows as usize,
        words_per_row: words as usize,
        data,
    };
    Ok(RawStore {
        kind,
        shape,
        matrix,
        extension,
    })
}

/// Reads only the header to identify what kind of store a file holds.
pub fn probe_kind(path: &Path) -> Result<StoreKind, StoreError> {
    let mut file = std::fs::File::open(path)?;
    let mut header = [0u8; 8];
    file.read_exact(&mut header).map_err(|_| StoreError::Truncated {
        expected: HEADER_BYTES as u64,
        found: 0,
    })?;
    if header[0..4] != STORE_MAGIC {
        return Err(StoreError::BadMagic);
    }
    let version = u16::from_le_bytes(header[4..6].try_into().unwrap());
    if version != STORE_VERSION {
        return Err(StoreError::VersionMismatch { found: version });
    }
    StoreKind::from_byte(header[7])
}

/// Writes a plain replicated database.
pub fn store_database(
    matrix: &DatabaseMatrix,
    shape: &GridShape,
    path: &Path,
) -> Result<(), StoreError> {
    write_store(path, StoreKind::Plain, shape, matrix, None)
}

/// Reads a plain replicated database, verifying version, length, and digest.
pub fn load_database(path: &Path) -> Result<(DatabaseMatrix, GridShape), StoreError> {
    let raw = read_store(path)?;
    if raw.kind != StoreKind::Plain {
        return Err(StoreError::WrongKind {
            found: raw.kind as u8,
        });
    }
    Ok((raw.matrix, raw.shape))
}
