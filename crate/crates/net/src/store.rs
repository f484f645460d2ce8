//! What a server serves: a plain replica, a secret-shared replica, or a
//! chunk store, plus the query dispatch shared by the daemon and the
//! in-process loopback path.

use std::path::Path;

use specpir_core::raid::ChunkStore;
use specpir_core::spectrumdb::{self, DatabaseMatrix, GridShape, StoreError, StoreKind};
use specpir_core::tau::ShareStore;
use specpir_core::wire::{self, Encoded};
use specpir_core::ProtocolId;

use crate::frame::ErrorCode;

#[derive(Clone, Debug)]
pub enum ServerStore {
    Plain {
        matrix: DatabaseMatrix,
        shape: GridShape,
        digest: [u8; 32],
    },
    Share(ShareStore),
    Chunk(ChunkStore),
}

impl ServerStore {
    pub fn plain(matrix: DatabaseMatrix, shape: GridShape) -> Self {
        let digest = matrix.body_digest();
        ServerStore::Plain {
            matrix,
            shape,
            digest,
        }
    }

    /// Loads any store kind, sniffing the container header.
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        match spectrumdb::probe_kind(path)? {
            StoreKind::Plain => {
                let (matrix, shape) = spectrumdb::load_database(path)?;
                Ok(Self::plain(matrix, shape))
            }
            StoreKind::Share => Ok(ServerStore::Share(specpir_core::tau::load_share_replica(
                path,
            )?)),
            StoreKind::Chunk => Ok(ServerStore::Chunk(specpir_core::raid::load_chunks(path)?)),
        }
    }

    /// Bitmap of protocols this store can answer, bit `id - 1` per protocol.
    pub fn protocol_bitmap(&self) -> u8 {
        match self {
            ServerStore::Plain { .. } => {
                bit(ProtocolId::Chor) | bit(ProtocolId::Goldberg) | bit(ProtocolId::Batch)
            }
            ServerStore::Share(_) => bit(ProtocolId::Goldberg) | bit(ProtocolId::Batch),
            ServerStore::Chunk(_) => bit(ProtocolId::Raid),
        }
    }

    /// The digest a client compares across servers: plain replicas share
    /// body content, share replicas share the encode run, chunk stores
    /// share the source database.
    pub fn content_digest(&self) -> [u8; 32] {
        match self {
            ServerStore::Plain { digest, .. } => *digest,
            ServerStore::Share(s) => s.set_digest,
            ServerStore::Chunk(c) => c.source_digest,
        }
    }

    /// The evaluation point this server answers at, when one applies.
    pub fn alpha(&self, server_id: u8) -> u8 {
        match self {
            ServerStore::Plain { .. } => server_id,
            ServerStore::Share(s) => s.alpha.0,
            ServerStore::Chunk(_) => 0,
        }
    }

    fn matrix_for_field_protocols(&self) -> Option<&DatabaseMatrix> {
        match self {
            ServerStore::Plain { matrix, .. } => Some(matrix),
            ServerStore::Share(s) => Some(&s.matrix),
            ServerStore::Chunk(_) => None,
        }
    }
}

fn bit(p: ProtocolId) -> u8 {
    1 << (p as u8 - 1)
}

/// Answers one query body against the store. Returns the encoded response
/// body or an error code and message for the ERROR frame.
pub fn answer_query(
    store: &ServerStore,
    server_id: u8,
    body: &[u8],
) -> Result<Encoded, (ErrorCode, String)> {
    let malformed = |e: specpir_core::Error| (ErrorCode::Malformed, e.to_string());
    let protocol = wire::query_protocol(body)
        .map_err(|e| (ErrorCode::UnsupportedProtocol, e.to_string()))?;
    if store.protocol_bitmap() & bit(protocol) == 0 {
        return Err((
            ErrorCode::UnsupportedProtocol,
            format!("this store does not serve {}", protocol.name()),
        ));
    }
    match protocol {
        ProtocolId::Chor => {
            let matrix = store.matrix_for_field_protocols().unwrap();
            let query = wire::decode_chor_query(body).map_err(malformed)?;
            let resp = specpir_core::chor::server_answer(server_id, &query, matrix)
                .map_err(|e| (ErrorCode::Dimension, e.to_string()))?;
            Ok(wire::encode_block_response(&resp))
        }
        ProtocolId::Goldberg => {
            let matrix = store.matrix_for_field_protocols().unwrap();
            let (query, _t) = wire::decode_goldberg_query(body).map_err(malformed)?;
            let resp = specpir_core::goldberg::server_answer(server_id, &query, matrix)
                .map_err(|e| (ErrorCode::Dimension, e.to_string()))?;
            Ok(wire::encode_goldberg_response(&resp))
        }
        ProtocolId::Batch => {
            let matrix = store.matrix_for_field_protocols().unwrap();
            let (query, _t) = wire::decode_batch_query(body).map_err(malformed)?;
            let resp = specpir_core::batch::server_answer(server_id, &query, matrix)
                .map_err(|e| (ErrorCode::Dimension, e.to_string()))?;
            Ok(wire::encode_batch_response(&resp))
        }
        ProtocolId::Raid => {
            let ServerStore::Chunk(chunks) = store else {
                unreachable!("bitmap gate");
            };
            let query = wire::decode_raid_query(body, &chunks.layout)
                .map_err(|e| (ErrorCode::Dimension, e.to_string()))?;
            let resp = specpir_core::raid::server_answer(server_id, &query, chunks)
                .map_err(|e| (ErrorCode::Dimension, e.to_string()))?;
            Ok(wire::encode_block_response(&resp))
        }
    }
}
