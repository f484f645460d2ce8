//! End-to-end transport behavior: wire/loopback parity, quorum semantics
//! under injected faults, byzantine identification, digest consistency,
//! and concurrent sessions against live daemons.

use std::io::Write;
use std::net::TcpStream;
use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use specpir_core::spectrumdb::{generate_database, GridShape};
use specpir_core::{raid, tau, ProtocolId, ProtocolParams};
use specpir_net::frame::{read_frame, write_frame, ErrorCode, Frame, MessageKind};
use specpir_net::store::answer_query;
use specpir_net::{
    fetch_rows, serve, ByzantineMode, FaultProfile, FetchOptions, LoopbackServer, NetError,
    ServerConfig, ServerDescriptor, ServerStore, Transport,
};

const RECORD_BYTES: usize = 24;

fn plain_stores(rows: u32, ell: usize, seed: u64) -> Vec<Arc<ServerStore>> {
    let shape = GridShape::linear(rows);
    let db = generate_database(&shape, RECORD_BYTES, seed);
    (0..ell)
        .map(|_| Arc::new(ServerStore::plain(db.clone(), shape)))
        .collect()
}

fn share_stores(rows: u32, ell: usize, tau_level: usize, seed: u64) -> Vec<Arc<ServerStore>> {
    let shape = GridShape::linear(rows);
    let db = generate_database(&shape, RECORD_BYTES, seed);
    let points = specpir_core::sharing::EvalPointSet::server_indices(ell).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xABCD);
    let set = tau::encode_database(&db, tau_level, &points, &mut rng).unwrap();
    (0..ell)
        .map(|i| {
            Arc::new(ServerStore::Share(specpir_core::tau::ShareStore {
                matrix: set.replicas[i].clone(),
                shape,
                tau: tau_level as u8,
                alpha: points.get(i),
                set_digest: set.set_digest(),
            }))
        })
        .collect()
}

fn chunk_stores(rows: u32, ell: usize, pi: usize, seed: u64) -> Vec<Arc<ServerStore>> {
    let shape = GridShape::linear(rows);
    let db = generate_database(&shape, RECORD_BYTES, seed);
    raid::partition(&db, ell, pi)
        .unwrap()
        .into_iter()
        .map(|c| Arc::new(ServerStore::Chunk(c)))
        .collect()
}

fn loopback(stores: &[Arc<ServerStore>]) -> Transport {
    Transport::Loopback(
        stores
            .iter()
            .enumerate()
            .map(|(i, s)| LoopbackServer::new(i as u8 + 1, Arc::clone(s), FaultProfile::default()))
            .collect(),
    )
}

fn spawn_daemons(stores: &[Arc<ServerStore>]) -> (Vec<specpir_net::ServerHandle>, Transport) {
    let mut handles = Vec::new();
    let mut descriptors = Vec::new();
    for (i, store) in stores.iter().enumerate() {
        let handle = serve(
            (**store).clone(),
            "127.0.0.1:0",
            ServerConfig::new(i as u8 + 1),
        )
        .unwrap();
        descriptors.push(ServerDescriptor {
            address: handle.addr().to_string(),
            server_id: i as u8 + 1,
        });
        handles.push(handle);
    }
    (handles, Transport::Tcp(descriptors))
}

fn options(protocol: ProtocolId, params: ProtocolParams, seed: u64) -> FetchOptions {
    let mut o = FetchOptions::new(protocol, params, seed);
    o.timeout = Duration::from_secs(5);
    o
}

#[test]
fn loopback_and_tcp_agree_for_every_protocol() {
    let rows = 96u32;
    let ell = 3usize;
    let cases: Vec<(ProtocolId, ProtocolParams, Vec<Arc<ServerStore>>, Vec<u64>)> = vec![
        (
            ProtocolId::Chor,
            ProtocolParams::new(ell, rows as usize, RECORD_BYTES),
            plain_stores(rows, ell, 1),
            vec![42],
        ),
        (
            ProtocolId::Goldberg,
            ProtocolParams::new(ell, rows as usize, RECORD_BYTES).with_t(1).with_k(3),
            plain_stores(rows, ell, 2),
            vec![7],
        ),
        (
            ProtocolId::Goldberg,
            ProtocolParams::new(4, rows as usize, RECORD_BYTES)
                .with_t(1)
                .with_tau(1)
                .with_k(4),
            share_stores(rows, 4, 1, 3),
            vec![61],
        ),
        (
            ProtocolId::Batch,
            ProtocolParams::new(ell, rows as usize, RECORD_BYTES).with_t(1).with_k(3),
            plain_stores(rows, ell, 4),
            vec![1, 96, 17, 17],
        ),
        (
            ProtocolId::Raid,
            ProtocolParams::new(ell, rows as usize, RECORD_BYTES).with_pi(2),
            chunk_stores(rows, ell, 2, 5),
            vec![33],
        ),
    ];
    for (protocol, params, stores, betas) in cases {
        let opts = options(protocol, params, 0xFEED ^ protocol as u64);
        let local = fetch_rows(&betas, &loopback(&stores), &opts).unwrap();
        let (_handles, tcp) = spawn_daemons(&stores);
        let remote = fetch_rows(&betas, &tcp, &opts).unwrap();

        assert_eq!(local.records, remote.records, "{}", protocol.name());
        assert_eq!(
            local.reports, remote.reports,
            "{} reports",
            protocol.name()
        );
        assert_eq!(
            (local.transcript.payload_up, local.transcript.payload_down),
            (remote.transcript.payload_up, remote.transcript.payload_down),
            "{} payload accounting",
            protocol.name()
        );
        for record in &local.records {
            assert!(record.verify_checksum());
        }
    }
}

#[test]
fn daemon_responses_are_byte_identical_to_dispatch() {
    // Drive one fixed query body through a raw TCP session and through the
    // in-process dispatch; the response bodies must match byte for byte.
    let stores = plain_stores(64, 1, 9);
    let params = ProtocolParams::new(2, 64, RECORD_BYTES);
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let queries = specpir_core::chor::build_query(5, 64, 2, &mut rng).unwrap();
    let body = specpir_core::wire::encode_chor_query(&queries.vectors[0]);

    let local = answer_query(&stores[0], 1, &body.bytes).unwrap();

    let handle = serve((*stores[0]).clone(), "127.0.0.1:0", ServerConfig::new(1)).unwrap();
    let mut stream = TcpStream::connect(handle.addr()).unwrap();
    write_frame(
        &mut stream,
        &Frame::new(MessageKind::Query, ProtocolId::Chor as u8, body.bytes.clone()),
    )
    .unwrap();
    let reply = read_frame(&mut stream, 1 << 20).unwrap();
    assert_eq!(reply.kind, MessageKind::Response);
    assert_eq!(reply.body, local.bytes);
    let _ = params;
}

#[test]
fn goldberg_rides_out_two_dropped_servers() {
    let stores = plain_stores(64, 6, 11);
    let servers: Vec<LoopbackServer> = stores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let fault = if i < 2 {
                FaultProfile {
                    drop_probability: 1.0,
                    seed: i as u64,
                    ..Default::default()
                }
            } else {
                FaultProfile::default()
            };
            LoopbackServer::new(i as u8 + 1, Arc::clone(s), fault)
        })
        .collect();
    let params = ProtocolParams::new(6, 64, RECORD_BYTES).with_t(2).with_k(4);
    let opts = options(ProtocolId::Goldberg, params, 5);
    let outcome = fetch_rows(&[50], &Transport::Loopback(servers), &opts).unwrap();
    assert!(outcome.records[0].verify_checksum());
    assert_eq!(outcome.transcript.non_responders, vec![1, 2]);
}

#[test]
fn chor_fails_when_one_server_drops() {
    let stores = plain_stores(64, 3, 12);
    let servers: Vec<LoopbackServer> = stores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let fault = if i == 1 {
                FaultProfile {
                    drop_probability: 1.0,
                    seed: 1,
                    ..Default::default()
                }
            } else {
                FaultProfile::default()
            };
            LoopbackServer::new(i as u8 + 1, Arc::clone(s), fault)
        })
        .collect();
    let params = ProtocolParams::new(3, 64, RECORD_BYTES);
    let opts = options(ProtocolId::Chor, params, 6);
    match fetch_rows(&[10], &Transport::Loopback(servers), &opts) {
        Err(NetError::QuorumNotReached { got, need, missing }) => {
            assert_eq!((got, need), (2, 3));
            assert_eq!(missing, vec![2]);
        }
        other => panic!("expected quorum failure, got {other:?}"),
    }
}

#[test]
fn byzantine_server_is_identified() {
    let stores = plain_stores(64, 6, 13);
    let servers: Vec<LoopbackServer> = stores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let fault = if i == 3 {
                FaultProfile {
                    byzantine: ByzantineMode::FlipBytes,
                    seed: 99,
                    ..Default::default()
                }
            } else {
                FaultProfile::default()
            };
            LoopbackServer::new(i as u8 + 1, Arc::clone(s), fault)
        })
        .collect();
    let params = ProtocolParams::new(6, 64, RECORD_BYTES).with_t(2).with_k(6);
    let opts = options(ProtocolId::Goldberg, params, 7);
    let outcome = fetch_rows(&[20], &Transport::Loopback(servers), &opts).unwrap();
    assert!(outcome.records[0].verify_checksum());
    assert_eq!(outcome.reports[0].byzantine, vec![4]);
}

#[test]
fn digest_disagreement_aborts_the_session() {
    let mut stores = plain_stores(64, 3, 14);
    let shape = GridShape::linear(64);
    let other = generate_database(&shape, RECORD_BYTES, 999);
    stores[2] = Arc::new(ServerStore::plain(other, shape));
    let params = ProtocolParams::new(3, 64, RECORD_BYTES);
    let opts = options(ProtocolId::Chor, params, 8);
    match fetch_rows(&[10], &loopback(&stores), &opts) {
        Err(NetError::DigestDisagreement) => {}
        other => panic!("expected digest disagreement, got {other:?}"),
    }
}

#[test]
fn dimension_error_for_wrong_row_count() {
    let stores = plain_stores(64, 2, 15);
    // Query sized for a 32-row database against 64-row stores.
    let params = ProtocolParams::new(2, 32, RECORD_BYTES);
    let opts = options(ProtocolId::Chor, params, 9);
    match fetch_rows(&[5], &loopback(&stores), &opts) {
        Err(NetError::Server { code, .. }) => assert_eq!(code, ErrorCode::Dimension),
        other => panic!("expected dimension error, got {other:?}"),
    }
}

#[test]
fn unknown_version_gets_error_and_connection_survives() {
    let stores = plain_stores(16, 1, 16);
    let handle = serve((*stores[0]).clone(), "127.0.0.1:0", ServerConfig::new(1)).unwrap();
    let mut stream = TcpStream::connect(handle.addr()).unwrap();

    let mut bad = Frame::new(MessageKind::Hello, 0, Vec::new());
    bad.version = 99;
    write_frame(&mut stream, &bad).unwrap();
    let reply = read_frame(&mut stream, 1 << 20).unwrap();
    assert_eq!(reply.kind, MessageKind::Error);
    assert_eq!(reply.error_payload().0, ErrorCode::Version);

    // Same connection still serves a well-formed HELLO.
    write_frame(&mut stream, &Frame::new(MessageKind::Hello, 0, Vec::new())).unwrap();
    let reply = read_frame(&mut stream, 1 << 20).unwrap();
    assert_eq!(reply.kind, MessageKind::HelloAck);
}

#[test]
fn oversized_frame_closes_connection() {
    let stores = plain_stores(16, 1, 17);
    let mut config = ServerConfig::new(1);
    config.max_frame = 128;
    let handle = serve((*stores[0]).clone(), "127.0.0.1:0", config).unwrap();
    let mut stream = TcpStream::connect(handle.addr()).unwrap();
    let huge = Frame::new(MessageKind::Query, 1, vec![0; 4096]);
    write_frame(&mut stream, &huge).unwrap();
    // The server closes without replying; the next read reports EOF.
    stream.flush().unwrap();
    match read_frame(&mut stream, 1 << 20) {
        Err(NetError::Io(_)) => {}
        other => panic!("expected closed connection, got {other:?}"),
    }
}

#[test]
fn thirty_two_parallel_sessions_share_daemons() {
    let stores = plain_stores(128, 3, 18);
    let (_handles, tcp) = spawn_daemons(&stores);
    let Transport::Tcp(descriptors) = &tcp else {
        unreachable!()
    };
    let shape = GridShape::linear(128);
    let db = generate_database(&shape, RECORD_BYTES, 18);
    let mut threads = Vec::new();
    for session in 0..32u64 {
        let descriptors = descriptors.clone();
        let expected = db.record((session % 128) + 1).unwrap();
        threads.push(std::thread::spawn(move || {
            let params = ProtocolParams::new(3, 128, RECORD_BYTES).with_t(1).with_k(3);
            let opts = options(ProtocolId::Goldberg, params, 1000 + session);
            let outcome = fetch_rows(
                &[(session % 128) + 1],
                &Transport::Tcp(descriptors),
                &opts,
            )
            .unwrap();
            assert_eq!(outcome.records[0], expected);
        }));
    }
    for t in threads {
        t.join().unwrap();
    }
}

#[test]
fn tcp_drop_fault_times_out_that_server() {
    let stores = plain_stores(32, 2, 19);
    let mut handles = Vec::new();
    let mut descriptors = Vec::new();
    for (i, store) in stores.iter().enumerate() {
        let fault = if i == 1 {
            FaultProfile {
                drop_probability: 1.0,
                seed: 3,
                ..Default::default()
            }
        } else {
            FaultProfile::default()
        };
        let handle = serve(
            (**store).clone(),
            "127.0.0.1:0",
            ServerConfig::new(i as u8 + 1).with_fault(fault),
        )
        .unwrap();
        descriptors.push(ServerDescriptor {
            address: handle.addr().to_string(),
            server_id: i as u8 + 1,
        });
        handles.push(handle);
    }
    let params = ProtocolParams::new(2, 32, RECORD_BYTES);
    let mut opts = options(ProtocolId::Chor, params, 10);
    opts.timeout = Duration::from_millis(400);
    match fetch_rows(&[4], &Transport::Tcp(descriptors), &opts) {
        Err(NetError::QuorumNotReached { missing, .. }) => assert_eq!(missing, vec![2]),
        other => panic!("expected quorum failure, got {other:?}"),
    }
}
