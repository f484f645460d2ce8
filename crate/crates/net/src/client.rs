//! The client engine: builds the per-server queries, fans them out
//! concurrently (over TCP or in-process), collects the protocol's quorum,
//! and feeds the responses through record recovery.
//!
//! The in-process loopback transport drives the same encode, dispatch, and
//! decode path as the daemon, so a fetch produces byte-identical payloads
//! either way under the same seed; only the socket is missing.

use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use specpir_core::batch;
use specpir_core::chor;
use specpir_core::gf256::Gf256;
use specpir_core::goldberg::{GoldbergResponse, RecoveryPath, RecoveryReport};
use specpir_core::params::{ProtocolId, ProtocolParams};
use specpir_core::raid::{self, ChunkLayout};
use specpir_core::sharing::EvalPointSet;
use specpir_core::spectrumdb::{GridConfig, SpectrumKey, SpectrumRecord};
use specpir_core::tau;
use specpir_core::wire::{self, Encoded};
use specpir_core::Error as CoreError;

use crate::error::{NetError, Result};
use crate::fault::{FaultInjector, FaultProfile};
use crate::frame::{
    read_frame, write_frame, Frame, HelloAck, MessageKind, DEFAULT_MAX_FRAME, FRAME_HEADER_BYTES,
    PROTOCOL_VERSION,
};
use crate::store::{answer_query, ServerStore};

/// A remote server as the client sees it.
#[derive(Clone, Debug)]
pub struct ServerDescriptor {
    pub address: String,
    pub server_id: u8,
}

/// An in-process server: the daemon's store and fault behavior without the
/// socket.
pub struct LoopbackServer {
    pub server_id: u8,
    pub store: Arc<ServerStore>,
    injector: Mutex<FaultInjector>,
}

impl LoopbackServer {
    pub fn new(server_id: u8, store: Arc<ServerStore>, fault: FaultProfile) -> Self {
        LoopbackServer {
            server_id,
            store,
            injector: Mutex::new(FaultInjector::new(fault)),
        }
    }
}

pub enum Transport {
    Tcp(Vec<ServerDescriptor>),
    Loopback(Vec<LoopbackServer>),
}

impl Transport {
    fn server_ids(&self) -> Vec<u8> {
        match self {
            Transport::Tcp(d) => d.iter().map(|s| s.server_id).collect(),
            Transport::Loopback(s) => s.iter().map(|s| s.server_id).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FetchOptions {
    pub protocol: ProtocolId,
    pub params: ProtocolParams,
    /// Seeds the query randomness; fix it to replay a transcript.
    pub seed: u64,
    pub timeout: Duration,
    pub max_frame: usize,
}

impl FetchOptions {
    pub fn new(protocol: ProtocolId, params: ProtocolParams, seed: u64) -> Self {
        FetchOptions {
            protocol,
            params,
            seed,
            timeout: Duration::from_secs(30),
            max_frame: DEFAULT_MAX_FRAME,
        }
    }
}

/// Exact byte and time accounting for one fetch. Payload counts cover only
/// the protocol-essential bytes (query vectors, seeds, answer blocks);
/// frame headers, identifiers, and handshakes count as framing.
#[derive(Clone, Debug, Default)]
pub struct Transcript {
    pub payload_up: u64,
    pub framing_up: u64,
    pub payload_down: u64,
    pub framing_down: u64,
    pub t_build: Duration,
    pub t_recover: Duration,
    pub t_total: Duration,
    /// Query-to-response round trip per responding server.
    pub server_round_trips: Vec<(u8, Duration)>,
    pub responders: Vec<u8>,
    pub non_responders: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct FetchOutcome {
    /// One record per requested row, in request order.
    pub records: Vec<SpectrumRecord>,
    /// Recovery detail per record (for the XOR protocols: all responders
    /// honest-by-assumption, detection happens via the record checksum).
    pub reports: Vec<RecoveryReport>,
    pub transcript: Transcript,
}

/// Retrieves the record for a key: the inverted index resolves the row,
/// then the row is fetched privately.
pub fn private_fetch(
    key: &SpectrumKey,
    grid: &GridConfig,
    transport: &Transport,
    options: &FetchOptions,
) -> Result<FetchOutcome> {
    let beta = grid.record_index(key).map_err(NetError::Core)?;
    fetch_rows(&[beta], transport, options)
}

/// Retrieves one row (or a batch of rows, protocol permitting) privately.
pub fn fetch_rows(betas: &[u64], transport: &Transport, options: &FetchOptions) -> Result<FetchOutcome> {
    let total_start = Instant::now();
    let params = &options.params;
    params.validate(options.protocol).map_err(NetError::Core)?;
    if options.protocol != ProtocolId::Batch && betas.len() != 1 {
        return Err(NetError::Core(CoreError::InvalidParams(format!(
            "{} carries exactly one row per query, got {}",
            options.protocol.name(),
            betas.len()
        ))));
    }
    let ids = transport.server_ids();
    if ids.len() != params.ell {
        return Err(NetError::Core(CoreError::InvalidParams(format!(
            "{} servers configured but ell = {}",
            ids.len(),
            params.ell
        ))));
    }
    let points =
        EvalPointSet::new(ids.iter().map(|&i| Gf256(i)).collect()).map_err(NetError::Core)?;

    let build_start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(options.seed);
    let bodies = build_queries(options.protocol, params, betas, &points, &mut rng)?;
    let t_build = build_start.elapsed();

    let quorum = match options.protocol {
        ProtocolId::Chor | ProtocolId::Raid => params.ell,
        ProtocolId::Goldberg | ProtocolId::Batch => params.k,
    };

    let mut transcript = Transcript {
        t_build,
        payload_up: bodies.iter().map(|b| b.payload_bytes as u64).sum(),
        framing_up: bodies
            .iter()
            .map(|b| (FRAME_HEADER_BYTES + b.bytes.len() - b.payload_bytes) as u64)
            .sum(),
        ..Transcript::default()
    };

    let gathered = match transport {
        Transport::Loopback(servers) => {
            run_loopback(servers, &bodies, &mut transcript)?
        }
        Transport::Tcp(descriptors) => run_tcp(descriptors, &bodies, options, quorum, &mut transcript)?,
    };
    check_hellos(&gathered, options)?;

    let responded: Vec<&Gathered> = gathered.iter().filter(|g| g.body.is_some()).collect();
    transcript.responders = responded.iter().map(|g| g.server_id).collect();
    transcript.non_responders = gathered
        .iter()
        .filter(|g| g.body.is_none())
        .map(|g| g.server_id)
        .collect();
    if responded.len() < quorum {
        return Err(NetError::QuorumNotReached {
            got: responded.len(),
            need: quorum,
            missing: transcript.non_responders.clone(),
        });
    }
    let processed = &responded[..quorum];
    for g in processed {
        let body = g.body.as_ref().unwrap();
        let payload = payload_len(options.protocol, body.len());
        transcript.payload_down += payload as u64;
        transcript.framing_down += (FRAME_HEADER_BYTES + body.len() - payload) as u64;
        transcript
            .server_round_trips
            .push((g.server_id, g.round_trip));
    }

    let recover_start = Instant::now();
    let (records, reports) = recover(options.protocol, params, processed)?;
    transcript.t_recover = recover_start.elapsed();
    transcript.t_total = total_start.elapsed();
    Ok(FetchOutcome {
        records,
        reports,
        transcript,
    })
}

fn build_queries(
    protocol: ProtocolId,
    params: &ProtocolParams,
    betas: &[u64],
    points: &EvalPointSet,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<Encoded>> {
    let r = params.r;
    let encoded = match protocol {
        ProtocolId::Chor => chor::build_query(betas[0], r, params.ell, rng)
            .map_err(NetError::Core)?
            .vectors
            .iter()
            .map(wire::encode_chor_query)
            .collect(),
        ProtocolId::Goldberg => specpir_core::goldberg::build_queries(betas[0], r, params.t, points, rng)
            .map_err(NetError::Core)?
            .iter()
            .map(|q| wire::encode_goldberg_query(q, params.t))
            .collect(),
        ProtocolId::Batch => batch::build_queries(betas, r, params.t, points, rng)
            .map_err(NetError::Core)?
            .iter()
            .map(|q| wire::encode_batch_query(q, params.t))
            .collect(),
        ProtocolId::Raid => {
            let layout = ChunkLayout::new(params.ell, params.pi, r).map_err(NetError::Core)?;
            raid::build_queries(betas[0], &layout, rng)
                .map_err(NetError::Core)?
                .iter()
                .map(|q| wire::encode_raid_query(q, &layout))
                .collect()
        }
    };
    Ok(encoded)
}

/// Response payload length by protocol, given the body length.
fn payload_len(protocol: ProtocolId, body_len: usize) -> usize {
    match protocol {
        ProtocolId::Chor | ProtocolId::Raid => body_len.saturating_sub(1),
        ProtocolId::Goldberg => body_len.saturating_sub(2),
        ProtocolId::Batch => body_len.saturating_sub(6),
    }
}

struct Gathered {
    server_id: u8,
    ack: Option<HelloAck>,
    body: Option<Vec<u8>>,
    round_trip: Duration,
}

fn check_hellos(gathered: &[Gathered], options: &FetchOptions) -> Result<()> {
    let mut reference: Option<[u8; 32]> = None;
    for g in gathered {
        let Some(ack) = &g.ack else { continue };
        if !ack.supports(options.protocol) {
            return Err(NetError::WrongRole {
                server_id: g.server_id,
            });
        }
        if ack.server_id != g.server_id {
            return Err(NetError::WrongRole {
                server_id: g.server_id,
            });
        }
        // The Goldberg family evaluates at the agreed point alpha_i = i.
        if matches!(options.protocol, ProtocolId::Goldberg | ProtocolId::Batch)
            && ack.alpha != g.server_id
        {
            return Err(NetError::WrongRole {
                server_id: g.server_id,
            });
        }
        match reference {
            None => reference = Some(ack.digest),
            Some(d) if d != ack.digest => return Err(NetError::DigestDisagreement),
            Some(_) => {}
        }
    }
    Ok(())
}

fn run_loopback(
    servers: &[LoopbackServer],
    bodies: &[Encoded],
    transcript: &mut Transcript,
) -> Result<Vec<Gathered>> {
    let hello_wire = FRAME_HEADER_BYTES as u64;
    let ack_wire = (FRAME_HEADER_BYTES + 36) as u64;
    let mut out = Vec::with_capacity(servers.len());
    for (server, body) in servers.iter().zip(bodies) {
        transcript.framing_up += hello_wire;
        transcript.framing_down += ack_wire;
        let ack = HelloAck {
            version: PROTOCOL_VERSION,
            server_id: server.server_id,
            alpha: server.store.alpha(server.server_id),
            protocols: server.store.protocol_bitmap(),
            digest: server.store.content_digest(),
        };
        let started = Instant::now();
        let answer = answer_query(&server.store, server.server_id, &body.bytes);
        let mut gathered = Gathered {
            server_id: server.server_id,
            ack: Some(ack),
            body: None,
            round_trip: Duration::ZERO,
        };
        match answer {
            Ok(mut encoded) => {
                let mut injector = server.injector.lock().unwrap();
                if !injector.should_drop() {
                    injector.corrupt(&mut encoded.bytes, encoded.payload_bytes);
                    let latency = injector.latency();
                    drop(injector);
                    if !latency.is_zero() {
                        thread::sleep(latency);
                    }
                    gathered.round_trip = started.elapsed();
                    gathered.body = Some(encoded.bytes);
                }
            }
            Err((code, message)) => {
                return Err(NetError::Server {
                    server_id: server.server_id,
                    code,
                    message,
                });
            }
        }
        out.push(gathered);
    }
    Ok(out)
}

struct TcpReply {
    index: usize,
    result: Result<(HelloAck, Vec<u8>, Duration)>,
}

fn run_tcp(
    descriptors: &[ServerDescriptor],
    bodies: &[Encoded],
    options: &FetchOptions,
    quorum: usize,
    transcript: &mut Transcript,
) -> Result<Vec<Gathered>> {
    let (tx, rx) = mpsc::channel::<TcpReply>();
    for (index, (desc, body)) in descriptors.iter().zip(bodies).enumerate() {
        let tx = tx.clone();
        let address = desc.address.clone();
        let frame = Frame::new(MessageKind::Query, options.protocol as u8, body.bytes.clone());
        let timeout = options.timeout;
        let max_frame = options.max_frame;
        thread::spawn(move || {
            let result = exchange(&address, frame, timeout, max_frame);
            let _ = tx.send(TcpReply { index, result });
        });
    }
    drop(tx);

    let mut gathered: Vec<Gathered> = descriptors
        .iter()
        .map(|d| Gathered {
            server_id: d.server_id,
            ack: None,
            body: None,
            round_trip: Duration::ZERO,
        })
        .collect();
    let deadline = Instant::now() + options.timeout;
    let mut successes = 0usize;
    let mut settled = 0usize;
    let mut first_error: Option<NetError> = None;
    while settled < descriptors.len() && successes < quorum {
        let remaining = deadline.saturating_duration_since(Instant::now());
        let Ok(reply) = rx.recv_timeout(remaining) else {
            break; // client-side timeout
        };
        settled += 1;
        match reply.result {
            Ok((ack, body, rtt)) => {
                transcript.framing_up += FRAME_HEADER_BYTES as u64; // HELLO
                transcript.framing_down += (FRAME_HEADER_BYTES + 36) as u64; // HELLO_ACK
                let slot = &mut gathered[reply.index];
                slot.ack = Some(ack);
                slot.body = Some(body);
                slot.round_trip = rtt;
                successes += 1;
            }
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    if successes < quorum {
        // Prefer the grounded failure over a bare count when one surfaced.
        if let Some(NetError::Server {
            server_id,
            code,
            message,
        }) = first_error
        {
            return Err(NetError::Server {
                server_id,
                code,
                message,
            });
        }
        let missing = gathered
            .iter()
            .filter(|g| g.body.is_none())
            .map(|g| g.server_id)
            .collect();
        return Err(NetError::QuorumNotReached {
            got: successes,
            need: quorum,
            missing,
        });
    }
    Ok(gathered)
}

fn exchange(
    address: &str,
    query: Frame,
    timeout: Duration,
    max_frame: usize,
) -> Result<(HelloAck, Vec<u8>, Duration)> {
    let addr = address
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| NetError::BadFrame(format!("cannot resolve {address}")))?;
    let mut stream = TcpStream::connect_timeout(&addr, timeout)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;
    stream.set_nodelay(true)?;

    write_frame(&mut stream, &Frame::new(MessageKind::Hello, 0, Vec::new()))?;
    let ack_frame = read_frame(&mut stream, max_frame)?;
    if ack_frame.kind != MessageKind::HelloAck {
        return Err(NetError::BadFrame(format!(
            "expected HELLO_ACK, got {:?}",
            ack_frame.kind
        )));
    }
    let ack = HelloAck::decode(&ack_frame.body)?;

    write_frame(&mut stream, &query)?;
    let started = Instant::now();
    let response = read_frame(&mut stream, max_frame)?;
    let round_trip = started.elapsed();
    match response.kind {
        MessageKind::Response => Ok((ack, response.body, round_trip)),
        MessageKind::Error => {
            let (code, message) = response.error_payload();
            Err(NetError::Server {
                server_id: ack.server_id,
                code,
                message,
            })
        }
        other => Err(NetError::BadFrame(format!(
            "expected RESPONSE, got {other:?}"
        ))),
    }
}

fn recover(
    protocol: ProtocolId,
    params: &ProtocolParams,
    processed: &[&Gathered],
) -> Result<(Vec<SpectrumRecord>, Vec<RecoveryReport>)> {
    match protocol {
        ProtocolId::Chor | ProtocolId::Raid => {
            let responses = processed
                .iter()
                .map(|g| {
                    let resp = wire::decode_block_response(g.body.as_ref().unwrap())?;
                    if resp.block.len() != params.b_bytes() {
                        return Err(CoreError::LengthMismatch {
                            context: "response block",
                            expected: params.b_bytes(),
                            got: resp.block.len(),
                        });
                    }
                    Ok(resp)
                })
                .collect::<specpir_core::Result<Vec<_>>>()
                .map_err(NetError::Core)?;
            let block = chor::reconstruct(&responses, params.ell).map_err(NetError::Core)?;
            let record = SpectrumRecord::from_bytes(block);
            let mut honest: Vec<u8> = processed.iter().map(|g| g.server_id).collect();
            honest.sort_unstable();
            let report = RecoveryReport {
                record: record.clone(),
                honest,
                byzantine: Vec::new(),
                path: RecoveryPath::Easy,
            };
            Ok((vec![record], vec![report]))
        }
        ProtocolId::Goldberg => {
            let responses: Vec<GoldbergResponse> = processed
                .iter()
                .map(|g| wire::decode_goldberg_response(g.body.as_ref().unwrap()))
                .collect::<specpir_core::Result<_>>()
                .map_err(NetError::Core)?;
            let report =
                tau::recover(&responses, params.t, params.tau).map_err(NetError::Core)?;
            Ok((vec![report.record.clone()], vec![report]))
        }
        ProtocolId::Batch => {
            let matrices = processed
                .iter()
                .map(|g| wire::decode_batch_response(g.body.as_ref().unwrap()))
                .collect::<specpir_core::Result<Vec<_>>>()
                .map_err(NetError::Core)?;
            let reports = if params.tau == 0 {
                batch::recover(&matrices, params.t).map_err(NetError::Core)?
            } else {
                // Row-wise recovery at effective degree t + tau.
                let q = matrices[0].values.rows();
                let mut reports = Vec::with_capacity(q);
                for j in 0..q {
                    let row: Vec<GoldbergResponse> = matrices
                        .iter()
                        .map(|m| GoldbergResponse {
                            server_id: m.server_id,
                            alpha: m.alpha,
                            values: m.values.row(j).iter().map(|&v| Gf256(v)).collect(),
                        })
                        .collect();
                    reports.push(
                        tau::recover(&row, params.t, params.tau).map_err(NetError::Core)?,
                    );
                }
                reports
            };
            let records = reports.iter().map(|r| r.record.clone()).collect();
            Ok((records, reports))
        }
    }
}
