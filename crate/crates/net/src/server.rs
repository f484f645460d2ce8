//! The server daemon: one store, one listener, one handler thread per
//! connection. The store is immutable and shared read-only; per-connection
//! state stays on its thread. Faults apply after the answer is computed,
//! in query-arrival order, so a seeded profile replays exactly.

use std::io::Write;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use crate::error::{NetError, Result};
use crate::fault::{FaultInjector, FaultProfile};
use crate::frame::{
    read_frame, write_frame, ErrorCode, Frame, HelloAck, MessageKind, DEFAULT_MAX_FRAME,
    PROTOCOL_VERSION,
};
use crate::store::{answer_query, ServerStore};

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub server_id: u8,
    pub fault: FaultProfile,
    pub max_frame: usize,
}

impl ServerConfig {
    pub fn new(server_id: u8) -> Self {
        ServerConfig {
            server_id,
            fault: FaultProfile::default(),
            max_frame: DEFAULT_MAX_FRAME,
        }
    }

    pub fn with_fault(mut self, fault: FaultProfile) -> Self {
        self.fault = fault;
        self
    }
}

struct ServerState {
    store: ServerStore,
    config: ServerConfig,
    injector: Mutex<FaultInjector>,
}

/// A running daemon; dropping the handle (or calling `shutdown`) stops the
/// accept loop.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept_thread: Option<thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds and serves in a background thread; `bind` may use port 0 for an
/// ephemeral port, reported by `ServerHandle::addr`.
pub fn serve(store: ServerStore, bind: &str, config: ServerConfig) -> Result<ServerHandle> {
    let listener = TcpListener::bind(bind)?;
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let stop = Arc::new(AtomicBool::new(false));
    let state = Arc::new(ServerState {
        injector: Mutex::new(FaultInjector::new(config.fault)),
        store,
        config,
    });
    let stop_accept = Arc::clone(&stop);
    let accept_thread = thread::spawn(move || {
        while !stop_accept.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let state = Arc::clone(&state);
                    thread::spawn(move || {
                        let _ = handle_connection(stream, &state);
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    thread::sleep(Duration::from_millis(2));
                }
                Err(_) => break,
            }
        }
    });
    Ok(ServerHandle {
        addr,
        stop,
        accept_thread: Some(accept_thread),
    })
}

fn handle_connection(mut stream: TcpStream, state: &ServerState) -> Result<()> {
    stream.set_nodelay(true)?;
    loop {
        let frame = match read_frame(&mut stream, state.config.max_frame) {
            Ok(f) => f,
            Err(NetError::OversizedFrame { .. }) => return Ok(()), // close
            Err(NetError::BadFrame(msg)) => {
                write_frame(&mut stream, &Frame::error(ErrorCode::Malformed, &msg))?;
                continue;
            }
            Err(_) => return Ok(()), // peer went away
        };
        if frame.version != PROTOCOL_VERSION {
            write_frame(
                &mut stream,
                &Frame::error(
                    ErrorCode::Version,
                    &format!("unsupported version {}", frame.version),
                ),
            )?;
            continue;
        }
        match frame.kind {
            MessageKind::Hello => {
                let ack = HelloAck {
                    version: PROTOCOL_VERSION,
                    server_id: state.config.server_id,
                    alpha: state.store.alpha(state.config.server_id),
                    protocols: state.store.protocol_bitmap(),
                    digest: state.store.content_digest(),
                };
                write_frame(
                    &mut stream,
                    &Frame::new(MessageKind::HelloAck, 0, ack.encode()),
                )?;
            }
            MessageKind::Query => {
                match answer_query(&state.store, state.config.server_id, &frame.body) {
                    Ok(mut encoded) => {
                        let (drop_it, latency) = {
                            let mut injector = state.injector.lock().unwrap();
                            let drop_it = injector.should_drop();
                            if !drop_it {
                                injector.corrupt(&mut encoded.bytes, encoded.payload_bytes);
                            }
                            (drop_it, injector.latency())
                        };
                        if drop_it {
                            continue; // swallow the response
                        }
                        if !latency.is_zero() {
                            thread::sleep(latency);
                        }
                        write_frame(
                            &mut stream,
                            &Frame::new(MessageKind::Response, frame.protocol, encoded.bytes),
                        )?;
                    }
                    Err((code, message)) => {
                        write_frame(&mut stream, &Frame::error(code, &message))?;
                    }
                }
            }
            _ => {
                write_frame(
                    &mut stream,
                    &Frame::error(ErrorCode::Malformed, "unexpected message kind"),
                )?;
            }
        }
        stream.flush()?;
    }
}
