//! Vault connectivity: a `VaultLink` abstraction over the operations the
//! device and tooling need, with an in-process implementation (plus fault
//! injection knobs for tests) and a TCP client/server pair speaking the
//! framed protocol in `wire`.

use crate::ftl::Lpa;
use crate::oplog::{ChainVerdict, LogEntry, Seq, SimNs};
use crate::vault::{CrashPoint, DetectionReport, IngestOutcome, Vault, VaultError, VersionLoc};
use crate::wire::{self, TailInfo, WireError};
use std::cell::{Cell, RefCell};
use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::rc::Rc;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinkError {
    /// The vault could not be reached (or the response was lost); the caller
    /// should back off and retry.
    #[error("vault unreachable: {0}")]
    Unreachable(String),
    /// The vault answered but reported an internal failure.
    #[error("vault error: {0}")]
    Remote(String),
}

pub trait VaultLink {
    fn ingest(&mut self, frame: &[u8]) -> Result<IngestOutcome, LinkError>;
    fn query_versions(
        &mut self,
        lpa: Lpa,
        t_start: SimNs,
        t_end: SimNs,
    ) -> Result<Vec<VersionLoc>, LinkError>;
    fn fetch_page(
        &mut self,
        segment_id: u64,
        record_index: u32,
    ) -> Result<(Lpa, Seq, Vec<u8>), LinkError>;
    fn entries_in(&mut self, from_seq: Seq, to_seq: Seq) -> Result<Vec<LogEntry>, LinkError>;
    fn tail(&mut self) -> Result<TailInfo, LinkError>;
    fn run_detector(
        &mut self,
        name: &str,
        from_seq: Seq,
        to_seq: Seq,
    ) -> Result<DetectionReport, LinkError>;
    fn verify_all(&mut self) -> Result<ChainVerdict, LinkError>;
}

/// Scriptable failures for an `InProcLink`; tests keep a clone of the
/// handle and flip these while the device runs.
#[derive(Default)]
pub struct FaultPlan {
    /// Next N ingests fail without the frame ever reaching the vault.
    pub drop_requests: Cell<u32>,
    /// Next N ingests reach the vault but the response is lost.
    pub drop_responses: Cell<u32>,
    /// One-shot crash injection inside the next ingest's persist path.
    pub crash_next: Cell<Option<CrashPoint>>,
}

/// Direct in-process link to a vault, with optional fault injection so tests
/// can script unreachable windows, lost acknowledgements, and crashes.
pub struct InProcLink {
    vault: Rc<RefCell<Vault>>,
    faults: Rc<FaultPlan>,
}

impl InProcLink {
    pub fn new(vault: Rc<RefCell<Vault>>) -> Self {
        InProcLink {
            vault,
            faults: Rc::new(FaultPlan::default()),
        }
    }

    pub fn with_faults(vault: Rc<RefCell<Vault>>, faults: Rc<FaultPlan>) -> Self {
        InProcLink { vault, faults }
    }

    pub fn vault(&self) -> Rc<RefCell<Vault>> {
        Rc::clone(&self.vault)
    }
}

fn remote(e: VaultError) -> LinkError {
    LinkError::Remote(e.to_string())
}

impl VaultLink for InProcLink {
    fn ingest(&mut self, frame: &[u8]) -> Result<IngestOutcome, LinkError> {
        let dropped = self.faults.drop_requests.get();
        if dropped > 0 {
            self.faults.drop_requests.set(dropped - 1);
            return Err(LinkError::Unreachable("request dropped".into()));
        }
        let crash = self.faults.crash_next.take();
        let outcome = self.vault.borrow_mut().ingest_with_crash(frame, crash);
        match outcome {
            Err(VaultError::SimulatedCrash) => {
                Err(LinkError::Unreachable("vault crashed mid-ingest".into()))
            }
            Err(e) => Err(remote(e)),
            Ok(outcome) => {
                let lost = self.faults.drop_responses.get();
                if lost > 0 {
                    self.faults.drop_responses.set(lost - 1);
                    return Err(LinkError::Unreachable("response dropped".into()));
                }
                Ok(outcome)
            }
        }
    }

    fn query_versions(
        &mut self,
        lpa: Lpa,
        t_start: SimNs,
        t_end: SimNs,
    ) -> Result<Vec<VersionLoc>, LinkError> {
        Ok(self.vault.borrow().query_versions(lpa, t_start, t_end))
    }

    fn fetch_page(
        &mut self,
        segment_id: u64,
        record_index: u32,
    ) -> Result<(Lpa, Seq, Vec<u8>), LinkError> {
        self.vault
            .borrow_mut()
            .fetch_page(segment_id, record_index)
            .map_err(remote)
    }

    fn entries_in(&mut self, from_seq: Seq, to_seq: Seq) -> Result<Vec<LogEntry>, LinkError> {
        Ok(self.vault.borrow().entries_in(from_seq, to_seq).to_vec())
    }

    fn tail(&mut self) -> Result<TailInfo, LinkError> {
        let v = self.vault.borrow();
        Ok(TailInfo {
            last_segment_id: v.last_segment_id(),
            last_tail_hash: v.last_tail_hash(),
            last_seq: v.last_seq(),
        })
    }

    fn run_detector(
        &mut self,
        name: &str,
        from_seq: Seq,
        to_seq: Seq,
    ) -> Result<DetectionReport, LinkError> {
        self.vault
            .borrow()
            .run_detector(name, from_seq, to_seq)
            .map_err(remote)
    }

    fn verify_all(&mut self) -> Result<ChainVerdict, LinkError> {
        Ok(self.vault.borrow().verify_all())
    }
}

/// TCP client; connects lazily and reconnects after any transport error.
pub struct TcpLink {
    addr: SocketAddr,
    stream: Option<TcpStream>,
}

impl TcpLink {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, LinkError> {
        let addr = addr
            .to_socket_addrs()
            .map_err(|e| LinkError::Unreachable(e.to_string()))?
            .next()
            .ok_or_else(|| LinkError::Unreachable("no address".into()))?;
        Ok(TcpLink { addr, stream: None })
    }

    fn round_trip(&mut self, request: &[u8]) -> Result<Vec<u8>, LinkError> {
        if self.stream.is_none() {
            self.stream = Some(
                TcpStream::connect(self.addr)
                    .map_err(|e| LinkError::Unreachable(e.to_string()))?,
            );
        }
        let stream = self.stream.as_mut().unwrap();
        let result = (|| -> Result<Vec<u8>, WireError> {
            wire::write_message(stream, request)?;
            wire::read_message(stream)
        })();
        match result {
            Ok(body) => {
                if body.first() == Some(&wire::ST_ERROR) {
                    let msg = String::from_utf8_lossy(&body[1..]).into_owned();
                    return Err(LinkError::Remote(msg));
                }
                Ok(body)
            }
            Err(e) => {
                // Drop the connection; the next call reconnects.
                self.stream = None;
                Err(LinkError::Unreachable(e.to_string()))
            }
        }
    }
}

fn malformed(e: WireError) -> LinkError {
    LinkError::Remote(e.to_string())
}

impl VaultLink for TcpLink {
    fn ingest(&mut self, frame: &[u8]) -> Result<IngestOutcome, LinkError> {
        let mut req = Vec::with_capacity(1 + frame.len());
        req.push(wire::OP_INGEST);
        req.extend_from_slice(frame);
        let body = self.round_trip(&req)?;
        wire::decode_ingest_response(&body).map_err(malformed)
    }

    fn query_versions(
        &mut self,
        lpa: Lpa,
        t_start: SimNs,
        t_end: SimNs,
    ) -> Result<Vec<VersionLoc>, LinkError> {
        let mut req = vec![wire::OP_QUERY_VERSIONS];
        req.extend_from_slice(&lpa.to_be_bytes());
        req.extend_from_slice(&t_start.to_be_bytes());
        req.extend_from_slice(&t_end.to_be_bytes());
        let body = self.round_trip(&req)?;
        wire::decode_version_locs(&body).map_err(malformed)
    }

    fn fetch_page(
        &mut self,
        segment_id: u64,
        record_index: u32,
    ) -> Result<(Lpa, Seq, Vec<u8>), LinkError> {
        let mut req = vec![wire::OP_FETCH_PAGE];
        req.extend_from_slice(&segment_id.to_be_bytes());
        req.extend_from_slice(&record_index.to_be_bytes());
        let body = self.round_trip(&req)?;
        if body.first() != Some(&wire::ST_OK) || body.len() < 21 {
            return Err(LinkError::Remote("bad fetch response".into()));
        }
        let lpa = u64::from_be_bytes(body[1..9].try_into().unwrap());
        let seq = u64::from_be_bytes(body[9..17].try_into().unwrap());
        let len = u32::from_be_bytes(body[17..21].try_into().unwrap()) as usize;
        if body.len() != 21 + len {
            return Err(LinkError::Remote("bad fetch length".into()));
        }
        Ok((lpa, seq, body[21..].to_vec()))
    }

    fn entries_in(&mut self, from_seq: Seq, to_seq: Seq) -> Result<Vec<LogEntry>, LinkError> {
        let mut req = vec![wire::OP_ENTRIES];
        req.extend_from_slice(&from_seq.to_be_bytes());
        req.extend_from_slice(&to_seq.to_be_bytes());
        let body = self.round_trip(&req)?;
        wire::decode_entries(&body).map_err(malformed)
    }

    fn tail(&mut self) -> Result<TailInfo, LinkError> {
        let body = self.round_trip(&[wire::OP_TAIL])?;
        wire::decode_tail(&body).map_err(malformed)
    }

    fn run_detector(
        &mut self,
        name: &str,
        from_seq: Seq,
        to_seq: Seq,
    ) -> Result<DetectionReport, LinkError> {
        let name_bytes = name.as_bytes();
        let mut req = vec![wire::OP_RUN_DETECTOR];
        req.extend_from_slice(&(name_bytes.len() as u16).to_be_bytes());
        req.extend_from_slice(name_bytes);
        req.extend_from_slice(&from_seq.to_be_bytes());
        req.extend_from_slice(&to_seq.to_be_bytes());
        let body = self.round_trip(&req)?;
        if body.first() != Some(&wire::ST_OK) {
            return Err(LinkError::Remote("bad detector response".into()));
        }
        serde_json::from_slice(&body[1..]).map_err(|e| LinkError::Remote(e.to_string()))
    }

    fn verify_all(&mut self) -> Result<ChainVerdict, LinkError> {
        let body = self.round_trip(&[wire::OP_VERIFY_ALL])?;
        wire::decode_verdict(&body).map_err(malformed)
    }
}

/// Blocking vault service over TCP. One thread per connection; the vault
/// itself is serialized behind a mutex.
pub struct VaultServer {
    listener: TcpListener,
    vault: Arc<Mutex<Vault>>,
    shutdown: Arc<AtomicBool>,
}

impl VaultServer {
    pub fn bind(addr: impl ToSocketAddrs, vault: Vault) -> std::io::Result<Self> {
        Ok(VaultServer {
            listener: TcpListener::bind(addr)?,
            vault: Arc::new(Mutex::new(vault)),
            shutdown: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("listener has an address")
    }

    pub fn vault(&self) -> Arc<Mutex<Vault>> {
        Arc::clone(&self.vault)
    }

    /// Handle returned to tests so they can stop a server spawned on a
    /// background thread.
    pub fn shutdown_handle(&self) -> ShutdownHandle {
        ShutdownHandle {
            flag: Arc::clone(&self.shutdown),
            addr: self.local_addr(),
        }
    }

    /// Accept loop; returns when the shutdown handle fires.
    pub fn serve(self) -> std::io::Result<()> {
        for stream in self.listener.incoming() {
            if self.shutdown.load(Ordering::SeqCst) {
                break;
            }
            let stream = stream?;
            let vault = Arc::clone(&self.vault);
            std::thread::spawn(move || {
                let _ = serve_connection(stream, vault);
            });
        }
        Ok(())
    }
}

pub struct ShutdownHandle {
    flag: Arc<AtomicBool>,
    addr: SocketAddr,
}

impl ShutdownHandle {
    pub fn shutdown(&self) {
        self.flag.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
    }
}

fn serve_connection(stream: TcpStream, vault: Arc<Mutex<Vault>>) -> Result<(), WireError> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    loop {
        let request = match wire::read_message(&mut reader) {
            Ok(r) => r,
            Err(_) => return Ok(()), // peer hung up
        };
        let response = handle_request(&request, &vault);
        wire::write_message(&mut writer, &response)?;
    }
}

fn error_response(msg: &str) -> Vec<u8> {
    let mut out = vec![wire::ST_ERROR];
    out.extend_from_slice(msg.as_bytes());
    out
}

fn handle_request(request: &[u8], vault: &Arc<Mutex<Vault>>) -> Vec<u8> {
    let Some((&op, rest)) = request.split_first() else {
        return error_response("empty request");
    };
    let mut vault = vault.lock().expect("vault lock poisoned");
    match op {
        wire::OP_INGEST => match vault.ingest(rest) {
            Ok(IngestOutcome::Ack { segment_id }) => {
                let mut out = vec![wire::ST_OK];
                out.extend_from_slice(&segment_id.to_be_bytes());
                out
            }
            Ok(IngestOutcome::Nack { reason }) => wire::encode_nack(&reason),
            Err(e) => error_response(&e.to_string()),
        },
        wire::OP_QUERY_VERSIONS => {
            if rest.len() != 24 {
                return error_response("bad query request");
            }
            let lpa = u64::from_be_bytes(rest[0..8].try_into().unwrap());
            let t0 = u64::from_be_bytes(rest[8..16].try_into().unwrap());
            let t1 = u64::from_be_bytes(rest[16..24].try_into().unwrap());
            wire::encode_version_locs(&vault.query_versions(lpa, t0, t1))
        }
        wire::OP_FETCH_PAGE => {
            if rest.len() != 12 {
                return error_response("bad fetch request");
            }
            let segment_id = u64::from_be_bytes(rest[0..8].try_into().unwrap());
            let index = u32::from_be_bytes(rest[8..12].try_into().unwrap());
            match vault.fetch_page(segment_id, index) {
                Ok((lpa, seq, data)) => {
                    let mut out = vec![wire::ST_OK];
                    out.extend_from_slice(&lpa.to_be_bytes());
                    out.extend_from_slice(&seq.to_be_bytes());
                    out.extend_from_slice(&(data.len() as u32).to_be_bytes());
                    out.extend_from_slice(&data);
                    out
                }
                Err(e) => error_response(&e.to_string()),
            }
        }
        wire::OP_RUN_DETECTOR => {
            if rest.len() < 2 {
                return error_response("bad detector request");
            }
            let name_len = u16::from_be_bytes(rest[0..2].try_into().unwrap()) as usize;
            if rest.len() != 2 + name_len + 16 {
                return error_response("bad detector request");
            }
            let Ok(name) = std::str::from_utf8(&rest[2..2 + name_len]) else {
                return error_response("detector name is not utf8");
            };
            let from = u64::from_be_bytes(rest[2 + name_len..10 + name_len].try_into().unwrap());
            let to = u64::from_be_bytes(rest[10 + name_len..18 + name_len].try_into().unwrap());
            match vault.run_detector(name, from, to) {
                Ok(report) => {
                    let mut out = vec![wire::ST_OK];
                    out.extend_from_slice(&serde_json::to_vec(&report).expect("report serializes"));
                    out
                }
                Err(e) => error_response(&e.to_string()),
            }
        }
        wire::OP_ENTRIES => {
            if rest.len() != 16 {
                return error_response("bad entries request");
            }
            let from = u64::from_be_bytes(rest[0..8].try_into().unwrap());
            let to = u64::from_be_bytes(rest[8..16].try_into().unwrap());
            wire::encode_entries(vault.entries_in(from, to))
        }
        wire::OP_TAIL => wire::encode_tail(&TailInfo {
            last_segment_id: vault.last_segment_id(),
            last_tail_hash: vault.last_tail_hash(),
            last_seq: vault.last_seq(),
        }),
        wire::OP_VERIFY_ALL => wire::encode_verdict(&vault.verify_all()),
        _ => error_response("unknown opcode"),
    }
}
