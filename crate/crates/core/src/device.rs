//! Device orchestrator: couples the FTL with the offload engine and a vault
//! link, pumping offload work cooperatively between host operations. All
//! state transitions are serialized; time is virtual and advances with the
//! timestamps the caller supplies.

use crate::ftl::{ClaimedPage, Ftl, FtlConfig, FtlError, Lpa};
use crate::offload::{build_segment, encode_frame, Backoff, Compression, DeviceKey};
use crate::oplog::{Digest, Seq, SimNs, GENESIS_HASH};
use crate::transport::{LinkError, VaultLink};
use crate::vault::{IngestOutcome, NackReason};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeviceError {
    /// Every block holds live or retained data and the vault cannot take
    /// more; the write is refused rather than destroying history.
    #[error("capacity exhausted: no reclaimable space while the vault is unreachable")]
    CapacityExhausted,
    #[error(transparent)]
    Ftl(#[from] FtlError),
    /// The vault refused a segment for a reason that retrying cannot fix.
    #[error("vault rejected segment {segment_id}: {reason}")]
    VaultRejected { segment_id: u64, reason: String },
}

#[derive(Debug, Clone)]
pub struct DeviceConfig {
    pub ftl: FtlConfig,
    pub key: DeviceKey,
    pub compression: Compression,
    /// Page records per offload segment.
    pub max_pages_per_segment: usize,
}

impl DeviceConfig {
    pub fn new(ftl: FtlConfig, key: DeviceKey) -> Self {
        DeviceConfig {
            ftl,
            key,
            compression: Compression::Lz4,
            max_pages_per_segment: 256,
        }
    }
}

/// A built-and-encoded segment awaiting acknowledgment. The frame bytes are
/// kept verbatim so retries resend identical bytes.
struct InFlight {
    segment_id: u64,
    claims: Vec<ClaimedPage>,
    last_log_segment_id: u64,
    last_tail: Digest,
    frame: Vec<u8>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OffloadStats {
    pub segments_shipped: u64,
    pub pages_offloaded: u64,
    pub send_failures: u64,
    pub bytes_shipped: u64,
    /// Wall-clock time spent building, encrypting, and shipping segments.
    /// The offload engine is its own pipeline stage, so this is kept
    /// separate from host-path compute when modeling service time.
    pub pump_compute_ns: u64,
}

pub struct SsdDevice {
    ftl: Ftl,
    link: Option<Box<dyn VaultLink>>,
    key: DeviceKey,
    compression: Compression,
    max_pages: usize,
    next_segment_id: u64,
    /// Tail hash of the last log segment shipped; continuity anchor for the
    /// next offload segment.
    prev_tail: Digest,
    in_flight: Option<InFlight>,
    backoff: Backoff,
    now: SimNs,
    offload_stats: OffloadStats,
}

impl SsdDevice {
    pub fn new(config: DeviceConfig, link: Option<Box<dyn VaultLink>>) -> Result<Self, FtlError> {
        Ok(SsdDevice {
            ftl: Ftl::new(config.ftl)?,
            link,
            key: config.key,
            compression: config.compression,
            max_pages: config.max_pages_per_segment.max(1),
            next_segment_id: 1,
            prev_tail: GENESIS_HASH,
            in_flight: None,
            backoff: Backoff::new(),
            now: 0,
            offload_stats: OffloadStats::default(),
        })
    }

    pub fn ftl(&self) -> &Ftl {
        &self.ftl
    }

    pub fn ftl_mut(&mut self) -> &mut Ftl {
        &mut self.ftl
    }

    /// Swaps the vault connection, e.g. after the vault service restarts.
    /// In-flight segments are retried over the new link.
    pub fn set_link(&mut self, link: Option<Box<dyn VaultLink>>) {
        self.link = link;
        self.backoff.reset();
    }

    pub fn link_mut(&mut self) -> Option<&mut (dyn VaultLink + 'static)> {
        self.link.as_deref_mut()
    }

    /// Disjoint borrows of the FTL and the link, for recovery paths that
    /// need both at once.
    pub fn parts(&mut self) -> (&Ftl, Option<&mut (dyn VaultLink + 'static)>) {
        (&self.ftl, self.link.as_deref_mut())
    }

    pub fn now(&self) -> SimNs {
        self.now
    }

    pub fn offload_stats(&self) -> OffloadStats {
        self.offload_stats
    }

    fn advance(&mut self, ts: SimNs) {
        self.now = self.now.max(ts);
    }

    pub fn write(&mut self, lpa: Lpa, data: &[u8], ts: SimNs) -> Result<Seq, DeviceError> {
        self.advance(ts);
        loop {
            match self.ftl.write(lpa, data, ts) {
                Ok(seq) => {
                    self.background(ts)?;
                    return Ok(seq);
                }
                Err(FtlError::NoFreePage) => self.make_space(ts)?,
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn read(&mut self, lpa: Lpa, ts: SimNs) -> Result<Option<Vec<u8>>, DeviceError> {
        self.advance(ts);
        Ok(self.ftl.read(lpa)?)
    }

    pub fn trim(&mut self, start: Lpa, len: u64, ts: SimNs) -> Result<Seq, DeviceError> {
        self.advance(ts);
        let seq = self.ftl.trim(start, len, ts)?;
        self.background(ts)?;
        Ok(seq)
    }

    /// Opportunistic housekeeping after a host op: offload past the
    /// watermark (respecting retry backoff), then GC if below the free
    /// watermark.
    fn background(&mut self, ts: SimNs) -> Result<(), DeviceError> {
        if self.ftl.wants_offload() || self.in_flight.is_some() {
            self.pump_offload(ts, false)?;
        }
        if self.ftl.wants_gc() {
            self.ftl.garbage_collect(ts);
        }
        Ok(())
    }

    /// Out of allocatable space: alternate GC and forced offload until a
    /// host write can proceed. Refuses the write (rather than erasing
    /// retained history) if the vault cannot absorb anything.
    fn make_space(&mut self, ts: SimNs) -> Result<(), DeviceError> {
        loop {
            self.ftl.garbage_collect(ts);
            if self.ftl.can_host_alloc() {
                return Ok(());
            }
            if !self.pump_offload(ts, true)? {
                return Err(DeviceError::CapacityExhausted);
            }
        }
    }

    /// Ships at most one segment. Returns true if an Ack was received.
    /// `force` ignores the retry backoff (used under write pressure and in
    /// final drains).
    pub fn pump_offload(&mut self, ts: SimNs, force: bool) -> Result<bool, DeviceError> {
        let started = std::time::Instant::now();
        let result = self.pump_offload_inner(ts, force);
        self.offload_stats.pump_compute_ns += started.elapsed().as_nanos() as u64;
        result
    }

    fn pump_offload_inner(&mut self, ts: SimNs, force: bool) -> Result<bool, DeviceError> {
        self.advance(ts);
        if self.link.is_none() {
            return Ok(false);
        }
        if self.in_flight.is_none() && !self.build_segment(ts) {
            return Ok(false);
        }
        if !force && !self.backoff.ready(self.now) {
            return Ok(false);
        }
        let inf = self.in_flight.as_ref().expect("segment was just built");
        let expected_id = inf.segment_id;
        let link = self.link.as_deref_mut().expect("checked above");
        let outcome = link.ingest(&inf.frame);
        match outcome {
            Ok(IngestOutcome::Ack { segment_id }) if segment_id == expected_id => {
                let inf = self.in_flight.take().unwrap();
                self.ftl.ack_offload(&inf.claims, ts);
                self.ftl.log_mut().drop_shipped(inf.last_log_segment_id);
                self.prev_tail = inf.last_tail;
                self.next_segment_id += 1;
                self.offload_stats.segments_shipped += 1;
                self.offload_stats.pages_offloaded += inf.claims.len() as u64;
                self.offload_stats.bytes_shipped += inf.frame.len() as u64;
                self.backoff.reset();
                Ok(true)
            }
            Ok(IngestOutcome::Ack { segment_id }) => {
                // An ack for some other segment is a protocol violation.
                Err(self.reject(format!("ack for unexpected segment {segment_id}")))
            }
            Ok(IngestOutcome::Nack { reason }) => match reason {
                // The vault is behind (e.g. restored from an older copy) or
                // ahead in a way retries cannot reconcile.
                NackReason::OutOfOrder { expected } => {
                    Err(self.reject(format!("out of order, vault expects {expected}")))
                }
                r => Err(self.reject(format!("{r:?}"))),
            },
            Err(LinkError::Unreachable(_)) => {
                self.offload_stats.send_failures += 1;
                self.backoff.record_failure(self.now);
                Ok(false)
            }
            Err(LinkError::Remote(msg)) => Err(self.reject(msg)),
        }
    }

    fn reject(&mut self, reason: String) -> DeviceError {
        let inf = self.in_flight.take().expect("reject during send");
        self.ftl.rollback_offload(&inf.claims);
        DeviceError::VaultRejected {
            segment_id: inf.segment_id,
            reason,
        }
    }

    /// Claims retained pages, seals the log, and encodes the next segment.
    /// Returns false when there is nothing to ship.
    fn build_segment(&mut self, ts: SimNs) -> bool {
        let nothing_retained = self.ftl.retained_pages() == 0;
        if nothing_retained && self.ftl.log().sealed_unshipped().is_empty() {
            return false;
        }
        let claims = self.ftl.claim_for_offload(self.max_pages);
        self.ftl.note_offload_sealed(claims.len() as u64, ts);
        // Appending the marker may itself have tripped the auto-seal
        // thresholds; only seal explicitly if a tail remains.
        if self.ftl.log().has_unsealed() {
            self.ftl
                .log_mut()
                .seal_segment()
                .expect("unsealed tail is non-empty");
        }
        let log_segments: Vec<_> = self.ftl.log().sealed_unshipped().to_vec();
        let last = log_segments.last().expect("just sealed");
        let (last_log_segment_id, last_tail) = (last.segment_id, last.tail_hash);
        let segment = build_segment(self.next_segment_id, self.prev_tail, &claims, log_segments);
        let frame = encode_frame(&segment, &self.key, self.compression);
        self.in_flight = Some(InFlight {
            segment_id: self.next_segment_id,
            claims,
            last_log_segment_id,
            last_tail,
            frame,
        });
        true
    }

    /// Ships everything currently retained or sealed. Returns true when the
    /// device holds no unshipped history (beyond the open log tail).
    pub fn drain_offload(&mut self, ts: SimNs) -> Result<bool, DeviceError> {
        loop {
            if self.in_flight.is_none()
                && self.ftl.retained_pages() == 0
                && self.ftl.log().sealed_unshipped().is_empty()
            {
                return Ok(true);
            }
            if !self.pump_offload(ts, true)? {
                return Ok(false);
            }
        }
    }

    /// Seals the open log tail (if any) and then drains, so the vault ends
    /// up holding every entry the device ever logged.
    pub fn flush(&mut self, ts: SimNs) -> Result<bool, DeviceError> {
        if self.ftl.log().has_unsealed() {
            self.ftl
                .log_mut()
                .seal_segment()
                .expect("non-empty tail seals");
        }
        self.drain_offload(ts)
    }
}
