//! Remote vault endpoint: ingests frames, verifies continuity and integrity,
//! persists segments durably (temp file + fsync + rename), and serves version
//! queries, page fetches, and pluggable detection hooks.
//!
//! Segment files are the durable truth; the indexes are derived state and are
//! rebuilt by scanning the files on startup.

use crate::ftl::Lpa;
use crate::offload::{decode_frame, DeviceKey, FrameError, OffloadSegment};
use crate::oplog::{page_digest, ChainVerdict, Digest, LogEntry, OpKind, Seq, SimNs, GENESIS_HASH};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NackReason {
    AuthFailed,
    OutOfOrder { expected: u64 },
    ChainMismatch,
    DigestMismatch { seq: Seq },
    DuplicateMismatch,
    Malformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IngestOutcome {
    Ack { segment_id: u64 },
    Nack { reason: NackReason },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionLoc {
    pub write_seq: Seq,
    pub timestamp: SimNs,
    pub segment_id: u64,
    pub record_index: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub detector: String,
    pub suspicious: bool,
    pub evidence: Vec<Seq>,
    pub detail: String,
}

#[derive(Debug, Error)]
pub enum VaultError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unknown segment {0}")]
    UnknownSegment(u64),
    #[error("bad record index {index} for segment {segment_id}")]
    BadIndex { segment_id: u64, index: u32 },
    #[error("unknown detector {0:?}")]
    UnknownDetector(String),
    #[error("vault store corrupt at segment {0}: {1}")]
    Corrupt(u64, String),
    #[error("simulated crash injected")]
    SimulatedCrash,
}

/// Crash injection points inside the atomic persist protocol, for durability
/// testing. The crash happens *after* the named step completes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPoint {
    BeforeTempWrite,
    AfterTempWrite,
    AfterRename,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> VaultError + '_ {
    move |source| VaultError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn segment_file_name(segment_id: u64) -> String {
    format!("seg-{segment_id:08}.bin")
}

/// Detector hooks are read-only procedures over the ingested log. They see
/// the full entry history plus the seq window under scrutiny.
pub type DetectorFn = fn(&[LogEntry], Seq, Seq, &DetectorConfig) -> DetectionReport;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// overwrite-burst: at least this many distinct-lpa invalidations...
    pub burst_lpas: usize,
    /// ...within this simulated-time window.
    pub burst_window_ns: u64,
    /// trim-after-overwrite: a write followed by a trim of the same lpa
    /// within this window counts as evidence.
    pub trim_window_ns: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            burst_lpas: 32,
            burst_window_ns: 10_000_000_000,
            trim_window_ns: 10_000_000_000,
        }
    }
}

pub struct Vault {
    dir: PathBuf,
    key: DeviceKey,
    /// All ingested log entries, contiguous in seq starting at entries_base.
    entries: Vec<LogEntry>,
    entries_base: Seq,
    lpa_index: HashMap<Lpa, Vec<VersionLoc>>,
    seq_index: HashMap<Seq, (u64, u32)>,
    /// SHA-256 of each ingested segment's canonical body, for idempotency.
    body_digests: HashMap<u64, Digest>,
    last_segment_id: u64,
    last_tail_hash: Digest,
    detector_config: DetectorConfig,
    detectors: HashMap<String, DetectorFn>,
    cache: SegmentCache,
}

impl Vault {
    /// Opens (or creates) a vault directory and rebuilds all derived state by
    /// scanning segment files in id order. Stray temp files from a crash are
    /// removed; a gap or corrupt file ends the recovered prefix.
    pub fn open(dir: impl Into<PathBuf>, key: DeviceKey) -> Result<Self, VaultError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut vault = Vault {
            dir: dir.clone(),
            key,
            entries: Vec::new(),
            entries_base: 1,
            lpa_index: HashMap::new(),
            seq_index: HashMap::new(),
            body_digests: HashMap::new(),
            last_segment_id: 0,
            last_tail_hash: GENESIS_HASH,
            detector_config: DetectorConfig::default(),
            detectors: builtin_detectors(),
            cache: SegmentCache::new(8),
        };
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            if entry.path().extension().and_then(|e| e.to_str()) == Some("tmp") {
                let _ = fs::remove_file(entry.path());
            }
        }
        loop {
            let id = vault.last_segment_id + 1;
            let path = dir.join(segment_file_name(id));
            if !path.exists() {
                break;
            }
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let segment = OffloadSegment::from_wire(&bytes)
                .map_err(|e| VaultError::Corrupt(id, e.to_string()))?;
            vault
                .check_segment(&segment)
                .map_err(|r| VaultError::Corrupt(id, format!("{r:?}")))?;
            vault.absorb(&segment, &bytes);
        }
        Ok(vault)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn set_detector_config(&mut self, config: DetectorConfig) {
        self.detector_config = config;
    }

    pub fn register_detector(&mut self, name: &str, f: DetectorFn) {
        self.detectors.insert(name.to_string(), f);
    }

    pub fn last_segment_id(&self) -> u64 {
        self.last_segment_id
    }

    pub fn last_tail_hash(&self) -> Digest {
        self.last_tail_hash
    }

    pub fn last_seq(&self) -> Seq {
        self.entries_base + self.entries.len() as Seq - 1
    }

    pub fn ingest(&mut self, frame: &[u8]) -> Result<IngestOutcome, VaultError> {
        self.ingest_with_crash(frame, None)
    }

    /// Ingest with an optional injected crash; all-or-nothing. An Ack is
    /// returned only after the segment file is durable.
    pub fn ingest_with_crash(
        &mut self,
        frame: &[u8],
        crash: Option<CrashPoint>,
    ) -> Result<IngestOutcome, VaultError> {
        let segment = match decode_frame(frame, &self.key) {
            Ok(s) => s,
            Err(FrameError::AuthenticationFailed) => {
                return Ok(IngestOutcome::Nack {
                    reason: NackReason::AuthFailed,
                })
            }
            Err(_) => {
                return Ok(IngestOutcome::Nack {
                    reason: NackReason::Malformed,
                })
            }
        };
        let body = segment.to_wire();
        if segment.segment_id <= self.last_segment_id {
            // Duplicate delivery of an acked segment: idempotent Ack only if
            // the content is identical; a reused id with new content is an
            // attack and is refused.
            return Ok(match self.body_digests.get(&segment.segment_id) {
                Some(d) if *d == page_digest(&body) => IngestOutcome::Ack {
                    segment_id: segment.segment_id,
                },
                _ => IngestOutcome::Nack {
                    reason: NackReason::DuplicateMismatch,
                },
            });
        }
        if segment.segment_id != self.last_segment_id + 1 {
            return Ok(IngestOutcome::Nack {
                reason: NackReason::OutOfOrder {
                    expected: self.last_segment_id + 1,
                },
            });
        }
        if let Err(reason) = self.check_segment(&segment) {
            return Ok(IngestOutcome::Nack { reason });
        }
        if crash == Some(CrashPoint::BeforeTempWrite) {
            return Err(VaultError::SimulatedCrash);
        }
        let path = self.dir.join(segment_file_name(segment.segment_id));
        let tmp = path.with_extension("bin.tmp");
        {
            let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(&body).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        if crash == Some(CrashPoint::AfterTempWrite) {
            return Err(VaultError::SimulatedCrash);
        }
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        if let Ok(d) = fs::File::open(&self.dir) {
            let _ = d.sync_all();
        }
        self.absorb(&segment, &body);
        if crash == Some(CrashPoint::AfterRename) {
            // Durable but unacknowledged; the device will retry and get the
            // idempotent Ack.
            return Err(VaultError::SimulatedCrash);
        }
        Ok(IngestOutcome::Ack {
            segment_id: segment.segment_id,
        })
    }

    /// Validates chain continuity and page digests without mutating state.
    fn check_segment(&self, segment: &OffloadSegment) -> Result<(), NackReason> {
        if segment.prev_tail_hash != self.last_tail_hash {
            return Err(NackReason::ChainMismatch);
        }
        let mut running = self.last_tail_hash;
        let mut next_seq = self.entries_base + self.entries.len() as Seq;
        for ls in &segment.log_segments {
            if ls.head_hash != running || ls.first_seq != next_seq {
                return Err(NackReason::ChainMismatch);
            }
            match ls.verify() {
                ChainVerdict::Ok => {}
                ChainVerdict::TamperAt(_) => return Err(NackReason::ChainMismatch),
            }
            if ls.entries.last().map(|e| e.chain_hash) != Some(ls.tail_hash) {
                return Err(NackReason::ChainMismatch);
            }
            running = ls.tail_hash;
            next_seq = ls.last_seq + 1;
        }
        // Every page record must match the payload digest its Write entry
        // committed to, whether that entry arrived earlier or in this frame.
        let lookup = |seq: Seq| -> Option<&LogEntry> {
            if seq >= self.entries_base {
                if let Some(e) = self.entries.get((seq - self.entries_base) as usize) {
                    return Some(e);
                }
            }
            segment
                .log_segments
                .iter()
                .find(|ls| ls.first_seq <= seq && seq <= ls.last_seq)
                .map(|ls| &ls.entries[(seq - ls.first_seq) as usize])
        };
        let mut prev_seq = 0;
        for r in &segment.page_records {
            if r.write_seq <= prev_seq {
                return Err(NackReason::ChainMismatch); // time order violated
            }
            prev_seq = r.write_seq;
            let entry = lookup(r.write_seq).ok_or(NackReason::DigestMismatch { seq: r.write_seq })?;
            let ok = entry.kind == OpKind::Write
                && entry.lpa_range.map(|(s, _)| s) == Some(r.lpa)
                && entry.timestamp == r.timestamp
                && entry.payload_digest == Some(page_digest(&r.data));
            if !ok {
                return Err(NackReason::DigestMismatch { seq: r.write_seq });
            }
        }
        Ok(())
    }

    fn absorb(&mut self, segment: &OffloadSegment, body: &[u8]) {
        for ls in &segment.log_segments {
            self.entries.extend(ls.entries.iter().cloned());
            self.last_tail_hash = ls.tail_hash;
        }
        for (i, r) in segment.page_records.iter().enumerate() {
            self.lpa_index.entry(r.lpa).or_default().push(VersionLoc {
                write_seq: r.write_seq,
                timestamp: r.timestamp,
                segment_id: segment.segment_id,
                record_index: i as u32,
            });
            self.seq_index
                .insert(r.write_seq, (segment.segment_id, i as u32));
        }
        self.body_digests
            .insert(segment.segment_id, page_digest(body));
        self.last_segment_id = segment.segment_id;
    }

    /// All offloaded versions of `lpa` within the time range, ascending by
    /// write_seq. Unknown lpa yields an empty list.
    pub fn query_versions(&self, lpa: Lpa, t_start: SimNs, t_end: SimNs) -> Vec<VersionLoc> {
        self.lpa_index
            .get(&lpa)
            .map(|v| {
                v.iter()
                    .filter(|loc| loc.timestamp >= t_start && loc.timestamp <= t_end)
                    .copied()
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Whether the exact version `write_seq` has been acknowledged into the
    /// vault (used by erase-safety instrumentation).
    pub fn holds_version(&self, write_seq: Seq) -> bool {
        self.seq_index.contains_key(&write_seq)
    }

    pub fn fetch_page(
        &mut self,
        segment_id: u64,
        record_index: u32,
    ) -> Result<(Lpa, Seq, Vec<u8>), VaultError> {
        if segment_id == 0 || segment_id > self.last_segment_id {
            return Err(VaultError::UnknownSegment(segment_id));
        }
        let segment = self.load_segment(segment_id)?;
        let r = segment
            .page_records
            .get(record_index as usize)
            .ok_or(VaultError::BadIndex {
                segment_id,
                index: record_index,
            })?;
        Ok((r.lpa, r.write_seq, r.data.clone()))
    }

    fn load_segment(&mut self, segment_id: u64) -> Result<&OffloadSegment, VaultError> {
        if !self.cache.contains(segment_id) {
            let path = self.dir.join(segment_file_name(segment_id));
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let segment = OffloadSegment::from_wire(&bytes)
                .map_err(|e| VaultError::Corrupt(segment_id, e.to_string()))?;
            self.cache.insert(segment_id, segment);
        }
        Ok(self.cache.get(segment_id).unwrap())
    }

    /// Ingested log entries within the seq window (clamped to what the vault
    /// holds).
    pub fn entries_in(&self, from_seq: Seq, to_seq: Seq) -> &[LogEntry] {
        if self.entries.is_empty() || to_seq < self.entries_base {
            return &[];
        }
        let lo = from_seq.max(self.entries_base) - self.entries_base;
        let hi = (to_seq + 1 - self.entries_base).min(self.entries.len() as Seq);
        if lo >= hi {
            return &[];
        }
        &self.entries[lo as usize..hi as usize]
    }

    pub fn run_detector(
        &self,
        name: &str,
        from_seq: Seq,
        to_seq: Seq,
    ) -> Result<DetectionReport, VaultError> {
        let f = self
            .detectors
            .get(name)
            .ok_or_else(|| VaultError::UnknownDetector(name.to_string()))?;
        Ok(f(&self.entries, from_seq, to_seq, &self.detector_config))
    }

    pub fn detector_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.detectors.keys().cloned().collect();
        names.sort();
        names
    }

    /// Full audit: re-reads every segment file from disk, re-verifies the
    /// hash chain from genesis and every page record digest. Reports the
    /// first divergence.
    pub fn verify_all(&self) -> ChainVerdict {
        let mut running = GENESIS_HASH;
        let mut next_seq: Seq = 1;
        let mut digests: HashMap<Seq, (Lpa, SimNs, Digest)> = HashMap::new();
        for id in 1..=self.last_segment_id {
            let path = self.dir.join(segment_file_name(id));
            let Ok(bytes) = fs::read(&path) else {
                return ChainVerdict::TamperAt(next_seq);
            };
            let Ok(segment) = OffloadSegment::from_wire(&bytes) else {
                return ChainVerdict::TamperAt(next_seq);
            };
            if segment.segment_id != id || segment.prev_tail_hash != running {
                return ChainVerdict::TamperAt(next_seq);
            }
            for ls in &segment.log_segments {
                if ls.head_hash != running || ls.first_seq != next_seq {
                    return ChainVerdict::TamperAt(next_seq);
                }
                match ls.verify() {
                    ChainVerdict::Ok => {}
                    t => return t,
                }
                if ls.entries.last().map(|e| e.chain_hash) != Some(ls.tail_hash) {
                    return ChainVerdict::TamperAt(ls.last_seq);
                }
                for e in &ls.entries {
                    if e.kind == OpKind::Write {
                        if let (Some((lpa, _)), Some(d)) = (e.lpa_range, e.payload_digest) {
                            digests.insert(e.seq, (lpa, e.timestamp, d));
                        }
                    }
                }
                running = ls.tail_hash;
                next_seq = ls.last_seq + 1;
            }
            for r in &segment.page_records {
                match digests.get(&r.write_seq) {
                    Some((lpa, ts, d))
                        if *lpa == r.lpa && *ts == r.timestamp && *d == page_digest(&r.data) => {}
                    _ => return ChainVerdict::TamperAt(r.write_seq),
                }
            }
        }
        ChainVerdict::Ok
    }
}

fn builtin_detectors() -> HashMap<String, DetectorFn> {
    // Example detectors only; the protocol deliberately leaves detection
    // pluggable so heavier analyses can run vault-side.
    let mut m: HashMap<String, DetectorFn> = HashMap::new();
    m.insert("overwrite-burst".to_string(), overwrite_burst);
    m.insert("trim-after-overwrite".to_string(), trim_after_overwrite);
    m
}

/// Flags windows where at least `burst_lpas` distinct previously-written lpas
/// are invalidated (overwritten or trimmed) within `burst_window_ns`.
fn overwrite_burst(
    entries: &[LogEntry],
    from_seq: Seq,
    to_seq: Seq,
    cfg: &DetectorConfig,
) -> DetectionReport {
    let mut seen: HashMap<Lpa, ()> = HashMap::new();
    // (timestamp, seq, lpa) of each invalidation inside the window.
    let mut invalidations: Vec<(SimNs, Seq, Lpa)> = Vec::new();
    for e in entries {
        match e.kind {
            OpKind::Write => {
                let (lpa, _) = e.lpa_range.expect("write entries carry an lpa");
                if seen.contains_key(&lpa) && e.seq >= from_seq && e.seq <= to_seq {
                    invalidations.push((e.timestamp, e.seq, lpa));
                }
                seen.insert(lpa, ());
            }
            OpKind::Trim => {
                let (start, len) = e.lpa_range.expect("trim entries carry a range");
                for lpa in start..start + len {
                    if seen.remove(&lpa).is_some() && e.seq >= from_seq && e.seq <= to_seq {
                        invalidations.push((e.timestamp, e.seq, lpa));
                    }
                }
            }
            _ => {}
        }
    }
    invalidations.sort_unstable();
    let mut evidence: Vec<Seq> = Vec::new();
    let mut lo = 0usize;
    for hi in 0..invalidations.len() {
        while invalidations[hi].0 - invalidations[lo].0 > cfg.burst_window_ns {
            lo += 1;
        }
        let distinct: std::collections::HashSet<Lpa> =
            invalidations[lo..=hi].iter().map(|&(_, _, l)| l).collect();
        if distinct.len() >= cfg.burst_lpas {
            evidence.extend(invalidations[lo..=hi].iter().map(|&(_, s, _)| s));
        }
    }
    evidence.sort_unstable();
    evidence.dedup();
    DetectionReport {
        detector: "overwrite-burst".to_string(),
        suspicious: !evidence.is_empty(),
        detail: format!(
            "{} invalidations in window, threshold {} distinct lpas per {}s",
            invalidations.len(),
            cfg.burst_lpas,
            cfg.burst_window_ns / 1_000_000_000
        ),
        evidence,
    }
}

/// Flags trims that arrive shortly after writes touching the same lpas — the
/// write-encrypted-copy-then-trim-original pattern.
fn trim_after_overwrite(
    entries: &[LogEntry],
    from_seq: Seq,
    to_seq: Seq,
    cfg: &DetectorConfig,
) -> DetectionReport {
    let mut last_write: HashMap<Lpa, SimNs> = HashMap::new();
    let mut evidence = Vec::new();
    for e in entries {
        match e.kind {
            OpKind::Write => {
                let (lpa, _) = e.lpa_range.expect("write entries carry an lpa");
                last_write.insert(lpa, e.timestamp);
            }
            OpKind::Trim if e.seq >= from_seq && e.seq <= to_seq => {
                let (start, len) = e.lpa_range.expect("trim entries carry a range");
                let recent = (start..start + len).any(|lpa| {
                    last_write
                        .get(&lpa)
                        .map(|&t| e.timestamp.saturating_sub(t) <= cfg.trim_window_ns)
                        .unwrap_or(false)
                });
                if recent {
                    evidence.push(e.seq);
                }
            }
            _ => {}
        }
    }
    DetectionReport {
        detector: "trim-after-overwrite".to_string(),
        suspicious: !evidence.is_empty(),
        detail: format!(
            "trims within {}s of a write to the same lpa",
            cfg.trim_window_ns / 1_000_000_000
        ),
        evidence,
    }
}

struct SegmentCache {
    capacity: usize,
    order: Vec<u64>,
    map: HashMap<u64, OffloadSegment>,
}

impl SegmentCache {
    fn new(capacity: usize) -> Self {
        SegmentCache {
            capacity,
            order: Vec::new(),
            map: HashMap::new(),
        }
    }

    fn contains(&self, id: u64) -> bool {
        self.map.contains_key(&id)
    }

    fn get(&self, id: u64) -> Option<&OffloadSegment> {
        self.map.get(&id)
    }

    fn insert(&mut self, id: u64, segment: OffloadSegment) {
        if self.map.len() >= self.capacity {
            if let Some(evict) = self.order.first().copied() {
                self.order.remove(0);
                self.map.remove(&evict);
            }
        }
        self.order.push(id);
        self.map.insert(id, segment);
    }
}
