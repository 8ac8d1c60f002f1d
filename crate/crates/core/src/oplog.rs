//! Append-only, hash-chained journal of storage operations.
//!
//! Every state-mutating FTL operation appends exactly one entry. Entries are
//! chained with SHA-256 over a canonical byte serialization, so any
//! modification, deletion, insertion or reordering of sealed history is
//! detectable. Sealed segments are the unit shipped to the vault.
//!
//! Canonical entry layout (version 1), all integers big-endian:
//!
//! ```text
//! [0]     format tag   = 0x01
//! [1..9]  seq          u64
//! [9..17] timestamp_ns u64
//! [17]    kind         1=Write 2=Trim 3=GcMove 4=OffloadSealed 5=OffloadAcked
//! [18]    lpa_range present flag (0/1)
//!   +16   start u64, length u64            (if present)
//! [..]    ppa present flag (0/1)
//!   +16   channel u32, chip u32, block u32, page u32   (if present)
//! [..]    payload_digest present flag (0/1)
//!   +32   digest bytes                      (if present)
//! ```
//!
//! `chain_hash = SHA-256(prev_chain_hash || canonical_bytes)`; the genesis
//! entry chains from 32 zero bytes. The wire form of an entry is the
//! canonical bytes followed by the 32-byte chain hash.

use crate::nand::PhysPageAddr;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub type Digest = [u8; 32];
pub type Seq = u64;
pub type SimNs = u64;

pub const GENESIS_HASH: Digest = [0u8; 32];
pub const ENTRY_FORMAT_TAG: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpKind {
    Write,
    Trim,
    GcMove,
    OffloadSealed,
    OffloadAcked,
}

impl OpKind {
    fn code(self) -> u8 {
        match self {
            OpKind::Write => 1,
            OpKind::Trim => 2,
            OpKind::GcMove => 3,
            OpKind::OffloadSealed => 4,
            OpKind::OffloadAcked => 5,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => OpKind::Write,
            2 => OpKind::Trim,
            3 => OpKind::GcMove,
            4 => OpKind::OffloadSealed,
            5 => OpKind::OffloadAcked,
            _ => return None,
        })
    }
}

/// Inclusive start, page count.
pub type LpaRange = (u64, u64);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: Seq,
    pub timestamp: SimNs,
    pub kind: OpKind,
    pub lpa_range: Option<LpaRange>,
    pub ppa: Option<PhysPageAddr>,
    pub payload_digest: Option<Digest>,
    pub chain_hash: Digest,
}

impl LogEntry {
    /// Canonical serialization of everything except the chain hash.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(84);
        out.push(ENTRY_FORMAT_TAG);
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        out.push(self.kind.code());
        match self.lpa_range {
            Some((start, len)) => {
                out.push(1);
                out.extend_from_slice(&start.to_be_bytes());
                out.extend_from_slice(&len.to_be_bytes());
            }
            None => out.push(0),
        }
        match self.ppa {
            Some(a) => {
                out.push(1);
                out.extend_from_slice(&a.channel.to_be_bytes());
                out.extend_from_slice(&a.chip.to_be_bytes());
                out.extend_from_slice(&a.block.to_be_bytes());
                out.extend_from_slice(&a.page.to_be_bytes());
            }
            None => out.push(0),
        }
        match self.payload_digest {
            Some(d) => {
                out.push(1);
                out.extend_from_slice(&d);
            }
            None => out.push(0),
        }
        out
    }

    pub fn expected_chain_hash(&self, prev: &Digest) -> Digest {
        chain_hash(prev, &self.canonical_bytes())
    }

    /// Wire form: canonical bytes followed by the chain hash.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = self.canonical_bytes();
        out.extend_from_slice(&self.chain_hash);
        out
    }

    /// Parses one wire-form entry from the front of `buf`, returning the
    /// entry and the number of bytes consumed.
    pub fn from_wire(buf: &[u8]) -> Result<(Self, usize), LogError> {
        let mut r = Reader::new(buf);
        let tag = r.u8()?;
        if tag != ENTRY_FORMAT_TAG {
            return Err(LogError::BadFormat("unknown entry format tag"));
        }
        let seq = r.u64()?;
        let timestamp = r.u64()?;
        let kind = OpKind::from_code(r.u8()?).ok_or(LogError::BadFormat("unknown op kind"))?;
        let lpa_range = if r.flag()? {
            Some((r.u64()?, r.u64()?))
        } else {
            None
        };
        let ppa = if r.flag()? {
            Some(PhysPageAddr {
                channel: r.u32()?,
                chip: r.u32()?,
                block: r.u32()?,
                page: r.u32()?,
            })
        } else {
            None
        };
        let payload_digest = if r.flag()? { Some(r.digest()?) } else { None };
        let chain_hash = r.digest()?;
        Ok((
            LogEntry {
                seq,
                timestamp,
                kind,
                lpa_range,
                ppa,
                payload_digest,
                chain_hash,
            },
            r.pos,
        ))
    }
}

pub fn chain_hash(prev: &Digest, canonical: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update(prev);
    h.update(canonical);
    h.finalize().into()
}

pub fn page_digest(data: &[u8]) -> Digest {
    Sha256::digest(data).into()
}

/// A frozen, contiguous run of entries; the shippable/verifiable unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogSegment {
    pub segment_id: u64,
    pub first_seq: Seq,
    pub last_seq: Seq,
    /// Chain hash of the first entry's predecessor.
    pub head_hash: Digest,
    pub tail_hash: Digest,
    pub entries: Vec<LogEntry>,
}

pub const SEGMENT_FORMAT_TAG: u8 = 0x01;

impl LogSegment {
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.push(SEGMENT_FORMAT_TAG);
        out.extend_from_slice(&self.segment_id.to_be_bytes());
        out.extend_from_slice(&self.first_seq.to_be_bytes());
        out.extend_from_slice(&self.last_seq.to_be_bytes());
        out.extend_from_slice(&self.head_hash);
        out.extend_from_slice(&self.tail_hash);
        out.extend_from_slice(&(self.entries.len() as u32).to_be_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e.to_wire());
        }
        out
    }

    pub fn from_wire(buf: &[u8]) -> Result<(Self, usize), LogError> {
        let mut r = Reader::new(buf);
        let tag = r.u8()?;
        if tag != SEGMENT_FORMAT_TAG {
            return Err(LogError::BadFormat("unknown segment format tag"));
        }
        let segment_id = r.u64()?;
        let first_seq = r.u64()?;
        let last_seq = r.u64()?;
        let head_hash = r.digest()?;
        let tail_hash = r.digest()?;
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let (e, used) = LogEntry::from_wire(&buf[r.pos..])?;
            r.pos += used;
            entries.push(e);
        }
        Ok((
            LogSegment {
                segment_id,
                first_seq,
                last_seq,
                head_hash,
                tail_hash,
                entries,
            },
            r.pos,
        ))
    }

    /// Recomputes the chain from `head_hash` and checks every stored hash.
    pub fn verify(&self) -> ChainVerdict {
        verify_entries(&self.entries, &self.head_hash)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainVerdict {
    Ok,
    TamperAt(Seq),
}

impl ChainVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, ChainVerdict::Ok)
    }
}

/// Recomputes chain hashes over `entries` starting from `head`, checking seq
/// contiguity as well; reports the first divergence.
pub fn verify_entries(entries: &[LogEntry], head: &Digest) -> ChainVerdict {
    let mut prev = *head;
    let mut expected_seq = entries.first().map(|e| e.seq);
    for e in entries {
        if Some(e.seq) != expected_seq {
            return ChainVerdict::TamperAt(e.seq.min(expected_seq.unwrap_or(e.seq)));
        }
        let want = e.expected_chain_hash(&prev);
        if want != e.chain_hash {
            return ChainVerdict::TamperAt(e.seq);
        }
        prev = e.chain_hash;
        expected_seq = Some(e.seq + 1);
    }
    ChainVerdict::Ok
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LogError {
    #[error("nothing to seal")]
    NothingToSeal,
    #[error("malformed log bytes: {0}")]
    BadFormat(&'static str),
    #[error("truncated log bytes")]
    Truncated,
}

/// Sealing thresholds: a segment closes after this many entries or this much
/// simulated time, whichever comes first.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SealPolicy {
    pub max_entries: usize,
    pub max_span_ns: u64,
}

impl Default for SealPolicy {
    fn default() -> Self {
        SealPolicy {
            max_entries: 1024,
            max_span_ns: 5 * 60 * 1_000_000_000, // 5 simulated minutes
        }
    }
}

/// The device-side journal: one global monotonic sequence, an unsealed tail,
/// and sealed segments awaiting shipment.
pub struct OpLog {
    policy: SealPolicy,
    next_seq: Seq,
    next_segment_id: u64,
    /// Chain hash of the last appended entry (genesis value if none).
    tail_hash: Digest,
    /// Chain hash preceding the first unsealed entry.
    unsealed_head: Digest,
    unsealed: Vec<LogEntry>,
    sealed_unshipped: Vec<LogSegment>,
}

impl OpLog {
    pub fn new(policy: SealPolicy) -> Self {
        OpLog {
            policy,
            next_seq: 1,
            next_segment_id: 1,
            tail_hash: GENESIS_HASH,
            unsealed_head: GENESIS_HASH,
            unsealed: Vec::new(),
            sealed_unshipped: Vec::new(),
        }
    }

    pub fn next_seq(&self) -> Seq {
        self.next_seq
    }

    pub fn last_seq(&self) -> Seq {
        self.next_seq - 1
    }

    pub fn tail_hash(&self) -> Digest {
        self.tail_hash
    }

    pub fn append(
        &mut self,
        kind: OpKind,
        lpa_range: Option<LpaRange>,
        ppa: Option<PhysPageAddr>,
        payload_digest: Option<Digest>,
        timestamp: SimNs,
    ) -> LogEntry {
        let mut entry = LogEntry {
            seq: self.next_seq,
            timestamp,
            kind,
            lpa_range,
            ppa,
            payload_digest,
            chain_hash: GENESIS_HASH,
        };
        entry.chain_hash = entry.expected_chain_hash(&self.tail_hash);
        self.next_seq += 1;
        self.tail_hash = entry.chain_hash;
        self.unsealed.push(entry.clone());
        if self.unsealed.len() >= self.policy.max_entries
            || timestamp.saturating_sub(self.unsealed[0].timestamp) >= self.policy.max_span_ns
        {
            // Threshold sealing never fails: unsealed is non-empty here.
            let _ = self.seal_segment();
        }
        entry
    }

    /// Freezes the unsealed tail into a segment.
    pub fn seal_segment(&mut self) -> Result<&LogSegment, LogError> {
        if self.unsealed.is_empty() {
            return Err(LogError::NothingToSeal);
        }
        let entries = std::mem::take(&mut self.unsealed);
        let seg = LogSegment {
            segment_id: self.next_segment_id,
            first_seq: entries.first().unwrap().seq,
            last_seq: entries.last().unwrap().seq,
            head_hash: self.unsealed_head,
            tail_hash: entries.last().unwrap().chain_hash,
            entries,
        };
        self.next_segment_id += 1;
        self.unsealed_head = seg.tail_hash;
        self.sealed_unshipped.push(seg);
        Ok(self.sealed_unshipped.last().unwrap())
    }

    pub fn has_unsealed(&self) -> bool {
        !self.unsealed.is_empty()
    }

    pub fn unsealed_entries(&self) -> &[LogEntry] {
        &self.unsealed
    }

    pub fn sealed_unshipped(&self) -> &[LogSegment] {
        &self.sealed_unshipped
    }

    /// Removes sealed segments up to and including `last_segment_id` once the
    /// vault has acknowledged a frame containing them.
    pub fn drop_shipped(&mut self, last_segment_id: u64) {
        self.sealed_unshipped
            .retain(|s| s.segment_id > last_segment_id);
    }

    /// Verifies all locally held history (sealed-unshipped then unsealed)
    /// against `expected_head`, the chain hash preceding the first locally
    /// held entry.
    pub fn verify_local(&self, expected_head: &Digest) -> ChainVerdict {
        let mut prev = *expected_head;
        for seg in &self.sealed_unshipped {
            if seg.head_hash != prev {
                return ChainVerdict::TamperAt(seg.first_seq);
            }
            match seg.verify() {
                ChainVerdict::Ok => prev = seg.tail_hash,
                t => return t,
            }
        }
        verify_entries(&self.unsealed, &prev)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], LogError> {
        if self.pos + n > self.buf.len() {
            return Err(LogError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, LogError> {
        Ok(self.take(1)?[0])
    }

    fn flag(&mut self) -> Result<bool, LogError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(LogError::BadFormat("bad presence flag")),
        }
    }

    fn u32(&mut self) -> Result<u32, LogError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, LogError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn digest(&mut self) -> Result<Digest, LogError> {
        Ok(self.take(32)?.try_into().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log() -> OpLog {
        OpLog::new(SealPolicy::default())
    }

    #[test]
    fn genesis_chain_hash() {
        let mut l = log();
        let e = l.append(OpKind::Write, Some((0, 1)), None, Some([7u8; 32]), 10);
        assert_eq!(e.seq, 1);
        // Independent recomputation straight from the definition.
        let mut h = Sha256::new();
        h.update([0u8; 32]);
        h.update(e.canonical_bytes());
        let want: Digest = h.finalize().into();
        assert_eq!(e.chain_hash, want);
    }

    #[test]
    fn second_hash_depends_on_first() {
        let mut a = log();
        let mut b = log();
        a.append(OpKind::Write, Some((0, 1)), None, Some([1u8; 32]), 1);
        b.append(OpKind::Write, Some((0, 1)), None, Some([2u8; 32]), 1);
        let ea = a.append(OpKind::Trim, Some((0, 4)), None, None, 2);
        let eb = b.append(OpKind::Trim, Some((0, 4)), None, None, 2);
        assert_eq!(ea.canonical_bytes(), eb.canonical_bytes());
        assert_ne!(ea.chain_hash, eb.chain_hash);
    }

    #[test]
    fn many_appends_verify_and_match_independent_recomputation() {
        let mut l = OpLog::new(SealPolicy {
            max_entries: usize::MAX,
            max_span_ns: u64::MAX,
        });
        let mut entries = Vec::new();
        for i in 0..10_000u64 {
            entries.push(l.append(
                OpKind::Write,
                Some((i % 64, 1)),
                None,
                Some(page_digest(&i.to_be_bytes())),
                i,
            ));
        }
        assert!(verify_entries(&entries, &GENESIS_HASH).is_ok());
        // Independent recomputation, not via verify_entries.
        let mut prev = GENESIS_HASH;
        for e in &entries {
            let mut h = Sha256::new();
            h.update(prev);
            h.update(e.canonical_bytes());
            let d: Digest = h.finalize().into();
            assert_eq!(d, e.chain_hash);
            prev = d;
        }
    }

    #[test]
    fn seal_basic() {
        let mut l = log();
        for i in 0..3 {
            l.append(OpKind::Write, Some((i, 1)), None, None, i);
        }
        let seg = l.seal_segment().unwrap().clone();
        assert_eq!((seg.first_seq, seg.last_seq), (1, 3));
        assert_eq!(seg.head_hash, GENESIS_HASH);
        assert!(seg.verify().is_ok());
    }

    #[test]
    fn cross_segment_chaining() {
        let mut l = log();
        l.append(OpKind::Write, Some((0, 1)), None, None, 1);
        let s1 = l.seal_segment().unwrap().clone();
        l.append(OpKind::Write, Some((1, 1)), None, None, 2);
        let s2 = l.seal_segment().unwrap().clone();
        assert_eq!(s2.head_hash, s1.tail_hash);
        assert_eq!(s2.segment_id, s1.segment_id + 1);
    }

    #[test]
    fn seal_empty_rejected() {
        let mut l = log();
        assert_eq!(l.seal_segment().err(), Some(LogError::NothingToSeal));
    }

    #[test]
    fn auto_seal_on_entry_count() {
        let mut l = OpLog::new(SealPolicy {
            max_entries: 4,
            max_span_ns: u64::MAX,
        });
        for i in 0..9 {
            l.append(OpKind::Write, Some((i, 1)), None, None, i);
        }
        assert_eq!(l.sealed_unshipped().len(), 2);
        assert_eq!(l.unsealed_entries().len(), 1);
    }

    #[test]
    fn auto_seal_on_time_span() {
        let mut l = OpLog::new(SealPolicy {
            max_entries: usize::MAX,
            max_span_ns: 100,
        });
        l.append(OpKind::Write, Some((0, 1)), None, None, 0);
        l.append(OpKind::Write, Some((1, 1)), None, None, 50);
        assert_eq!(l.sealed_unshipped().len(), 0);
        l.append(OpKind::Write, Some((2, 1)), None, None, 120);
        assert_eq!(l.sealed_unshipped().len(), 1);
    }

    #[test]
    fn tamper_bit_flip_detected() {
        let mut l = log();
        for i in 0..5 {
            l.append(OpKind::Write, Some((i, 1)), None, Some([i as u8; 32]), i);
        }
        let seg = l.seal_segment().unwrap().clone();
        let mut bad = seg.clone();
        bad.entries[2].payload_digest.as_mut().unwrap()[0] ^= 1;
        assert_eq!(bad.verify(), ChainVerdict::TamperAt(3));
    }

    #[test]
    fn tamper_reorder_detected() {
        let mut l = log();
        for i in 0..5 {
            l.append(OpKind::Write, Some((i, 1)), None, Some([i as u8; 32]), i);
        }
        let seg = l.seal_segment().unwrap().clone();
        let mut bad = seg.clone();
        bad.entries.swap(1, 3);
        assert_eq!(bad.verify(), ChainVerdict::TamperAt(2));
    }

    #[test]
    fn tamper_deletion_detected() {
        let mut l = log();
        for i in 0..5 {
            l.append(OpKind::Write, Some((i, 1)), None, None, i);
        }
        let seg = l.seal_segment().unwrap().clone();
        let mut bad = seg.clone();
        bad.entries.remove(1);
        assert!(!bad.verify().is_ok());
    }

    #[test]
    fn entry_wire_round_trip() {
        let mut l = log();
        let e = l.append(
            OpKind::GcMove,
            Some((9, 1)),
            Some(PhysPageAddr {
                channel: 1,
                chip: 0,
                block: 33,
                page: 7,
            }),
            Some([0xabu8; 32]),
            123456789,
        );
        let wire = e.to_wire();
        let (back, used) = LogEntry::from_wire(&wire).unwrap();
        assert_eq!(used, wire.len());
        assert_eq!(back, e);
    }

    #[test]
    fn segment_wire_round_trip() {
        let mut l = log();
        for i in 0..7 {
            l.append(OpKind::Write, Some((i, 1)), None, Some([i as u8; 32]), i * 10);
        }
        let seg = l.seal_segment().unwrap().clone();
        let wire = seg.to_wire();
        let (back, used) = LogSegment::from_wire(&wire).unwrap();
        assert_eq!(used, wire.len());
        assert_eq!(back, seg);
    }

    #[test]
    fn verify_local_spans_sealed_and_unsealed() {
        let mut l = log();
        for i in 0..4 {
            l.append(OpKind::Write, Some((i, 1)), None, None, i);
        }
        l.seal_segment().unwrap();
        l.append(OpKind::Trim, Some((0, 2)), None, None, 9);
        assert!(l.verify_local(&GENESIS_HASH).is_ok());
    }
}
