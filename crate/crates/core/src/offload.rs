//! Offload path: bundles retained pages and sealed log segments in time
//! order, compresses and authenticated-encrypts them into frames, and drives
//! the OffloadPending -> SafeToErase transition on vault acknowledgment.
//!
//! Frame wire layout (all integers big-endian):
//!
//! ```text
//! [0..4]   magic "RSSD"
//! [4]      format_version = 0x01
//! [5..13]  segment_id u64
//! [13..25] nonce (4 zero bytes || segment_id u64)
//! [25..33] ciphertext_len u64
//! [..]     ciphertext (AEAD over the compressed canonical segment)
//! [..+16]  auth tag
//! ```
//!
//! The AEAD is ChaCha20-Poly1305 with associated data
//! `magic || version || segment_id`. The plaintext is a one-byte compression
//! id (0 = none, 1 = LZ4) followed by the canonical segment serialization,
//! compressed accordingly.

use crate::ftl::{ClaimedPage, Lpa};
use crate::oplog::{Digest, LogSegment, Seq, SimNs};
use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FRAME_MAGIC: [u8; 4] = *b"RSSD";
pub const FRAME_VERSION: u8 = 0x01;
pub const SEGMENT_BODY_TAG: u8 = 0x01;
pub const AUTH_TAG_LEN: usize = 16;
pub const NONCE_LEN: usize = 12;

/// Symmetric key provisioned at device setup, shared out of band with the
/// vault operator. Never transmitted.
#[derive(Clone)]
pub struct DeviceKey(pub [u8; 32]);

impl std::fmt::Debug for DeviceKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("DeviceKey(..)")
    }
}

impl DeviceKey {
    pub fn from_hex(s: &str) -> Result<Self, FrameError> {
        let bytes = hex::decode(s).map_err(|_| FrameError::BadKey)?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| FrameError::BadKey)?;
        Ok(DeviceKey(arr))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Compression {
    None,
    Lz4,
}

impl Compression {
    fn id(self) -> u8 {
        match self {
            Compression::None => 0,
            Compression::Lz4 => 1,
        }
    }
}

/// One retained page inside an offload segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRecord {
    pub write_seq: Seq,
    pub lpa: Lpa,
    pub timestamp: SimNs,
    pub data: Vec<u8>,
}

/// A time-ordered bundle of retained pages plus sealed log segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffloadSegment {
    pub segment_id: u64,
    /// Chain continuity anchor: tail hash of the last log segment shipped in
    /// the previous offload segment (genesis value for the first).
    pub prev_tail_hash: Digest,
    pub page_records: Vec<PageRecord>,
    pub log_segments: Vec<LogSegment>,
}

impl OffloadSegment {
    /// Canonical serialization, the unit that is compressed and encrypted.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.push(SEGMENT_BODY_TAG);
        out.extend_from_slice(&self.segment_id.to_be_bytes());
        out.extend_from_slice(&self.prev_tail_hash);
        out.extend_from_slice(&(self.page_records.len() as u32).to_be_bytes());
        out.extend_from_slice(&(self.log_segments.len() as u32).to_be_bytes());
        for r in &self.page_records {
            out.extend_from_slice(&r.write_seq.to_be_bytes());
            out.extend_from_slice(&r.lpa.to_be_bytes());
            out.extend_from_slice(&r.timestamp.to_be_bytes());
            out.extend_from_slice(&(r.data.len() as u32).to_be_bytes());
            out.extend_from_slice(&r.data);
        }
        for s in &self.log_segments {
            let wire = s.to_wire();
            out.extend_from_slice(&(wire.len() as u32).to_be_bytes());
            out.extend_from_slice(&wire);
        }
        out
    }

    pub fn from_wire(buf: &[u8]) -> Result<Self, FrameError> {
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8], FrameError> {
            if *pos + n > buf.len() {
                return Err(FrameError::Malformed("truncated segment body"));
            }
            let s = &buf[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        if take(&mut pos, 1)?[0] != SEGMENT_BODY_TAG {
            return Err(FrameError::Malformed("unknown segment body tag"));
        }
        let segment_id = u64::from_be_bytes(take(&mut pos, 8)?.try_into().unwrap());
        let prev_tail_hash: Digest = take(&mut pos, 32)?.try_into().unwrap();
        let n_pages = u32::from_be_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let n_logs = u32::from_be_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut page_records = Vec::with_capacity(n_pages.min(1 << 20));
        for _ in 0..n_pages {
            let write_seq = u64::from_be_bytes(take(&mut pos, 8)?.try_into().unwrap());
            let lpa = u64::from_be_bytes(take(&mut pos, 8)?.try_into().unwrap());
            let timestamp = u64::from_be_bytes(take(&mut pos, 8)?.try_into().unwrap());
            let len = u32::from_be_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let data = take(&mut pos, len)?.to_vec();
            page_records.push(PageRecord {
                write_seq,
                lpa,
                timestamp,
                data,
            });
        }
        let mut log_segments = Vec::with_capacity(n_logs.min(1 << 16));
        for _ in 0..n_logs {
            let len = u32::from_be_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let body = take(&mut pos, len)?;
            let (seg, used) =
                LogSegment::from_wire(body).map_err(|_| FrameError::Malformed("bad log segment"))?;
            if used != len {
                return Err(FrameError::Malformed("log segment length mismatch"));
            }
            log_segments.push(seg);
        }
        if pos != buf.len() {
            return Err(FrameError::Malformed("trailing bytes in segment body"));
        }
        Ok(OffloadSegment {
            segment_id,
            prev_tail_hash,
            page_records,
            log_segments,
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("bad device key")]
    BadKey,
    #[error("authentication failed")]
    AuthenticationFailed,
    #[error("malformed frame: {0}")]
    Malformed(&'static str),
    #[error("unsupported compression id {0}")]
    UnsupportedCompression(u8),
    #[error("frame/segment id mismatch: header {header} body {body}")]
    SegmentIdMismatch { header: u64, body: u64 },
}

fn nonce_for(segment_id: u64) -> [u8; NONCE_LEN] {
    let mut n = [0u8; NONCE_LEN];
    n[4..].copy_from_slice(&segment_id.to_be_bytes());
    n
}

fn associated_data(segment_id: u64) -> [u8; 13] {
    let mut ad = [0u8; 13];
    ad[..4].copy_from_slice(&FRAME_MAGIC);
    ad[4] = FRAME_VERSION;
    ad[5..].copy_from_slice(&segment_id.to_be_bytes());
    ad
}

/// Deterministic frame encoding: the nonce derives from the segment id, so
/// re-encoding an unacked segment for retry yields identical bytes.
pub fn encode_frame(
    segment: &OffloadSegment,
    key: &DeviceKey,
    compression: Compression,
) -> Vec<u8> {
    let body = segment.to_wire();
    let mut plain = Vec::with_capacity(body.len() / 2 + 1);
    plain.push(compression.id());
    match compression {
        Compression::None => plain.extend_from_slice(&body),
        Compression::Lz4 => plain.extend_from_slice(&lz4_flex::compress_prepend_size(&body)),
    }
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key.0));
    let nonce = nonce_for(segment.segment_id);
    let ct = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: &plain,
                aad: &associated_data(segment.segment_id),
            },
        )
        .expect("encryption is infallible for in-memory buffers");
    // ct = ciphertext || 16-byte tag
    let ct_len = ct.len() - AUTH_TAG_LEN;
    let mut out = Vec::with_capacity(33 + ct.len());
    out.extend_from_slice(&FRAME_MAGIC);
    out.push(FRAME_VERSION);
    out.extend_from_slice(&segment.segment_id.to_be_bytes());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&(ct_len as u64).to_be_bytes());
    out.extend_from_slice(&ct);
    out
}

/// Reads just the segment id from a frame header without decrypting.
pub fn peek_segment_id(frame: &[u8]) -> Result<u64, FrameError> {
    if frame.len() < 33 {
        return Err(FrameError::Malformed("frame too short"));
    }
    if frame[..4] != FRAME_MAGIC {
        return Err(FrameError::Malformed("bad magic"));
    }
    Ok(u64::from_be_bytes(frame[5..13].try_into().unwrap()))
}

pub fn decode_frame(frame: &[u8], key: &DeviceKey) -> Result<OffloadSegment, FrameError> {
    if frame.len() < 33 + AUTH_TAG_LEN {
        return Err(FrameError::Malformed("frame too short"));
    }
    if frame[..4] != FRAME_MAGIC {
        return Err(FrameError::Malformed("bad magic"));
    }
    if frame[4] != FRAME_VERSION {
        return Err(FrameError::Malformed("unsupported frame version"));
    }
    let segment_id = u64::from_be_bytes(frame[5..13].try_into().unwrap());
    let nonce: [u8; NONCE_LEN] = frame[13..25].try_into().unwrap();
    if nonce != nonce_for(segment_id) {
        // Nonce is bound to the segment id; anything else is tampering.
        return Err(FrameError::AuthenticationFailed);
    }
    let ct_len = u64::from_be_bytes(frame[25..33].try_into().unwrap()) as usize;
    if frame.len() != 33 + ct_len + AUTH_TAG_LEN {
        return Err(FrameError::Malformed("frame length mismatch"));
    }
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key.0));
    let plain = cipher
        .decrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: &frame[33..],
                aad: &associated_data(segment_id),
            },
        )
        .map_err(|_| FrameError::AuthenticationFailed)?;
    let (comp_id, body) = plain
        .split_first()
        .ok_or(FrameError::Malformed("empty plaintext"))?;
    let body = match comp_id {
        0 => body.to_vec(),
        1 => lz4_flex::decompress_size_prepended(body)
            .map_err(|_| FrameError::Malformed("lz4 decompression failed"))?,
        id => return Err(FrameError::UnsupportedCompression(*id)),
    };
    let segment = OffloadSegment::from_wire(&body)?;
    if segment.segment_id != segment_id {
        return Err(FrameError::SegmentIdMismatch {
            header: segment_id,
            body: segment.segment_id,
        });
    }
    Ok(segment)
}

/// Builds an offload segment from claimed pages and sealed log segments.
/// Page records must already be oldest-first by write_seq.
pub fn build_segment(
    segment_id: u64,
    prev_tail_hash: Digest,
    claims: &[ClaimedPage],
    log_segments: Vec<LogSegment>,
) -> OffloadSegment {
    debug_assert!(claims.windows(2).all(|w| w[0].write_seq < w[1].write_seq));
    OffloadSegment {
        segment_id,
        prev_tail_hash,
        page_records: claims
            .iter()
            .map(|c| PageRecord {
                write_seq: c.write_seq,
                lpa: c.lpa,
                timestamp: c.timestamp,
                data: c.data.clone(),
            })
            .collect(),
        log_segments,
    }
}

/// Exponential retry backoff in simulated time: 1s, 2s, 4s ... capped at 60s.
#[derive(Debug, Clone, Copy)]
pub struct Backoff {
    failures: u32,
    pub next_attempt_at: SimNs,
}

impl Backoff {
    pub const BASE_NS: u64 = 1_000_000_000;
    pub const CAP_NS: u64 = 60 * 1_000_000_000;

    pub fn new() -> Self {
        Backoff {
            failures: 0,
            next_attempt_at: 0,
        }
    }

    pub fn ready(&self, now: SimNs) -> bool {
        now >= self.next_attempt_at
    }

    pub fn record_failure(&mut self, now: SimNs) {
        let delay = Self::BASE_NS
            .saturating_mul(1u64 << self.failures.min(6))
            .min(Self::CAP_NS);
        self.failures = self.failures.saturating_add(1);
        self.next_attempt_at = now + delay;
    }

    pub fn reset(&mut self) {
        self.failures = 0;
        self.next_attempt_at = 0;
    }
}

impl Default for Backoff {
    fn default() -> Self {
        Self::new()
    }
}
