//! Framed binary protocol between the device/tools and the vault service:
//! length-prefixed messages over a reliable byte stream.
//!
//! Every message is `u32 BE length || body`. Request bodies start with a
//! one-byte opcode; response bodies start with a one-byte status.
//!
//! Requests:
//! ```text
//! 0x01 Ingest        frame bytes
//! 0x02 QueryVersions lpa u64, t_start u64, t_end u64
//! 0x03 FetchPage     segment_id u64, record_index u32
//! 0x04 RunDetector   name_len u16, name utf8, from_seq u64, to_seq u64
//! 0x05 Entries       from_seq u64, to_seq u64
//! 0x06 Tail          (empty)
//! 0x07 VerifyAll     (empty)
//! ```
//!
//! Responses:
//! ```text
//! 0x00 Ok    opcode-specific payload
//! 0x01 Nack  reason byte (1 AuthFailed, 2 OutOfOrder + expected u64,
//!            3 ChainMismatch, 4 DigestMismatch + seq u64,
//!            5 DuplicateMismatch, 6 Malformed)
//! 0x02 Error utf8 message
//! ```
//!
//! Ok payloads: Ingest -> acked segment_id u64; QueryVersions -> count u32
//! then (write_seq u64, timestamp u64, segment_id u64, record_index u32) per
//! hit; FetchPage -> lpa u64, write_seq u64, len u32, bytes; RunDetector ->
//! JSON report; Entries -> count u32 then wire-form entries; Tail ->
//! last_segment_id u64, last_tail_hash 32 bytes, last_seq u64; VerifyAll ->
//! 0x00, or 0x01 + seq u64 on tamper.

use crate::oplog::{ChainVerdict, Digest, LogEntry, Seq};
use crate::vault::{IngestOutcome, NackReason, VersionLoc};
use std::io::{Read, Write};
use thiserror::Error;

pub const OP_INGEST: u8 = 0x01;
pub const OP_QUERY_VERSIONS: u8 = 0x02;
pub const OP_FETCH_PAGE: u8 = 0x03;
pub const OP_RUN_DETECTOR: u8 = 0x04;
pub const OP_ENTRIES: u8 = 0x05;
pub const OP_TAIL: u8 = 0x06;
pub const OP_VERIFY_ALL: u8 = 0x07;

pub const ST_OK: u8 = 0x00;
pub const ST_NACK: u8 = 0x01;
pub const ST_ERROR: u8 = 0x02;

/// Messages larger than this are rejected as malformed.
pub const MAX_MESSAGE_LEN: u32 = 256 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed message: {0}")]
    Malformed(&'static str),
}

pub fn write_message(w: &mut impl Write, body: &[u8]) -> Result<(), WireError> {
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(body)?;
    w.flush()?;
    Ok(())
}

pub fn read_message(r: &mut impl Read) -> Result<Vec<u8>, WireError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len);
    if len > MAX_MESSAGE_LEN {
        return Err(WireError::Malformed("message too long"));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    Ok(body)
}

pub fn encode_nack(reason: &NackReason) -> Vec<u8> {
    let mut out = vec![ST_NACK];
    match reason {
        NackReason::AuthFailed => out.push(1),
        NackReason::OutOfOrder { expected } => {
            out.push(2);
            out.extend_from_slice(&expected.to_be_bytes());
        }
        NackReason::ChainMismatch => out.push(3),
        NackReason::DigestMismatch { seq } => {
            out.push(4);
            out.extend_from_slice(&seq.to_be_bytes());
        }
        NackReason::DuplicateMismatch => out.push(5),
        NackReason::Malformed => out.push(6),
    }
    out
}

pub fn decode_ingest_response(body: &[u8]) -> Result<IngestOutcome, WireError> {
    match body.first() {
        Some(&ST_OK) => {
            let id = u64::from_be_bytes(
                body.get(1..9)
                    .ok_or(WireError::Malformed("short ack"))?
                    .try_into()
                    .unwrap(),
            );
            Ok(IngestOutcome::Ack { segment_id: id })
        }
        Some(&ST_NACK) => {
            let reason = match body.get(1) {
                Some(1) => NackReason::AuthFailed,
                Some(2) => NackReason::OutOfOrder {
                    expected: u64::from_be_bytes(
                        body.get(2..10)
                            .ok_or(WireError::Malformed("short nack"))?
                            .try_into()
                            .unwrap(),
                    ),
                },
                Some(3) => NackReason::ChainMismatch,
                Some(4) => NackReason::DigestMismatch {
                    seq: u64::from_be_bytes(
                        body.get(2..10)
                            .ok_or(WireError::Malformed("short nack"))?
                            .try_into()
                            .unwrap(),
                    ),
                },
                Some(5) => NackReason::DuplicateMismatch,
                Some(6) => NackReason::Malformed,
                _ => return Err(WireError::Malformed("unknown nack reason")),
            };
            Ok(IngestOutcome::Nack { reason })
        }
        _ => Err(WireError::Malformed("unknown status")),
    }
}

pub fn encode_version_locs(locs: &[VersionLoc]) -> Vec<u8> {
    let mut out = vec![ST_OK];
    out.extend_from_slice(&(locs.len() as u32).to_be_bytes());
    for l in locs {
        out.extend_from_slice(&l.write_seq.to_be_bytes());
        out.extend_from_slice(&l.timestamp.to_be_bytes());
        out.extend_from_slice(&l.segment_id.to_be_bytes());
        out.extend_from_slice(&l.record_index.to_be_bytes());
    }
    out
}

pub fn decode_version_locs(body: &[u8]) -> Result<Vec<VersionLoc>, WireError> {
    if body.first() != Some(&ST_OK) {
        return Err(WireError::Malformed("not an Ok response"));
    }
    let count = u32::from_be_bytes(
        body.get(1..5)
            .ok_or(WireError::Malformed("short"))?
            .try_into()
            .unwrap(),
    ) as usize;
    let mut locs = Vec::with_capacity(count.min(1 << 20));
    let mut pos = 5;
    for _ in 0..count {
        let rec = body
            .get(pos..pos + 28)
            .ok_or(WireError::Malformed("short loc"))?;
        locs.push(VersionLoc {
            write_seq: u64::from_be_bytes(rec[0..8].try_into().unwrap()),
            timestamp: u64::from_be_bytes(rec[8..16].try_into().unwrap()),
            segment_id: u64::from_be_bytes(rec[16..24].try_into().unwrap()),
            record_index: u32::from_be_bytes(rec[24..28].try_into().unwrap()),
        });
        pos += 28;
    }
    Ok(locs)
}

pub fn encode_entries(entries: &[LogEntry]) -> Vec<u8> {
    let mut out = vec![ST_OK];
    out.extend_from_slice(&(entries.len() as u32).to_be_bytes());
    for e in entries {
        out.extend_from_slice(&e.to_wire());
    }
    out
}

pub fn decode_entries(body: &[u8]) -> Result<Vec<LogEntry>, WireError> {
    if body.first() != Some(&ST_OK) {
        return Err(WireError::Malformed("not an Ok response"));
    }
    let count = u32::from_be_bytes(
        body.get(1..5)
            .ok_or(WireError::Malformed("short"))?
            .try_into()
            .unwrap(),
    ) as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 22));
    let mut pos = 5;
    for _ in 0..count {
        let (e, used) = LogEntry::from_wire(&body[pos..])
            .map_err(|_| WireError::Malformed("bad entry"))?;
        entries.push(e);
        pos += used;
    }
    Ok(entries)
}

pub struct TailInfo {
    pub last_segment_id: u64,
    pub last_tail_hash: Digest,
    pub last_seq: Seq,
}

pub fn encode_tail(t: &TailInfo) -> Vec<u8> {
    let mut out = vec![ST_OK];
    out.extend_from_slice(&t.last_segment_id.to_be_bytes());
    out.extend_from_slice(&t.last_tail_hash);
    out.extend_from_slice(&t.last_seq.to_be_bytes());
    out
}

pub fn decode_tail(body: &[u8]) -> Result<TailInfo, WireError> {
    if body.first() != Some(&ST_OK) || body.len() != 1 + 8 + 32 + 8 {
        return Err(WireError::Malformed("bad tail response"));
    }
    Ok(TailInfo {
        last_segment_id: u64::from_be_bytes(body[1..9].try_into().unwrap()),
        last_tail_hash: body[9..41].try_into().unwrap(),
        last_seq: u64::from_be_bytes(body[41..49].try_into().unwrap()),
    })
}

pub fn encode_verdict(v: &ChainVerdict) -> Vec<u8> {
    match v {
        ChainVerdict::Ok => vec![ST_OK, 0x00],
        ChainVerdict::TamperAt(seq) => {
            let mut out = vec![ST_OK, 0x01];
            out.extend_from_slice(&seq.to_be_bytes());
            out
        }
    }
}

pub fn decode_verdict(body: &[u8]) -> Result<ChainVerdict, WireError> {
    match (body.first(), body.get(1)) {
        (Some(&ST_OK), Some(0)) => Ok(ChainVerdict::Ok),
        (Some(&ST_OK), Some(1)) => Ok(ChainVerdict::TamperAt(u64::from_be_bytes(
            body.get(2..10)
                .ok_or(WireError::Malformed("short verdict"))?
                .try_into()
                .unwrap(),
        ))),
        _ => Err(WireError::Malformed("bad verdict response")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_framing_round_trip() {
        let mut buf = Vec::new();
        write_message(&mut buf, b"hello").unwrap();
        write_message(&mut buf, b"").unwrap();
        let mut r = &buf[..];
        assert_eq!(read_message(&mut r).unwrap(), b"hello");
        assert_eq!(read_message(&mut r).unwrap(), b"");
    }

    #[test]
    fn ingest_response_round_trip() {
        let mut ack = vec![ST_OK];
        ack.extend_from_slice(&9u64.to_be_bytes());
        assert_eq!(
            decode_ingest_response(&ack).unwrap(),
            IngestOutcome::Ack { segment_id: 9 }
        );
        for reason in [
            NackReason::AuthFailed,
            NackReason::OutOfOrder { expected: 4 },
            NackReason::ChainMismatch,
            NackReason::DigestMismatch { seq: 17 },
            NackReason::DuplicateMismatch,
            NackReason::Malformed,
        ] {
            let body = encode_nack(&reason);
            assert_eq!(
                decode_ingest_response(&body).unwrap(),
                IngestOutcome::Nack { reason }
            );
        }
    }

    #[test]
    fn version_locs_round_trip() {
        let locs = vec![
            VersionLoc {
                write_seq: 1,
                timestamp: 2,
                segment_id: 3,
                record_index: 4,
            },
            VersionLoc {
                write_seq: 100,
                timestamp: 200,
                segment_id: 5,
                record_index: 0,
            },
        ];
        assert_eq!(
            decode_version_locs(&encode_version_locs(&locs)).unwrap(),
            locs
        );
    }

    #[test]
    fn verdict_round_trip() {
        assert!(decode_verdict(&encode_verdict(&ChainVerdict::Ok))
            .unwrap()
            .is_ok());
        assert_eq!(
            decode_verdict(&encode_verdict(&ChainVerdict::TamperAt(42))).unwrap(),
            ChainVerdict::TamperAt(42)
        );
    }
}
