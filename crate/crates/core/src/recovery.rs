//! Point-in-time recovery and forensic reconstruction: merges the device's
//! locally retained versions with the vault's offloaded history into
//! per-lpa version chains, restores any lpa range to an earlier moment, and
//! rebuilds a verified evidence chain over a seq window.

use crate::ftl::{Ftl, Lpa};
use crate::oplog::{
    page_digest, verify_entries, ChainVerdict, Digest, LogEntry, OpKind, Seq, SimNs, GENESIS_HASH,
};
use crate::transport::{LinkError, VaultLink};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error("lpa {0} out of range (device has {1} logical pages)")]
    OutOfRange(Lpa, u64),
    #[error("version (lpa {lpa}, seq {seq}) is not held locally or in the vault")]
    MissingVersion { lpa: Lpa, seq: Seq },
    #[error("vault link required but not available")]
    VaultUnavailable,
    #[error("vault link failed: {0}")]
    Link(String),
}

impl From<LinkError> for RecoveryError {
    fn from(e: LinkError) -> Self {
        RecoveryError::Link(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VersionLocation {
    /// Still readable on device flash.
    Local { flat_ppa: u32 },
    /// Offloaded; fetchable from the vault.
    Remote { segment_id: u64, record_index: u32 },
    /// A trim that unmapped this lpa (no data).
    TrimMarker,
}

#[derive(Debug, Clone, Serialize)]
pub struct VersionEvent {
    pub write_seq: Seq,
    pub timestamp: SimNs,
    pub digest: Option<Digest>,
    pub location: VersionLocation,
}

/// Complete per-lpa history, ascending by seq. Versions held both locally
/// and in the vault appear once, preferring the local copy.
#[derive(Debug, Clone, Serialize)]
pub struct VersionChain {
    pub lpa: Lpa,
    pub events: Vec<VersionEvent>,
}

pub fn backtrack<L: VaultLink + ?Sized>(
    ftl: &Ftl,
    link: Option<&mut L>,
    lpa: Lpa,
) -> Result<VersionChain, RecoveryError> {
    if lpa >= ftl.logical_pages() {
        return Err(RecoveryError::OutOfRange(lpa, ftl.logical_pages()));
    }
    let mut events: BTreeMap<Seq, VersionEvent> = BTreeMap::new();
    if let Some(link) = link {
        for loc in link.query_versions(lpa, 0, u64::MAX)? {
            events.insert(
                loc.write_seq,
                VersionEvent {
                    write_seq: loc.write_seq,
                    timestamp: loc.timestamp,
                    digest: None,
                    location: VersionLocation::Remote {
                        segment_id: loc.segment_id,
                        record_index: loc.record_index,
                    },
                },
            );
        }
    }
    for v in ftl.local_chain(lpa) {
        events.insert(
            v.write_seq,
            VersionEvent {
                write_seq: v.write_seq,
                timestamp: v.timestamp,
                digest: Some(v.digest),
                location: VersionLocation::Local { flat_ppa: v.flat_ppa },
            },
        );
    }
    for &(seq, ts) in ftl.trim_events(lpa) {
        events.insert(
            seq,
            VersionEvent {
                write_seq: seq,
                timestamp: ts,
                digest: None,
                location: VersionLocation::TrimMarker,
            },
        );
    }
    Ok(VersionChain {
        lpa,
        events: events.into_values().collect(),
    })
}

/// Fetches the stored bytes behind a Write event, wherever they live.
pub fn fetch_event_bytes<L: VaultLink + ?Sized>(
    ftl: &Ftl,
    link: Option<&mut L>,
    lpa: Lpa,
    event: &VersionEvent,
) -> Result<Vec<u8>, RecoveryError> {
    match event.location {
        VersionLocation::Local { flat_ppa } => {
            let meta = ftl.page_meta(flat_ppa);
            if meta.lpa != Some(lpa) || meta.write_seq != event.write_seq {
                return Err(RecoveryError::MissingVersion {
                    lpa,
                    seq: event.write_seq,
                });
            }
            let addr = ftl.config().geometry.addr_of_flat(flat_ppa);
            Ok(ftl
                .nand()
                .read_page(addr)
                .expect("local versions are programmed")
                .to_vec())
        }
        VersionLocation::Remote {
            segment_id,
            record_index,
        } => {
            let link = link.ok_or(RecoveryError::VaultUnavailable)?;
            let (got_lpa, got_seq, data) = link.fetch_page(segment_id, record_index)?;
            if got_lpa != lpa || got_seq != event.write_seq {
                return Err(RecoveryError::MissingVersion {
                    lpa,
                    seq: event.write_seq,
                });
            }
            Ok(data)
        }
        VersionLocation::TrimMarker => Err(RecoveryError::MissingVersion {
            lpa,
            seq: event.write_seq,
        }),
    }
}

/// Restores each lpa in `[start, start+len)` to its content as of `as_of`
/// (inclusive). `None` means the lpa was unmapped at that moment, either
/// never written or trimmed. Ties between a write and the instant itself
/// resolve to the latest event at or before `as_of`, by (timestamp, seq).
pub fn restore<L: VaultLink + ?Sized>(
    ftl: &Ftl,
    mut link: Option<&mut L>,
    start: Lpa,
    len: u64,
    as_of: SimNs,
) -> Result<BTreeMap<Lpa, Option<Vec<u8>>>, RecoveryError> {
    let mut out = BTreeMap::new();
    for lpa in start..start + len {
        let chain = backtrack(ftl, link.as_deref_mut(), lpa)?;
        let winner = chain
            .events
            .iter()
            .rev()
            .find(|e| e.timestamp <= as_of);
        let value = match winner {
            None => None,
            Some(e) if e.location == VersionLocation::TrimMarker => None,
            Some(e) => Some(fetch_event_bytes(ftl, link.as_deref_mut(), lpa, e)?),
        };
        out.insert(lpa, value);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvidenceChain {
    pub from_seq: Seq,
    pub to_seq: Seq,
    /// Entries within the window, stitched from the vault and the device.
    pub entries: Vec<LogEntry>,
    /// Full-history verification from genesis, including a re-read of every
    /// vault segment file on disk.
    pub verdict: ChainVerdict,
    /// Whether replaying the log over the window reproduces the stored data
    /// for every lpa the window touches. `None` when verification already
    /// failed.
    pub replay_ok: Option<bool>,
}

/// Reconstructs and verifies the operation history over `[from_seq,
/// to_seq]`. The chain is recomputed from genesis; a single flipped bit in
/// any stored entry or page record surfaces as `TamperAt` with the first
/// affected seq.
pub fn build_evidence_chain<L: VaultLink + ?Sized>(
    ftl: &Ftl,
    mut link: Option<&mut L>,
    from_seq: Seq,
    to_seq: Seq,
) -> Result<EvidenceChain, RecoveryError> {
    // Disk audit first: the vault's in-memory indexes trust ingest-time
    // checks, but forensics must not trust anything newer than the files.
    let mut disk_verdict = ChainVerdict::Ok;
    let mut vault_entries: Vec<LogEntry> = Vec::new();
    if let Some(l) = link.as_deref_mut() {
        disk_verdict = l.verify_all()?;
        let tail = l.tail()?;
        if tail.last_seq >= 1 {
            vault_entries = l.entries_in(1, tail.last_seq)?;
        }
    }
    let vault_last = vault_entries.last().map(|e| e.seq).unwrap_or(0);
    // Device-side entries continue past what the vault has durably; the
    // overlap (shipped but unacked segments) defers to the vault's copy.
    let mut all = vault_entries;
    for seg in ftl.log().sealed_unshipped() {
        for e in &seg.entries {
            if e.seq > vault_last {
                all.push(e.clone());
            }
        }
    }
    for e in ftl.log().unsealed_entries() {
        if e.seq > vault_last {
            all.push(e.clone());
        }
    }
    let stitch_verdict = verify_entries(&all, &GENESIS_HASH);
    let verdict = match (disk_verdict, stitch_verdict) {
        (ChainVerdict::Ok, v) => v,
        (t, ChainVerdict::Ok) => t,
        (ChainVerdict::TamperAt(a), ChainVerdict::TamperAt(b)) => ChainVerdict::TamperAt(a.min(b)),
    };
    let window: Vec<LogEntry> = all
        .iter()
        .filter(|e| e.seq >= from_seq && e.seq <= to_seq)
        .cloned()
        .collect();
    let replay_ok = if verdict.is_ok() {
        Some(replay_check(ftl, link, &all, &window, to_seq)?)
    } else {
        None
    };
    Ok(EvidenceChain {
        from_seq,
        to_seq,
        entries: window,
        verdict,
        replay_ok,
    })
}

/// Independent cross-check of the log against the stored data: for every
/// lpa touched inside the window, the digest obtained by replaying the log
/// up to `to_seq` must equal the digest of the bytes actually held (locally
/// or in the vault) for that version.
fn replay_check<L: VaultLink + ?Sized>(
    ftl: &Ftl,
    mut link: Option<&mut L>,
    all: &[LogEntry],
    window: &[LogEntry],
    to_seq: Seq,
) -> Result<bool, RecoveryError> {
    let mut touched: BTreeSet<Lpa> = BTreeSet::new();
    for e in window {
        if let (OpKind::Write | OpKind::Trim, Some((start, len))) = (e.kind, e.lpa_range) {
            touched.extend(start..start + len.clamp(1, 1 << 20));
        }
    }
    // Replayed view: last surviving write digest per lpa at to_seq.
    let mut replayed: BTreeMap<Lpa, Option<(Seq, Digest)>> = BTreeMap::new();
    for e in all.iter().take_while(|e| e.seq <= to_seq) {
        match (e.kind, e.lpa_range) {
            (OpKind::Write, Some((lpa, _))) => {
                if touched.contains(&lpa) {
                    let d = e.payload_digest.expect("write entries carry a digest");
                    replayed.insert(lpa, Some((e.seq, d)));
                }
            }
            (OpKind::Trim, Some((start, len))) => {
                for lpa in start..start + len {
                    if touched.contains(&lpa) {
                        replayed.insert(lpa, None);
                    }
                }
            }
            _ => {}
        }
    }
    for (&lpa, state) in &replayed {
        let chain = backtrack(ftl, link.as_deref_mut(), lpa)?;
        // Stored view: the latest non-trim event at or before to_seq whose
        // data is still addressable.
        let stored = chain
            .events
            .iter()
            .rev()
            .find(|e| e.write_seq <= to_seq);
        match (state, stored) {
            (None, None) => {}
            (None, Some(e)) if e.location == VersionLocation::TrimMarker => {}
            (Some((seq, digest)), Some(e))
                if e.write_seq == *seq && e.location != VersionLocation::TrimMarker =>
            {
                let bytes = fetch_event_bytes(ftl, link.as_deref_mut(), lpa, e)?;
                if page_digest(&bytes) != *digest {
                    return Ok(false);
                }
            }
            _ => return Ok(false),
        }
    }
    Ok(true)
}
