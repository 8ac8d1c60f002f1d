//! Recovery and forensics over a device plus vault: point-in-time restore,
//! version-chain backtracking across local and offloaded history, evidence
//! chain verification, and the built-in detectors.

use rssd_core::device::{DeviceConfig, SsdDevice};
use rssd_core::ftl::FtlConfig;
use rssd_core::harness::Harness;
use rssd_core::nand::Geometry;
use rssd_core::offload::DeviceKey;
use rssd_core::oplog::{page_digest, ChainVerdict};
use rssd_core::recovery::{backtrack, build_evidence_chain, restore, VersionLocation};
use rssd_core::transport::InProcLink;
use rssd_core::vault::Vault;
use std::cell::RefCell;
use std::path::Path;
use std::rc::Rc;

fn geom() -> Geometry {
    Geometry {
        channels: 1,
        chips_per_channel: 1,
        blocks_per_chip: 8,
        pages_per_block: 16,
        page_size: 64,
    }
}

fn key() -> DeviceKey {
    DeviceKey([7u8; 32])
}

fn setup(dir: &Path) -> (Harness, Rc<RefCell<Vault>>) {
    let vault = Rc::new(RefCell::new(Vault::open(dir, key()).unwrap()));
    let link = InProcLink::new(Rc::clone(&vault));
    let mut cfg = DeviceConfig::new(FtlConfig::new(geom()), key());
    cfg.max_pages_per_segment = 32;
    let device = SsdDevice::new(cfg, Some(Box::new(link))).unwrap();
    (Harness::new(device), vault)
}

const SEC: u64 = 1_000_000_000;

#[test]
fn point_in_time_restore_matches_oracle_at_every_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (mut h, _vault) = setup(dir.path());
    let lpas: Vec<u64> = (0..12).collect();
    let mut checkpoints = Vec::new();
    let mut ts = 0;
    for round in 0..30u64 {
        for &lpa in &lpas {
            ts += SEC;
            h.write_seeded(lpa, round * 100 + lpa, ts).unwrap();
        }
        if round % 4 == 2 {
            ts += SEC;
            h.trim(round % 12, 2.min(12 - round % 12), ts).unwrap();
        }
        checkpoints.push(ts);
    }
    // Early versions must long since have left the device.
    assert!(h.device.offload_stats().pages_offloaded > 0);
    for &t in &checkpoints {
        let lost = h.verify_restore(&lpas, t).unwrap();
        assert!(lost.is_empty(), "restore diverged at t={t}: {lost:?}");
    }
    // A moment before anything was written: everything unmapped.
    let (ftl, link) = h.device.parts();
    let snap = restore(ftl, link, 0, 12, SEC / 2).unwrap();
    assert!(snap.values().all(|v| v.is_none()));
}

#[test]
fn trimmed_lpa_reads_unmapped_but_pre_trim_content_is_recoverable() {
    let dir = tempfile::tempdir().unwrap();
    let (mut h, _vault) = setup(dir.path());
    h.write_seeded(3, 1, SEC).unwrap();
    h.write_seeded(3, 2, 2 * SEC).unwrap();
    h.trim(3, 1, 3 * SEC).unwrap();
    assert_eq!(h.device.read(3, 4 * SEC).unwrap(), None);
    let want = h.oracle.digest_at(3, 2 * SEC).unwrap();
    let (ftl, link) = h.device.parts();
    let before = restore(ftl, link, 3, 1, 2 * SEC).unwrap();
    assert_eq!(page_digest(before[&3].as_ref().unwrap()), want);
    let (ftl, link) = h.device.parts();
    let after = restore(ftl, link, 3, 1, 3 * SEC).unwrap();
    assert!(after[&3].is_none());
    // Writing after the trim links history across the trim marker.
    drop(after);
    h.write_seeded(3, 9, 5 * SEC).unwrap();
    let (ftl, link) = h.device.parts();
    let chain = backtrack(ftl, link, 3).unwrap();
    let kinds: Vec<bool> = chain
        .events
        .iter()
        .map(|e| e.location == VersionLocation::TrimMarker)
        .collect();
    assert_eq!(chain.events.len(), 4);
    assert_eq!(kinds, [false, false, true, false]);
}

#[test]
fn backtrack_spans_local_and_offloaded_versions() {
    let dir = tempfile::tempdir().unwrap();
    let (mut h, _vault) = setup(dir.path());
    let mut ts = 0;
    for i in 0..60u64 {
        ts += SEC;
        h.write_seeded(5, i, ts).unwrap();
        // Interleave other traffic so segments fill.
        h.write_seeded(60 + i % 20, i + 1000, ts).unwrap();
    }
    h.device.drain_offload(ts + SEC).unwrap();
    let (ftl, link) = h.device.parts();
    let chain = backtrack(ftl, link, 5).unwrap();
    assert_eq!(
        chain.events.len(),
        60,
        "every version of the lpa is reachable"
    );
    let remote = chain
        .events
        .iter()
        .filter(|e| matches!(e.location, VersionLocation::Remote { .. }))
        .count();
    assert!(remote > 0, "old versions should live in the vault");
    assert!(matches!(
        chain.events.last().unwrap().location,
        VersionLocation::Local { .. }
    ));
    // Seqs strictly ascend.
    assert!(chain
        .events
        .windows(2)
        .all(|w| w[0].write_seq < w[1].write_seq));
}

#[test]
fn evidence_chain_verifies_clean_run_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let (mut h, _vault) = setup(dir.path());
    let mut ts = 0;
    for i in 0..300u64 {
        ts += SEC;
        h.write_seeded(i % 20, i, ts).unwrap();
        if i % 17 == 0 {
            ts += SEC;
            h.trim(i % 10, 1, ts).unwrap();
        }
    }
    let last = h.device.ftl().last_seq();
    let (ftl, link) = h.device.parts();
    let chain = build_evidence_chain(ftl, link, 10, last).unwrap();
    assert!(chain.verdict.is_ok());
    assert_eq!(chain.replay_ok, Some(true));
    assert_eq!(chain.entries.first().unwrap().seq, 10);
    assert_eq!(chain.entries.last().unwrap().seq, last);
    assert_eq!(chain.entries.len() as u64, last - 10 + 1);
}

#[test]
fn evidence_chain_flags_tampered_vault_file() {
    let dir = tempfile::tempdir().unwrap();
    let (mut h, vault) = setup(dir.path());
    let mut ts = 0;
    for i in 0..200u64 {
        ts += SEC;
        h.write_seeded(i % 16, i, ts).unwrap();
    }
    h.device.drain_offload(ts + SEC).unwrap();
    let seg_path = {
        let v = vault.borrow();
        assert!(v.last_segment_id() >= 1);
        v.dir().join("seg-00000001.bin")
    };
    let mut bytes = std::fs::read(&seg_path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    std::fs::write(&seg_path, &bytes).unwrap();
    let last = h.device.ftl().last_seq();
    let (ftl, link) = h.device.parts();
    let chain = build_evidence_chain(ftl, link, 1, last).unwrap();
    match chain.verdict {
        ChainVerdict::TamperAt(seq) => assert!(seq >= 1 && seq <= last),
        ChainVerdict::Ok => panic!("tampering went undetected"),
    }
    assert_eq!(chain.replay_ok, None);
}

#[test]
fn detectors_flag_attack_patterns_and_stay_quiet_otherwise() {
    let dir = tempfile::tempdir().unwrap();
    let (mut h, vault) = setup(dir.path());
    // Slow benign phase: overwrites spread over minutes.
    let mut ts = 0;
    for i in 0..40u64 {
        ts += 60 * SEC;
        h.write_seeded(i, i, ts).unwrap();
    }
    let benign_end = h.device.ftl().last_seq();
    // Burst phase: 40 distinct lpas rewritten within one second.
    for i in 0..40u64 {
        ts += 20_000_000;
        h.write_seeded(i, 500 + i, ts).unwrap();
    }
    let burst_end = h.device.ftl().last_seq();
    // Trim-after-overwrite phase.
    for i in 0..6u64 {
        ts += SEC;
        h.write_seeded(50 + i, 700 + i, ts).unwrap();
        ts += SEC;
        h.trim(50 + i, 1, ts).unwrap();
    }
    h.device.drain_offload(ts + SEC).unwrap();
    let v = vault.borrow();
    let quiet = v.run_detector("overwrite-burst", 1, benign_end).unwrap();
    assert!(!quiet.suspicious, "benign phase misflagged: {quiet:?}");
    let burst = v
        .run_detector("overwrite-burst", benign_end + 1, burst_end)
        .unwrap();
    assert!(burst.suspicious);
    assert!(!burst.evidence.is_empty());
    assert!(burst
        .evidence
        .iter()
        .all(|&s| s > benign_end && s <= burst_end));
    let trims = v
        .run_detector("trim-after-overwrite", burst_end + 1, v.last_seq())
        .unwrap();
    assert!(trims.suspicious);
    assert_eq!(trims.evidence.len(), 6);
    assert_eq!(v.detector_names(), ["overwrite-burst", "trim-after-overwrite"]);
}
