//! Workload harness: trace format, deterministic payload generation, a
//! shadow oracle that independently tracks what every lpa should contain,
//! and scripted attacker behaviors with seeded schedules.

use crate::device::{DeviceError, SsdDevice};
use crate::ftl::Lpa;
use crate::oplog::{page_digest, Digest, Seq, SimNs};
use crate::recovery;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceKind {
    Write,
    Trim,
    Read,
}

/// One trace line: `timestamp_ns op lpa length_pages payload_seed` with op
/// one of W, T, R. `#` starts a comment; blank lines are skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceOp {
    pub timestamp: SimNs,
    pub kind: TraceKind,
    pub lpa: Lpa,
    pub len: u64,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {0}: {1}")]
    Line(usize, String),
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceOp>, TraceError> {
    let mut ops = Vec::new();
    let mut last_ts = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let err = |msg: &str| TraceError::Line(lineno, msg.to_string());
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err("expected 5 fields: timestamp op lpa length seed"));
        }
        let timestamp: SimNs = fields[0].parse().map_err(|_| err("bad timestamp"))?;
        let kind = match fields[1] {
            "W" => TraceKind::Write,
            "T" => TraceKind::Trim,
            "R" => TraceKind::Read,
            other => return Err(TraceError::Line(lineno, format!("bad op {other:?}"))),
        };
        let lpa: Lpa = fields[2].parse().map_err(|_| err("bad lpa"))?;
        let len: u64 = fields[3].parse().map_err(|_| err("bad length"))?;
        let seed: u64 = fields[4].parse().map_err(|_| err("bad seed"))?;
        if len == 0 {
            return Err(err("length must be at least 1"));
        }
        if timestamp < last_ts {
            return Err(err("timestamps must be non-decreasing"));
        }
        last_ts = timestamp;
        ops.push(TraceOp {
            timestamp,
            kind,
            lpa,
            len,
            seed,
        });
    }
    Ok(ops)
}

pub fn format_trace(ops: &[TraceOp]) -> String {
    let mut out = String::new();
    for op in ops {
        let k = match op.kind {
            TraceKind::Write => "W",
            TraceKind::Trim => "T",
            TraceKind::Read => "R",
        };
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            op.timestamp, k, op.lpa, op.len, op.seed
        ));
    }
    out
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Deterministic page content for (seed, lpa). Every write in a generated
/// workload is reproducible from its trace line.
pub fn page_payload(seed: u64, lpa: Lpa, page_size: usize) -> Vec<u8> {
    let mut rng = ChaCha12Rng::seed_from_u64(splitmix(seed) ^ splitmix(lpa.wrapping_add(1)));
    let mut buf = vec![0u8; page_size];
    rng.fill(&mut buf[..]);
    buf
}

/// Independent record of what each lpa should contain and should have
/// contained at every past moment; tracks digests, not bytes, so long runs
/// stay cheap. Maintained purely from the host-visible operations that
/// actually succeeded.
#[derive(Default)]
pub struct ShadowOracle {
    /// Per lpa: (timestamp, issue order, digest or None for trim),
    /// ascending.
    history: HashMap<Lpa, Vec<(SimNs, u64, Option<Digest>)>>,
    counter: u64,
}

impl ShadowOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_write(&mut self, lpa: Lpa, ts: SimNs, data: &[u8]) {
        self.counter += 1;
        self.history
            .entry(lpa)
            .or_default()
            .push((ts, self.counter, Some(page_digest(data))));
    }

    pub fn record_trim(&mut self, lpa: Lpa, ts: SimNs) {
        // A trim of a never-written lpa changes nothing the host can see.
        if self.history.contains_key(&lpa) {
            self.counter += 1;
            self.history
                .entry(lpa)
                .or_default()
                .push((ts, self.counter, None));
        }
    }

    /// Expected digest of `lpa` at time `t` (None: unmapped then).
    pub fn digest_at(&self, lpa: Lpa, t: SimNs) -> Option<Digest> {
        self.history
            .get(&lpa)?
            .iter()
            .rev()
            .find(|(ts, _, _)| *ts <= t)
            .and_then(|(_, _, d)| *d)
    }

    pub fn current_digest(&self, lpa: Lpa) -> Option<Digest> {
        self.history
            .get(&lpa)
            .and_then(|v| v.last())
            .and_then(|(_, _, d)| *d)
    }

    /// Every lpa that has ever been written.
    pub fn written_lpas(&self) -> Vec<Lpa> {
        let mut v: Vec<Lpa> = self
            .history
            .iter()
            .filter(|(_, h)| h.iter().any(|(_, _, d)| d.is_some()))
            .map(|(&l, _)| l)
            .collect();
        v.sort_unstable();
        v
    }

    pub fn mapped_count(&self) -> u64 {
        self.history
            .values()
            .filter(|h| h.last().map(|(_, _, d)| d.is_some()).unwrap_or(false))
            .count() as u64
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ReplayOutcome {
    pub writes: u64,
    pub trims: u64,
    pub reads: u64,
    pub read_mismatches: u64,
    pub capacity_errors: u64,
    pub last_timestamp: SimNs,
}

/// Drives a device from a workload while keeping the shadow oracle in sync.
pub struct Harness {
    pub device: SsdDevice,
    pub oracle: ShadowOracle,
    page_size: usize,
}

impl Harness {
    pub fn new(device: SsdDevice) -> Self {
        let page_size = device.ftl().config().geometry.page_size as usize;
        Harness {
            device,
            oracle: ShadowOracle::new(),
            page_size,
        }
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    /// Writes generated content; the oracle records it only if the device
    /// accepted it.
    pub fn write_seeded(&mut self, lpa: Lpa, seed: u64, ts: SimNs) -> Result<Seq, DeviceError> {
        let data = page_payload(seed, lpa, self.page_size);
        let seq = self.device.write(lpa, &data, ts)?;
        self.oracle.record_write(lpa, ts, &data);
        Ok(seq)
    }

    pub fn trim(&mut self, start: Lpa, len: u64, ts: SimNs) -> Result<Seq, DeviceError> {
        let seq = self.device.trim(start, len, ts)?;
        for lpa in start..start + len {
            self.oracle.record_trim(lpa, ts);
        }
        Ok(seq)
    }

    /// Replays a trace. `speed_factor` > 1 compresses the virtual timeline.
    /// Capacity errors are counted, not fatal: the interesting question is
    /// what survives.
    pub fn replay(&mut self, ops: &[TraceOp], speed_factor: f64) -> Result<ReplayOutcome, DeviceError> {
        let mut out = ReplayOutcome::default();
        for op in ops {
            let ts = if speed_factor == 1.0 {
                op.timestamp
            } else {
                (op.timestamp as f64 / speed_factor) as SimNs
            };
            out.last_timestamp = ts;
            match op.kind {
                TraceKind::Write => {
                    for i in 0..op.len {
                        match self.write_seeded(op.lpa + i, op.seed.wrapping_add(i), ts) {
                            Ok(_) => out.writes += 1,
                            Err(DeviceError::CapacityExhausted) => out.capacity_errors += 1,
                            Err(e) => return Err(e),
                        }
                    }
                }
                TraceKind::Trim => {
                    self.trim(op.lpa, op.len, ts)?;
                    out.trims += 1;
                }
                TraceKind::Read => {
                    for i in 0..op.len {
                        let got = self.device.read(op.lpa + i, ts)?;
                        let want = self.oracle.current_digest(op.lpa + i);
                        let matches = match (got, want) {
                            (None, None) => true,
                            (Some(d), Some(w)) => page_digest(&d) == w,
                            _ => false,
                        };
                        out.reads += 1;
                        if !matches {
                            out.read_mismatches += 1;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Checks the device's current host view against the oracle for every
    /// lpa ever touched. Returns mismatching lpas.
    pub fn verify_current(&mut self) -> Result<Vec<Lpa>, DeviceError> {
        let mut bad = Vec::new();
        let lpas: Vec<Lpa> = self.oracle.history.keys().copied().collect();
        let now = self.device.now();
        for lpa in lpas {
            let got = self.device.read(lpa, now)?;
            let want = self.oracle.history[&lpa].last().and_then(|(_, _, d)| *d);
            let ok = match (&got, &want) {
                (None, None) => true,
                (Some(d), Some(w)) => page_digest(d) == *w,
                _ => false,
            };
            if !ok {
                bad.push(lpa);
            }
        }
        bad.sort_unstable();
        Ok(bad)
    }

    /// Point-in-time restore of `lpas` to `as_of`, checked against the
    /// oracle. Returns the lpas whose pre-attack content could not be
    /// reproduced exactly.
    pub fn verify_restore(&mut self, lpas: &[Lpa], as_of: SimNs) -> Result<Vec<Lpa>, RecoveryFailure> {
        let mut lost = Vec::new();
        for &lpa in lpas {
            let (ftl, link) = self.device.parts();
            let restored = recovery::restore(ftl, link, lpa, 1, as_of)
                .map_err(|e| RecoveryFailure { lpa, error: e.to_string() })?;
            let got = restored.get(&lpa).and_then(|v| v.as_deref());
            let want = self.oracle.digest_at(lpa, as_of);
            let ok = match (got, want) {
                (None, None) => true,
                (Some(d), Some(w)) => page_digest(d) == w,
                _ => false,
            };
            if !ok {
                lost.push(lpa);
            }
        }
        Ok(lost)
    }
}

#[derive(Debug, Error)]
#[error("recovery failed for lpa {lpa}: {error}")]
pub struct RecoveryFailure {
    pub lpa: Lpa,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackKind {
    /// Mass overwrite, then flood fresh space and churn to force GC.
    Gc,
    /// Slow overwrites spread thin to sit below rate detectors.
    Timing,
    /// Write an encrypted copy elsewhere, then trim the original.
    Trimming,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackParams {
    pub kind: AttackKind,
    pub seed: u64,
    /// Fraction of already-written lpas targeted.
    pub victim_fraction: f64,
    /// Gc: fill until this fraction of logical space is mapped.
    pub fill_fraction: f64,
    /// Gc: extra rewrites of the flood region, as a fraction of its size.
    pub churn_factor: f64,
    /// Virtual spacing between attack ops.
    pub op_interval_ns: u64,
    /// Timing: spacing of interleaved benign writes.
    pub benign_interval_ns: u64,
}

impl AttackParams {
    pub fn new(kind: AttackKind, seed: u64) -> Self {
        AttackParams {
            kind,
            seed,
            victim_fraction: 0.25,
            fill_fraction: 0.95,
            churn_factor: 0.5,
            op_interval_ns: match kind {
                // One victim per simulated minute: far below burst rates.
                AttackKind::Timing => 60_000_000_000,
                _ => 1_000_000,
            },
            benign_interval_ns: 1_000_000_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackOutcome {
    pub kind: AttackKind,
    pub seed: u64,
    /// Moment just before the first attack op; restore target.
    pub pre_attack_time: SimNs,
    pub victims: Vec<Lpa>,
    pub first_attack_seq: Seq,
    pub last_attack_seq: Seq,
    pub attack_ops: u64,
    pub capacity_errors: u64,
}

/// Runs a scripted attack against an already-populated device. The schedule
/// is fully determined by the seed, the params, and the set of lpas written
/// so far.
pub fn run_attack(h: &mut Harness, params: &AttackParams) -> Result<AttackOutcome, DeviceError> {
    let mut rng = ChaCha12Rng::seed_from_u64(params.seed);
    let written = h.oracle.written_lpas();
    assert!(
        !written.is_empty(),
        "attacks need a populated device; replay a benign workload first"
    );
    let n_victims = ((written.len() as f64 * params.victim_fraction).round() as usize).max(1);
    let mut victims: Vec<Lpa> = written
        .choose_multiple(&mut rng, n_victims)
        .copied()
        .collect();
    victims.sort_unstable();
    let pre_attack_time = h.device.now();
    let first_attack_seq = h.device.ftl().last_seq() + 1;
    let mut ts = pre_attack_time;
    let mut ops = 0u64;
    let mut capacity_errors = 0u64;
    let attack_write = |h: &mut Harness,
                            lpa: Lpa,
                            ts: SimNs,
                            rng: &mut ChaCha12Rng,
                            ops: &mut u64,
                            cap: &mut u64|
     -> Result<(), DeviceError> {
        *ops += 1;
        match h.write_seeded(lpa, rng.gen(), ts) {
            Ok(_) => Ok(()),
            Err(DeviceError::CapacityExhausted) => {
                *cap += 1;
                Ok(())
            }
            Err(e) => Err(e),
        }
    };
    match params.kind {
        AttackKind::Gc => {
            // Phase 1: encrypt-in-place every victim.
            for &lpa in &victims {
                ts += params.op_interval_ns;
                attack_write(h, lpa, ts, &mut rng, &mut ops, &mut capacity_errors)?;
            }
            // Phase 2: flood fresh lpas to starve free space.
            let logical = h.device.ftl().logical_pages();
            let target = (logical as f64 * params.fill_fraction) as u64;
            let mut fresh: Vec<Lpa> = (0..logical)
                .filter(|l| !h.oracle.history.contains_key(l))
                .collect();
            fresh.shuffle(&mut rng);
            let mut flooded: Vec<Lpa> = Vec::new();
            for lpa in fresh {
                if h.oracle.mapped_count() >= target {
                    break;
                }
                ts += params.op_interval_ns;
                attack_write(h, lpa, ts, &mut rng, &mut ops, &mut capacity_errors)?;
                flooded.push(lpa);
            }
            // Phase 3: churn the flood region to force relocations and
            // erases.
            let churn = (flooded.len() as f64 * params.churn_factor) as usize;
            for i in 0..churn {
                let lpa = flooded[i % flooded.len().max(1)];
                ts += params.op_interval_ns;
                attack_write(h, lpa, ts, &mut rng, &mut ops, &mut capacity_errors)?;
            }
        }
        AttackKind::Timing => {
            // Drip one victim overwrite per interval, hiding inside a
            // steady benign stream.
            let benign_pool = written.clone();
            for &lpa in &victims {
                let next_attack = ts + params.op_interval_ns;
                let mut bts = ts + params.benign_interval_ns;
                while bts < next_attack {
                    let benign = benign_pool[rng.gen_range(0..benign_pool.len())];
                    if !victims.contains(&benign) {
                        attack_write(h, benign, bts, &mut rng, &mut ops, &mut capacity_errors)?;
                    }
                    bts += params.benign_interval_ns;
                }
                ts = next_attack;
                attack_write(h, lpa, ts, &mut rng, &mut ops, &mut capacity_errors)?;
            }
        }
        AttackKind::Trimming => {
            // Copy out (as if encrypted), then trim the original to bait
            // conventional FTLs into erasing it.
            let logical = h.device.ftl().logical_pages();
            let mut fresh: Vec<Lpa> = (0..logical)
                .filter(|l| !h.oracle.history.contains_key(l))
                .collect();
            fresh.shuffle(&mut rng);
            let mut fresh = fresh.into_iter();
            for &lpa in &victims {
                if let Some(copy_to) = fresh.next() {
                    ts += params.op_interval_ns;
                    attack_write(h, copy_to, ts, &mut rng, &mut ops, &mut capacity_errors)?;
                }
                ts += params.op_interval_ns;
                h.trim(lpa, 1, ts)?;
                ops += 1;
            }
            // Nudge GC to tempt it into reclaiming the trimmed space.
            h.device.ftl_mut().garbage_collect(ts);
        }
    }
    Ok(AttackOutcome {
        kind: params.kind,
        seed: params.seed,
        pre_attack_time,
        victims,
        first_attack_seq,
        last_attack_seq: h.device.ftl().last_seq(),
        attack_ops: ops,
        capacity_errors,
    })
}

/// Uniform synthetic workload: mostly writes with occasional trims and
/// reads, fixed op spacing.
pub fn synthetic_trace(
    seed: u64,
    n_ops: usize,
    lpa_space: u64,
    interval_ns: u64,
) -> Vec<TraceOp> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut ops = Vec::with_capacity(n_ops);
    let mut ts = 0;
    for _ in 0..n_ops {
        ts += interval_ns;
        let roll: f64 = rng.gen();
        let lpa = rng.gen_range(0..lpa_space);
        let kind = if roll < 0.85 {
            TraceKind::Write
        } else if roll < 0.92 {
            TraceKind::Trim
        } else {
            TraceKind::Read
        };
        let len = if kind == TraceKind::Trim {
            rng.gen_range(1..=4u64.min(lpa_space - lpa))
        } else {
            1
        };
        ops.push(TraceOp {
            timestamp: ts,
            kind,
            lpa,
            len,
            seed: rng.gen(),
        });
    }
    ops
}
