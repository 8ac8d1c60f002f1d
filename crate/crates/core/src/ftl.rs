//! Retention-first flash translation layer.
//!
//! Out-of-place writes keep every superseded version on flash as
//! `InvalidRetained` until the vault acknowledges an offloaded copy; only then
//! may garbage collection erase the block holding it. Trim unmaps the host
//! view but retains the trimmed pages the same way. A conventional baseline
//! mode (`retention = false`) invalidates stale pages immediately, for
//! ablation runs.

use crate::nand::{Geometry, NandArray, NandError, PhysPageAddr};
use crate::oplog::{page_digest, Digest, LogEntry, OpKind, OpLog, SealPolicy, Seq, SimNs};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

pub type Lpa = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PageLifecycle {
    Free,
    Valid,
    InvalidRetained,
    OffloadPending,
    SafeToErase,
}

/// Why a page became safe to erase. `VaultAcked` is the only path for
/// retained data; the other two never destroy the last copy of a version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SafeReason {
    /// The vault acknowledged a frame containing this page's exact bytes.
    VaultAcked,
    /// GC relocated this still-valid page; the version lives on elsewhere.
    RelocatedCopy,
    /// Baseline (retention disabled) mode: superseded or trimmed data is
    /// simply dropped, as a conventional FTL would.
    Superseded,
}

#[derive(Debug, Clone, Copy)]
pub struct PageMeta {
    pub lpa: Option<Lpa>,
    pub write_seq: Seq,
    pub timestamp: SimNs,
    /// Back-pointer to the previous version of the same lpa, with the seq we
    /// expect to find there (guards against the page having been erased and
    /// reprogrammed since).
    pub prev: Option<(u32, Seq)>,
    pub lifecycle: PageLifecycle,
    pub digest: Digest,
    pub safe_reason: Option<SafeReason>,
}

impl PageMeta {
    fn free() -> Self {
        PageMeta {
            lpa: None,
            write_seq: 0,
            timestamp: 0,
            prev: None,
            lifecycle: PageLifecycle::Free,
            digest: [0u8; 32],
            safe_reason: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum MapEntry {
    Unmapped,
    Mapped(u32),
    /// Trimmed: reads see Unmapped, but the next write's version chain links
    /// back to the retained pre-trim page.
    Trimmed { prev_ppa: u32, prev_seq: Seq },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FtlConfig {
    pub geometry: Geometry,
    /// Fraction of physical capacity withheld from the logical export.
    pub over_provisioning: f64,
    /// GC runs while the free-page fraction is below this.
    pub gc_free_watermark: f64,
    /// Offload is requested once the retained fraction exceeds this.
    pub offload_watermark: f64,
    /// false = conventional FTL baseline (no retention, conventional trim).
    pub retention: bool,
    pub seal: SealPolicy,
}

impl FtlConfig {
    pub fn new(geometry: Geometry) -> Self {
        FtlConfig {
            geometry,
            over_provisioning: 0.125,
            gc_free_watermark: 0.20,
            // Ship retained pages eagerly: offload costs no flash time, and
            // blocks holding retained pages are ineligible GC victims, so a
            // low watermark keeps reclamation close to a conventional FTL.
            offload_watermark: 0.05,
            retention: true,
            seal: SealPolicy::default(),
        }
    }

    pub fn baseline(geometry: Geometry) -> Self {
        FtlConfig {
            retention: false,
            ..FtlConfig::new(geometry)
        }
    }

    pub fn logical_pages(&self) -> u64 {
        let total = self.geometry.total_pages() as f64;
        (total * (1.0 - self.over_provisioning)).floor() as u64
    }

    pub fn validate(&self) -> Result<(), FtlError> {
        self.geometry.validate()?;
        if !(self.over_provisioning > 0.0 && self.over_provisioning < 1.0) {
            return Err(FtlError::BadConfig("over_provisioning must be in (0,1)"));
        }
        if !(self.gc_free_watermark > 0.0 && self.gc_free_watermark < 1.0) {
            return Err(FtlError::BadConfig("gc_free_watermark must be in (0,1)"));
        }
        if !(self.offload_watermark > 0.0 && self.offload_watermark < 1.0) {
            return Err(FtlError::BadConfig("offload_watermark must be in (0,1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FtlError {
    #[error("lpa {0} out of range (logical capacity {1})")]
    OutOfRange(Lpa, u64),
    #[error("data length {got} != page size {want}")]
    BadLength { got: usize, want: usize },
    #[error("no free physical page available")]
    NoFreePage,
    #[error("invalid configuration: {0}")]
    BadConfig(&'static str),
    #[error(transparent)]
    Nand(#[from] NandError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcReport {
    pub blocks_erased: u64,
    pub pages_moved: u64,
    pub pages_awaiting_offload: u64,
}

/// A retained page claimed for an offload segment, bytes captured at claim
/// time so the shipped frame is bound to the exact flash contents.
#[derive(Debug, Clone)]
pub struct ClaimedPage {
    pub flat_ppa: u32,
    pub lpa: Lpa,
    pub write_seq: Seq,
    pub timestamp: SimNs,
    pub digest: Digest,
    pub data: Vec<u8>,
}

/// One non-free page destroyed by a block erase, for instrumentation.
#[derive(Debug, Clone)]
pub struct ErasedPageEvent {
    pub flat_ppa: u32,
    pub lpa: Option<Lpa>,
    pub write_seq: Seq,
    pub digest: Digest,
    pub lifecycle: PageLifecycle,
    pub safe_reason: Option<SafeReason>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct FtlStats {
    pub host_writes: u64,
    pub host_reads: u64,
    pub host_trims: u64,
    pub gc_moves: u64,
    pub blocks_erased: u64,
}

/// One locally reachable version of an lpa, found by walking prev pointers.
#[derive(Debug, Clone, Copy)]
pub struct LocalVersion {
    pub write_seq: Seq,
    pub timestamp: SimNs,
    pub flat_ppa: u32,
    pub digest: Digest,
    pub lifecycle: PageLifecycle,
}

struct BlockState {
    /// Next page index to program; pages_per_block means full.
    cursor: u32,
    valid: u32,
    safe: u32,
    /// InvalidRetained + OffloadPending pages in this block.
    retained: u32,
    free_listed: bool,
}

pub struct Ftl {
    config: FtlConfig,
    logical_pages: u64,
    nand: NandArray,
    log: OpLog,
    mapping: Vec<MapEntry>,
    meta: Vec<PageMeta>,
    blocks: Vec<BlockState>,
    free_blocks: Vec<u32>,
    open_block: Option<u32>,
    /// InvalidRetained pages by write_seq, oldest first.
    retained_queue: BTreeMap<Seq, u32>,
    pending_count: u64,
    /// Effective trims per lpa: (seq, timestamp) of each trim that unmapped it.
    trim_index: HashMap<Lpa, Vec<(Seq, SimNs)>>,
    stats: FtlStats,
    instrument_erases: bool,
    erase_events: Vec<ErasedPageEvent>,
}

impl Ftl {
    pub fn new(config: FtlConfig) -> Result<Self, FtlError> {
        config.validate()?;
        let nand = NandArray::new(config.geometry)?;
        let total_pages = config.geometry.total_pages() as usize;
        let total_blocks = config.geometry.total_blocks();
        let logical_pages = config.logical_pages();
        Ok(Ftl {
            log: OpLog::new(config.seal),
            mapping: vec![MapEntry::Unmapped; logical_pages as usize],
            meta: vec![PageMeta::free(); total_pages],
            blocks: (0..total_blocks)
                .map(|_| BlockState {
                    cursor: 0,
                    valid: 0,
                    safe: 0,
                    retained: 0,
                    free_listed: true,
                })
                .collect(),
            free_blocks: (0..total_blocks).collect(),
            open_block: None,
            retained_queue: BTreeMap::new(),
            pending_count: 0,
            trim_index: HashMap::new(),
            stats: FtlStats::default(),
            instrument_erases: false,
            erase_events: Vec::new(),
            logical_pages,
            nand,
            config,
        })
    }

    pub fn config(&self) -> &FtlConfig {
        &self.config
    }

    pub fn logical_pages(&self) -> u64 {
        self.logical_pages
    }

    pub fn log(&self) -> &OpLog {
        &self.log
    }

    pub fn log_mut(&mut self) -> &mut OpLog {
        &mut self.log
    }

    pub fn nand(&self) -> &NandArray {
        &self.nand
    }

    pub fn stats(&self) -> FtlStats {
        self.stats
    }

    pub fn set_instrument_erases(&mut self, on: bool) {
        self.instrument_erases = on;
    }

    pub fn drain_erase_events(&mut self) -> Vec<ErasedPageEvent> {
        std::mem::take(&mut self.erase_events)
    }

    pub fn page_meta(&self, flat_ppa: u32) -> &PageMeta {
        &self.meta[flat_ppa as usize]
    }

    fn page_size(&self) -> usize {
        self.config.geometry.page_size as usize
    }

    fn pages_per_block(&self) -> u32 {
        self.config.geometry.pages_per_block
    }

    pub fn free_pages(&self) -> u64 {
        let ppb = self.pages_per_block() as u64;
        let mut n = self.free_blocks.len() as u64 * ppb;
        if let Some(b) = self.open_block {
            n += (self.pages_per_block() - self.blocks[b as usize].cursor) as u64;
        }
        n
    }

    pub fn free_fraction(&self) -> f64 {
        self.free_pages() as f64 / self.config.geometry.total_pages() as f64
    }

    pub fn retained_pages(&self) -> u64 {
        self.retained_queue.len() as u64 + self.pending_count
    }

    pub fn retained_fraction(&self) -> f64 {
        self.retained_pages() as f64 / self.config.geometry.total_pages() as f64
    }

    /// Whether a host write could allocate a page right now (the last free
    /// block is reserved for GC relocation).
    pub fn can_host_alloc(&self) -> bool {
        let open_has_room = self
            .open_block
            .map(|b| self.blocks[b as usize].cursor < self.pages_per_block())
            .unwrap_or(false);
        open_has_room || self.free_blocks.len() > 1
    }

    pub fn wants_gc(&self) -> bool {
        self.free_fraction() < self.config.gc_free_watermark
    }

    pub fn wants_offload(&self) -> bool {
        !self.retained_queue.is_empty()
            && self.retained_fraction() > self.config.offload_watermark
    }

    fn check_lpa(&self, lpa: Lpa) -> Result<(), FtlError> {
        if lpa >= self.logical_pages {
            return Err(FtlError::OutOfRange(lpa, self.logical_pages));
        }
        Ok(())
    }

    /// Allocates the next sequential page of the open block, opening the
    /// lowest-wear free block as needed. Host allocations keep one block in
    /// reserve so GC relocation can always make progress.
    fn alloc_page(&mut self, for_gc: bool) -> Option<u32> {
        let ppb = self.pages_per_block();
        if self
            .open_block
            .map(|b| self.blocks[b as usize].cursor >= ppb)
            .unwrap_or(true)
        {
            if !for_gc && self.free_blocks.len() <= 1 {
                return None;
            }
            // Mild wear-leveling: open the free block with the fewest erases.
            let (i, _) = self
                .free_blocks
                .iter()
                .enumerate()
                .min_by_key(|(_, &b)| self.nand.block_erase_count(b))?;
            let b = self.free_blocks.swap_remove(i);
            self.blocks[b as usize].free_listed = false;
            self.open_block = Some(b);
        }
        let b = self.open_block.unwrap();
        let st = &mut self.blocks[b as usize];
        let flat = b * ppb + st.cursor;
        st.cursor += 1;
        Some(flat)
    }

    fn program(&mut self, flat_ppa: u32, data: &[u8]) -> Result<(), FtlError> {
        let addr = self.config.geometry.addr_of_flat(flat_ppa);
        self.nand.program_page(addr, data)?;
        Ok(())
    }

    /// Marks the currently mapped page of `lpa` superseded and returns the
    /// prev-link for the replacing version.
    fn supersede_current(&mut self, lpa: Lpa) -> Option<(u32, Seq)> {
        match self.mapping[lpa as usize] {
            MapEntry::Mapped(old) => {
                let seq = self.meta[old as usize].write_seq;
                self.retire_page(old);
                Some((old, seq))
            }
            MapEntry::Trimmed { prev_ppa, prev_seq } => Some((prev_ppa, prev_seq)),
            MapEntry::Unmapped => None,
        }
    }

    /// Valid -> InvalidRetained (retention) or SafeToErase (baseline).
    fn retire_page(&mut self, flat_ppa: u32) {
        let block = (flat_ppa / self.pages_per_block()) as usize;
        let m = &mut self.meta[flat_ppa as usize];
        debug_assert_eq!(m.lifecycle, PageLifecycle::Valid);
        self.blocks[block].valid -= 1;
        if self.config.retention {
            m.lifecycle = PageLifecycle::InvalidRetained;
            self.blocks[block].retained += 1;
            self.retained_queue.insert(m.write_seq, flat_ppa);
        } else {
            m.lifecycle = PageLifecycle::SafeToErase;
            m.safe_reason = Some(SafeReason::Superseded);
            self.blocks[block].safe += 1;
        }
    }

    pub fn write(&mut self, lpa: Lpa, data: &[u8], timestamp: SimNs) -> Result<Seq, FtlError> {
        self.check_lpa(lpa)?;
        if data.len() != self.page_size() {
            return Err(FtlError::BadLength {
                got: data.len(),
                want: self.page_size(),
            });
        }
        let flat = self.alloc_page(false).ok_or(FtlError::NoFreePage)?;
        self.program(flat, data)?;
        let digest = page_digest(data);
        let entry = self.log.append(
            OpKind::Write,
            Some((lpa, 1)),
            Some(self.config.geometry.addr_of_flat(flat)),
            Some(digest),
            timestamp,
        );
        let prev = self.supersede_current(lpa).filter(|_| self.config.retention);
        self.meta[flat as usize] = PageMeta {
            lpa: Some(lpa),
            write_seq: entry.seq,
            timestamp,
            prev,
            lifecycle: PageLifecycle::Valid,
            digest,
            safe_reason: None,
        };
        let ppb = self.pages_per_block();
        self.blocks[(flat / ppb) as usize].valid += 1;
        self.mapping[lpa as usize] = MapEntry::Mapped(flat);
        self.stats.host_writes += 1;
        Ok(entry.seq)
    }

    /// Current host view: `None` means unmapped (never written or trimmed).
    pub fn read(&mut self, lpa: Lpa) -> Result<Option<Vec<u8>>, FtlError> {
        self.check_lpa(lpa)?;
        self.stats.host_reads += 1;
        match self.mapping[lpa as usize] {
            MapEntry::Mapped(flat) => {
                let addr = self.config.geometry.addr_of_flat(flat);
                Ok(Some(self.nand.read_page(addr)?.to_vec()))
            }
            _ => Ok(None),
        }
    }

    /// Enhanced trim: unmaps the range for the host but retains the trimmed
    /// pages. One log entry covers the whole range.
    pub fn trim(&mut self, start: Lpa, len: u64, timestamp: SimNs) -> Result<Seq, FtlError> {
        if len > 0 {
            self.check_lpa(start)?;
            self.check_lpa(start + len - 1)?;
        }
        let entry = self
            .log
            .append(OpKind::Trim, Some((start, len)), None, None, timestamp);
        for lpa in start..start + len {
            if let MapEntry::Mapped(old) = self.mapping[lpa as usize] {
                let prev_seq = self.meta[old as usize].write_seq;
                self.retire_page(old);
                self.mapping[lpa as usize] = if self.config.retention {
                    MapEntry::Trimmed {
                        prev_ppa: old,
                        prev_seq,
                    }
                } else {
                    MapEntry::Unmapped
                };
                self.trim_index
                    .entry(lpa)
                    .or_default()
                    .push((entry.seq, timestamp));
            }
        }
        self.stats.host_trims += 1;
        Ok(entry.seq)
    }

    /// Trims recorded against `lpa`, ascending (seq, timestamp).
    pub fn trim_events(&self, lpa: Lpa) -> &[(Seq, SimNs)] {
        self.trim_index.get(&lpa).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All InvalidRetained pages, ascending by write_seq.
    pub fn retained_inventory(&self) -> Vec<(Seq, PhysPageAddr)> {
        self.retained_queue
            .iter()
            .map(|(&seq, &flat)| (seq, self.config.geometry.addr_of_flat(flat)))
            .collect()
    }

    /// Claims up to `max` oldest retained pages for offload
    /// (InvalidRetained -> OffloadPending), capturing their bytes.
    pub fn claim_for_offload(&mut self, max: usize) -> Vec<ClaimedPage> {
        let mut claims = Vec::new();
        while claims.len() < max {
            let Some((&seq, &flat)) = self.retained_queue.iter().next() else {
                break;
            };
            self.retained_queue.remove(&seq);
            let m = &mut self.meta[flat as usize];
            m.lifecycle = PageLifecycle::OffloadPending;
            self.pending_count += 1;
            let addr = self.config.geometry.addr_of_flat(flat);
            let data = self
                .nand
                .read_page(addr)
                .expect("retained page must be programmed")
                .to_vec();
            let m = &self.meta[flat as usize];
            claims.push(ClaimedPage {
                flat_ppa: flat,
                lpa: m.lpa.expect("retained page has an owner"),
                write_seq: m.write_seq,
                timestamp: m.timestamp,
                digest: m.digest,
                data,
            });
        }
        claims
    }

    /// Vault acknowledgment: OffloadPending -> SafeToErase, plus one
    /// OffloadAcked log entry for the batch.
    pub fn ack_offload(&mut self, claims: &[ClaimedPage], timestamp: SimNs) {
        for c in claims {
            let block = (c.flat_ppa / self.pages_per_block()) as usize;
            let m = &mut self.meta[c.flat_ppa as usize];
            debug_assert_eq!(m.lifecycle, PageLifecycle::OffloadPending);
            m.lifecycle = PageLifecycle::SafeToErase;
            m.safe_reason = Some(SafeReason::VaultAcked);
            self.pending_count -= 1;
            self.blocks[block].retained -= 1;
            self.blocks[block].safe += 1;
        }
        self.log
            .append(OpKind::OffloadAcked, None, None, None, timestamp);
    }

    /// Offload failure: OffloadPending -> InvalidRetained for retry.
    pub fn rollback_offload(&mut self, claims: &[ClaimedPage]) {
        for c in claims {
            let m = &mut self.meta[c.flat_ppa as usize];
            debug_assert_eq!(m.lifecycle, PageLifecycle::OffloadPending);
            m.lifecycle = PageLifecycle::InvalidRetained;
            self.pending_count -= 1;
            self.retained_queue.insert(c.write_seq, c.flat_ppa);
        }
    }

    /// Appends the OffloadSealed marker for a segment being built.
    pub fn note_offload_sealed(&mut self, page_count: u64, timestamp: SimNs) {
        self.log
            .append(OpKind::OffloadSealed, Some((0, page_count)), None, None, timestamp);
    }

    /// Greedy GC: victims are closed blocks with the most SafeToErase pages
    /// and no retained pages, ties broken by lowest erase count. Valid pages
    /// are relocated first. Blocks holding any InvalidRetained or
    /// OffloadPending page are never erased.
    pub fn garbage_collect(&mut self, timestamp: SimNs) -> GcReport {
        let mut report = GcReport {
            pages_awaiting_offload: self.retained_pages(),
            ..GcReport::default()
        };
        let ppb = self.pages_per_block();
        while self.wants_gc() || !self.can_host_alloc() {
            let victim = self
                .blocks
                .iter()
                .enumerate()
                .filter(|(b, st)| {
                    Some(*b as u32) != self.open_block
                        && !st.free_listed
                        && st.retained == 0
                        && st.safe > 0
                        && st.cursor == ppb
                })
                .max_by_key(|(b, st)| {
                    (st.safe, std::cmp::Reverse(self.nand.block_erase_count(*b as u32)))
                })
                .map(|(b, _)| b as u32);
            let Some(victim) = victim else { break };
            if !self.reclaim_block(victim, timestamp, &mut report) {
                break;
            }
        }
        report.pages_awaiting_offload = self.retained_pages();
        report
    }

    /// Relocates the victim's valid pages and erases it. Returns false if
    /// relocation ran out of space (GC cannot make progress).
    fn reclaim_block(&mut self, victim: u32, timestamp: SimNs, report: &mut GcReport) -> bool {
        let ppb = self.pages_per_block();
        for page in 0..ppb {
            let flat = victim * ppb + page;
            if self.meta[flat as usize].lifecycle != PageLifecycle::Valid {
                continue;
            }
            let Some(dest) = self.alloc_page(true) else {
                return false;
            };
            let src_addr = self.config.geometry.addr_of_flat(flat);
            let data = self.nand.read_page(src_addr).expect("valid page").to_vec();
            self.program(dest, &data).expect("dest page is erased");
            let mut m = self.meta[flat as usize];
            self.log.append(
                OpKind::GcMove,
                m.lpa.map(|l| (l, 1)),
                Some(self.config.geometry.addr_of_flat(dest)),
                Some(m.digest),
                timestamp,
            );
            // The moved page keeps its identity: lpa, write_seq, prev link.
            self.meta[dest as usize] = m;
            self.blocks[(dest / ppb) as usize].valid += 1;
            if let Some(lpa) = m.lpa {
                self.mapping[lpa as usize] = MapEntry::Mapped(dest);
            }
            m.lifecycle = PageLifecycle::SafeToErase;
            m.safe_reason = Some(SafeReason::RelocatedCopy);
            self.meta[flat as usize] = m;
            self.blocks[victim as usize].valid -= 1;
            self.blocks[victim as usize].safe += 1;
            self.stats.gc_moves += 1;
            report.pages_moved += 1;
        }
        self.erase_victim(victim);
        report.blocks_erased += 1;
        true
    }

    fn erase_victim(&mut self, victim: u32) {
        let ppb = self.pages_per_block();
        debug_assert_eq!(self.blocks[victim as usize].valid, 0);
        debug_assert_eq!(self.blocks[victim as usize].retained, 0);
        for page in 0..ppb {
            let flat = victim * ppb + page;
            let m = &self.meta[flat as usize];
            if m.lifecycle == PageLifecycle::Free {
                continue;
            }
            debug_assert_eq!(m.lifecycle, PageLifecycle::SafeToErase);
            if self.instrument_erases {
                self.erase_events.push(ErasedPageEvent {
                    flat_ppa: flat,
                    lpa: m.lpa,
                    write_seq: m.write_seq,
                    digest: m.digest,
                    lifecycle: m.lifecycle,
                    safe_reason: m.safe_reason,
                });
            }
            self.meta[flat as usize] = PageMeta::free();
        }
        let (ch, chip, blk) = self.config.geometry.block_of_flat(victim);
        self.nand.erase_block(ch, chip, blk).expect("valid victim");
        let st = &mut self.blocks[victim as usize];
        st.cursor = 0;
        st.safe = 0;
        st.free_listed = true;
        self.free_blocks.push(victim);
        self.stats.blocks_erased += 1;
    }

    /// Walks the local version chain of `lpa` from its newest locally held
    /// version backwards, newest first. Stops where history has been erased
    /// locally (the remainder lives in the vault).
    pub fn local_chain(&self, lpa: Lpa) -> Vec<LocalVersion> {
        let mut out = Vec::new();
        let mut cursor = match self.mapping.get(lpa as usize) {
            Some(MapEntry::Mapped(flat)) => {
                Some((*flat, self.meta[*flat as usize].write_seq))
            }
            Some(MapEntry::Trimmed { prev_ppa, prev_seq }) => Some((*prev_ppa, *prev_seq)),
            _ => None,
        };
        while let Some((flat, expect_seq)) = cursor {
            let m = &self.meta[flat as usize];
            if m.lifecycle == PageLifecycle::Free
                || m.write_seq != expect_seq
                || m.lpa != Some(lpa)
            {
                break;
            }
            out.push(LocalVersion {
                write_seq: m.write_seq,
                timestamp: m.timestamp,
                flat_ppa: flat,
                digest: m.digest,
                lifecycle: m.lifecycle,
            });
            cursor = m.prev;
        }
        out
    }

    /// Whether the version (lpa, write_seq) is still readable on flash.
    pub fn has_live_version(&self, lpa: Lpa, write_seq: Seq) -> bool {
        self.local_chain(lpa)
            .iter()
            .any(|v| v.write_seq == write_seq)
    }

    /// Reads the bytes of a locally held version.
    pub fn read_version(&self, v: &LocalVersion) -> Result<Vec<u8>, FtlError> {
        let addr = self.config.geometry.addr_of_flat(v.flat_ppa);
        Ok(self.nand.read_page(addr)?.to_vec())
    }

    /// Latest log entry seq issued so far.
    pub fn last_seq(&self) -> Seq {
        self.log.last_seq()
    }

    pub fn is_mapped(&self, lpa: Lpa) -> bool {
        matches!(self.mapping.get(lpa as usize), Some(MapEntry::Mapped(_)))
    }

    /// Test/diagnostic hook: lifecycle of every physical page.
    pub fn lifecycle_counts(&self) -> HashMap<PageLifecycle, u64> {
        let mut counts = HashMap::new();
        for m in &self.meta {
            *counts.entry(m.lifecycle).or_insert(0) += 1;
        }
        counts
    }
}

/// Drains entries appended since `from_seq` (exclusive) for callers that
/// mirror the log; used by tests.
pub fn entries_after(log: &OpLog, from_seq: Seq) -> Vec<LogEntry> {
    let mut out = Vec::new();
    for seg in log.sealed_unshipped() {
        for e in &seg.entries {
            if e.seq > from_seq {
                out.push(e.clone());
            }
        }
    }
    for e in log.unsealed_entries() {
        if e.seq > from_seq {
            out.push(e.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_ftl() -> Ftl {
        Ftl::new(FtlConfig::new(Geometry::tiny())).unwrap()
    }

    fn page(b: u8) -> Vec<u8> {
        vec![b; 16]
    }

    #[test]
    fn first_write_has_no_prior_version() {
        let mut f = tiny_ftl();
        let seq = f.write(0, &page(b'A'), 1).unwrap();
        assert_eq!(seq, 1);
        assert!(f.is_mapped(0));
        assert_eq!(f.retained_pages(), 0);
        assert_eq!(f.read(0).unwrap().unwrap(), page(b'A'));
    }

    #[test]
    fn overwrite_retains_previous_version() {
        let mut f = tiny_ftl();
        f.write(0, &page(b'A'), 1).unwrap();
        f.write(0, &page(b'B'), 2).unwrap();
        assert_eq!(f.read(0).unwrap().unwrap(), page(b'B'));
        let chain = f.local_chain(0);
        assert_eq!(chain.len(), 2);
        assert_eq!(chain[0].lifecycle, PageLifecycle::Valid);
        assert_eq!(chain[1].lifecycle, PageLifecycle::InvalidRetained);
        assert_eq!(f.read_version(&chain[1]).unwrap(), page(b'A'));
    }

    #[test]
    fn read_unwritten_is_unmapped() {
        let mut f = tiny_ftl();
        assert_eq!(f.read(5).unwrap(), None);
    }

    #[test]
    fn out_of_range_rejected() {
        let mut f = tiny_ftl();
        let cap = f.logical_pages();
        assert!(matches!(
            f.write(cap, &page(0), 1),
            Err(FtlError::OutOfRange(_, _))
        ));
        assert!(matches!(f.read(cap), Err(FtlError::OutOfRange(_, _))));
    }

    #[test]
    fn bad_length_rejected() {
        let mut f = tiny_ftl();
        assert!(matches!(
            f.write(0, &[0u8; 8], 1),
            Err(FtlError::BadLength { .. })
        ));
    }

    #[test]
    fn trim_retains_and_unmaps() {
        let mut f = tiny_ftl();
        f.write(0, &page(b'A'), 1).unwrap();
        f.trim(0, 1, 2).unwrap();
        assert_eq!(f.read(0).unwrap(), None);
        let chain = f.local_chain(0);
        assert_eq!(chain.len(), 1);
        assert_eq!(chain[0].lifecycle, PageLifecycle::InvalidRetained);
        assert_eq!(f.read_version(&chain[0]).unwrap(), page(b'A'));
        assert_eq!(f.trim_events(0).len(), 1);
    }

    #[test]
    fn trim_unmapped_range_is_logged_noop() {
        let mut f = tiny_ftl();
        let before = f.last_seq();
        f.trim(0, 2, 1).unwrap();
        assert_eq!(f.last_seq(), before + 1);
        assert_eq!(f.retained_pages(), 0);
        assert!(f.trim_events(0).is_empty());
    }

    #[test]
    fn write_after_trim_links_to_pre_trim_version() {
        let mut f = tiny_ftl();
        f.write(0, &page(b'A'), 1).unwrap();
        f.trim(0, 1, 2).unwrap();
        f.write(0, &page(b'B'), 3).unwrap();
        let chain = f.local_chain(0);
        assert_eq!(chain.len(), 2);
        assert_eq!(f.read_version(&chain[0]).unwrap(), page(b'B'));
        assert_eq!(f.read_version(&chain[1]).unwrap(), page(b'A'));
    }

    #[test]
    fn retained_inventory_ordered_by_seq() {
        let mut f = tiny_ftl();
        f.write(0, &page(b'A'), 1).unwrap(); // seq 1
        f.write(0, &page(b'B'), 2).unwrap(); // seq 2, A retained
        f.write(1, &page(b'C'), 3).unwrap(); // seq 3
        f.write(1, &page(b'D'), 4).unwrap(); // seq 4, C retained
        let inv = f.retained_inventory();
        assert_eq!(inv.iter().map(|(s, _)| *s).collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn empty_inventory_on_fresh_device() {
        let f = tiny_ftl();
        assert!(f.retained_inventory().is_empty());
    }

    #[test]
    fn claim_ack_lifecycle() {
        let mut f = tiny_ftl();
        f.write(0, &page(b'A'), 1).unwrap();
        f.write(0, &page(b'B'), 2).unwrap();
        let claims = f.claim_for_offload(8);
        assert_eq!(claims.len(), 1);
        assert_eq!(claims[0].data, page(b'A'));
        assert_eq!(
            f.page_meta(claims[0].flat_ppa).lifecycle,
            PageLifecycle::OffloadPending
        );
        f.ack_offload(&claims, 3);
        assert_eq!(
            f.page_meta(claims[0].flat_ppa).lifecycle,
            PageLifecycle::SafeToErase
        );
        assert_eq!(
            f.page_meta(claims[0].flat_ppa).safe_reason,
            Some(SafeReason::VaultAcked)
        );
    }

    #[test]
    fn rollback_returns_to_retained() {
        let mut f = tiny_ftl();
        f.write(0, &page(b'A'), 1).unwrap();
        f.write(0, &page(b'B'), 2).unwrap();
        let claims = f.claim_for_offload(8);
        f.rollback_offload(&claims);
        assert_eq!(f.retained_inventory().len(), 1);
        assert_eq!(
            f.page_meta(claims[0].flat_ppa).lifecycle,
            PageLifecycle::InvalidRetained
        );
    }

    #[test]
    fn gc_never_erases_retained_blocks() {
        // Fill the tiny device so GC pressure exists while retained pages are
        // scattered everywhere; GC must erase nothing.
        let mut f = tiny_ftl();
        let mut writes = 0u64;
        loop {
            match f.write(writes % 8, &page(writes as u8), writes + 1) {
                Ok(_) => writes += 1,
                Err(FtlError::NoFreePage) => break,
                Err(e) => panic!("{e}"),
            }
        }
        assert!(!f.can_host_alloc());
        let report = f.garbage_collect(writes + 1);
        assert_eq!(report.blocks_erased, 0);
        assert!(report.pages_awaiting_offload > 0);
    }

    #[test]
    fn gc_erases_after_ack() {
        let mut f = tiny_ftl();
        let mut t = 0;
        loop {
            t += 1;
            if let Err(FtlError::NoFreePage) = f.write(t % 8, &page(t as u8), t) {
                break;
            }
        }
        let claims = f.claim_for_offload(usize::MAX);
        assert!(!claims.is_empty());
        f.ack_offload(&claims, t + 1);
        let report = f.garbage_collect(t + 2);
        assert!(report.blocks_erased >= 1);
        // Wear counters moved.
        assert!(f.nand().wear_report().total_erases >= 1);
    }

    #[test]
    fn gc_move_preserves_version_identity() {
        let mut f = tiny_ftl();
        // One long-lived valid page plus churn on the others.
        let keeper_seq = f.write(0, &page(0xEE), 1).unwrap();
        let mut t = 1;
        loop {
            t += 1;
            if let Err(FtlError::NoFreePage) = f.write(1 + (t % 7), &page(t as u8), t) {
                break;
            }
        }
        let claims = f.claim_for_offload(usize::MAX);
        f.ack_offload(&claims, t + 1);
        f.garbage_collect(t + 2);
        let chain = f.local_chain(0);
        assert_eq!(chain[0].write_seq, keeper_seq);
        assert_eq!(f.read(0).unwrap().unwrap(), page(0xEE));
    }

    #[test]
    fn baseline_mode_drops_versions() {
        let mut f = Ftl::new(FtlConfig::baseline(Geometry::tiny())).unwrap();
        f.write(0, &page(b'A'), 1).unwrap();
        f.write(0, &page(b'B'), 2).unwrap();
        assert_eq!(f.retained_pages(), 0);
        assert_eq!(f.local_chain(0).len(), 1);
        f.trim(0, 1, 3).unwrap();
        assert_eq!(f.read(0).unwrap(), None);
        assert!(f.local_chain(0).is_empty());
    }

    #[test]
    fn single_valid_invariant() {
        let mut f = tiny_ftl();
        let cap = f.logical_pages();
        for t in 0..40u64 {
            let _ = f.write(t % cap, &page(t as u8), t + 1);
        }
        let counts = f.lifecycle_counts();
        let mapped = (0..cap).filter(|&l| f.is_mapped(l)).count() as u64;
        assert_eq!(counts.get(&PageLifecycle::Valid).copied().unwrap_or(0), mapped);
    }
}
