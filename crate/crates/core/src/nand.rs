//! Raw NAND flash array emulation: program/erase semantics and wear
//! accounting. Knows nothing about mapping or retention policy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Physical layout of the emulated flash array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub channels: u32,
    pub chips_per_channel: u32,
    pub blocks_per_chip: u32,
    pub pages_per_block: u32,
    pub page_size: u32,
}

impl Geometry {
    /// Desk-scale default: 2 ch x 2 chips x 128 blocks x 64 pages x 4 KiB = 128 MiB raw.
    pub fn desk_scale() -> Self {
        Geometry {
            channels: 2,
            chips_per_channel: 2,
            blocks_per_chip: 128,
            pages_per_block: 64,
            page_size: 4096,
        }
    }

    /// Tiny geometry for unit tests and brute-force oracles:
    /// 1 x 1 x 4 blocks x 8 pages x 16-byte pages.
    pub fn tiny() -> Self {
        Geometry {
            channels: 1,
            chips_per_channel: 1,
            blocks_per_chip: 4,
            pages_per_block: 8,
            page_size: 16,
        }
    }

    pub fn validate(&self) -> Result<(), NandError> {
        if self.channels < 1
            || self.chips_per_channel < 1
            || self.blocks_per_chip < 1
            || self.pages_per_block < 1
        {
            return Err(NandError::BadGeometry("all counts must be >= 1"));
        }
        if self.page_size < 16 || !self.page_size.is_power_of_two() {
            return Err(NandError::BadGeometry(
                "page_size must be >= 16 and a power of two",
            ));
        }
        Ok(())
    }

    pub fn total_blocks(&self) -> u32 {
        self.channels * self.chips_per_channel * self.blocks_per_chip
    }

    pub fn total_pages(&self) -> u32 {
        self.total_blocks() * self.pages_per_block
    }

    pub fn raw_bytes(&self) -> u64 {
        self.total_pages() as u64 * self.page_size as u64
    }

    /// Flat index of a block within the array, channel-major.
    pub fn block_index(&self, channel: u32, chip: u32, block: u32) -> Option<u32> {
        if channel >= self.channels || chip >= self.chips_per_channel || block >= self.blocks_per_chip
        {
            return None;
        }
        Some((channel * self.chips_per_channel + chip) * self.blocks_per_chip + block)
    }

    pub fn block_of_flat(&self, flat_block: u32) -> (u32, u32, u32) {
        let block = flat_block % self.blocks_per_chip;
        let rest = flat_block / self.blocks_per_chip;
        let chip = rest % self.chips_per_channel;
        let channel = rest / self.chips_per_channel;
        (channel, chip, block)
    }

    pub fn page_index(&self, addr: PhysPageAddr) -> Option<u32> {
        if addr.page >= self.pages_per_block {
            return None;
        }
        self.block_index(addr.channel, addr.chip, addr.block)
            .map(|b| b * self.pages_per_block + addr.page)
    }

    pub fn addr_of_flat(&self, flat_page: u32) -> PhysPageAddr {
        let page = flat_page % self.pages_per_block;
        let (channel, chip, block) = self.block_of_flat(flat_page / self.pages_per_block);
        PhysPageAddr {
            channel,
            chip,
            block,
            page,
        }
    }
}

/// Physical page address, all indices zero-based within the geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhysPageAddr {
    pub channel: u32,
    pub chip: u32,
    pub block: u32,
    pub page: u32,
}

impl std::fmt::Display for PhysPageAddr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({},{},{},{})",
            self.channel, self.chip, self.block, self.page
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawPageState {
    Erased,
    Programmed,
}

/// Wear accounting snapshot. Counters are monotone non-decreasing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WearCounters {
    pub per_block_erases: Vec<u64>,
    pub total_programs: u64,
    pub total_erases: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NandError {
    #[error("invalid geometry: {0}")]
    BadGeometry(&'static str),
    #[error("address {0} out of bounds")]
    BadAddress(PhysPageAddr),
    #[error("bad block address ({0},{1},{2})")]
    BadBlockAddress(u32, u32, u32),
    #[error("data length {got} != page size {want}")]
    BadLength { got: usize, want: usize },
    #[error("program on already-programmed page {0}")]
    ProgramOnProgrammed(PhysPageAddr),
    #[error("read of erased page {0}")]
    ReadErased(PhysPageAddr),
}

/// In-memory flash array. Externally single-writer; `wear_report` returns a
/// consistent snapshot.
pub struct NandArray {
    geometry: Geometry,
    data: Vec<u8>,
    state: Vec<RawPageState>,
    wear: WearCounters,
}

impl NandArray {
    pub fn new(geometry: Geometry) -> Result<Self, NandError> {
        geometry.validate()?;
        let pages = geometry.total_pages() as usize;
        Ok(NandArray {
            geometry,
            data: vec![0u8; pages * geometry.page_size as usize],
            state: vec![RawPageState::Erased; pages],
            wear: WearCounters {
                per_block_erases: vec![0; geometry.total_blocks() as usize],
                total_programs: 0,
                total_erases: 0,
            },
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn program_page(&mut self, addr: PhysPageAddr, data: &[u8]) -> Result<(), NandError> {
        let idx = self
            .geometry
            .page_index(addr)
            .ok_or(NandError::BadAddress(addr))? as usize;
        if data.len() != self.geometry.page_size as usize {
            return Err(NandError::BadLength {
                got: data.len(),
                want: self.geometry.page_size as usize,
            });
        }
        if self.state[idx] == RawPageState::Programmed {
            return Err(NandError::ProgramOnProgrammed(addr));
        }
        let ps = self.geometry.page_size as usize;
        self.data[idx * ps..(idx + 1) * ps].copy_from_slice(data);
        self.state[idx] = RawPageState::Programmed;
        self.wear.total_programs += 1;
        Ok(())
    }

    pub fn read_page(&self, addr: PhysPageAddr) -> Result<&[u8], NandError> {
        let idx = self
            .geometry
            .page_index(addr)
            .ok_or(NandError::BadAddress(addr))? as usize;
        if self.state[idx] == RawPageState::Erased {
            return Err(NandError::ReadErased(addr));
        }
        let ps = self.geometry.page_size as usize;
        Ok(&self.data[idx * ps..(idx + 1) * ps])
    }

    pub fn page_state(&self, addr: PhysPageAddr) -> Result<RawPageState, NandError> {
        let idx = self
            .geometry
            .page_index(addr)
            .ok_or(NandError::BadAddress(addr))? as usize;
        Ok(self.state[idx])
    }

    pub fn erase_block(&mut self, channel: u32, chip: u32, block: u32) -> Result<(), NandError> {
        let b = self
            .geometry
            .block_index(channel, chip, block)
            .ok_or(NandError::BadBlockAddress(channel, chip, block))? as usize;
        let ppb = self.geometry.pages_per_block as usize;
        for p in b * ppb..(b + 1) * ppb {
            self.state[p] = RawPageState::Erased;
        }
        self.wear.per_block_erases[b] += 1;
        self.wear.total_erases += 1;
        Ok(())
    }

    pub fn wear_report(&self) -> WearCounters {
        self.wear.clone()
    }

    pub fn block_erase_count(&self, flat_block: u32) -> u64 {
        self.wear.per_block_erases[flat_block as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn addr(channel: u32, chip: u32, block: u32, page: u32) -> PhysPageAddr {
        PhysPageAddr {
            channel,
            chip,
            block,
            page,
        }
    }

    #[test]
    fn program_erased_page() {
        let mut nand = NandArray::new(Geometry::tiny()).unwrap();
        nand.program_page(addr(0, 0, 0, 0), &[0u8; 16]).unwrap();
        assert_eq!(
            nand.page_state(addr(0, 0, 0, 0)).unwrap(),
            RawPageState::Programmed
        );
    }

    #[test]
    fn program_twice_rejected() {
        let mut nand = NandArray::new(Geometry::tiny()).unwrap();
        nand.program_page(addr(0, 0, 0, 0), &[1u8; 16]).unwrap();
        assert_eq!(
            nand.program_page(addr(0, 0, 0, 0), &[2u8; 16]),
            Err(NandError::ProgramOnProgrammed(addr(0, 0, 0, 0)))
        );
    }

    #[test]
    fn bad_length_rejected() {
        let mut nand = NandArray::new(Geometry::tiny()).unwrap();
        assert_eq!(
            nand.program_page(addr(0, 0, 0, 0), &[0u8; 8]),
            Err(NandError::BadLength { got: 8, want: 16 })
        );
    }

    #[test]
    fn read_round_trip() {
        let mut nand = NandArray::new(Geometry::tiny()).unwrap();
        let data: Vec<u8> = (0..16).collect();
        nand.program_page(addr(0, 0, 1, 3), &data).unwrap();
        assert_eq!(nand.read_page(addr(0, 0, 1, 3)).unwrap(), &data[..]);
    }

    #[test]
    fn read_erased_rejected() {
        let nand = NandArray::new(Geometry::tiny()).unwrap();
        assert_eq!(
            nand.read_page(addr(0, 0, 0, 0)),
            Err(NandError::ReadErased(addr(0, 0, 0, 0)))
        );
    }

    #[test]
    fn bad_address_rejected() {
        let nand = NandArray::new(Geometry::tiny()).unwrap();
        assert!(matches!(
            nand.read_page(addr(0, 0, 4, 0)),
            Err(NandError::BadAddress(_))
        ));
        assert!(matches!(
            nand.read_page(addr(1, 0, 0, 0)),
            Err(NandError::BadAddress(_))
        ));
    }

    #[test]
    fn random_round_trips() {
        // 1000 random program/read pairs, all byte-exact.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let geom = Geometry {
            channels: 2,
            chips_per_channel: 2,
            blocks_per_chip: 8,
            pages_per_block: 8,
            page_size: 32,
        };
        let mut nand = NandArray::new(geom).unwrap();
        let mut used = std::collections::HashSet::new();
        let mut done = 0;
        while done < 1000 {
            let a = addr(
                rng.gen_range(0..2),
                rng.gen_range(0..2),
                rng.gen_range(0..8),
                rng.gen_range(0..8),
            );
            let flat = geom.page_index(a).unwrap();
            if !used.insert(flat) {
                // Wear the block around so pages become reusable.
                nand.erase_block(a.channel, a.chip, a.block).unwrap();
                used.retain(|&f| f / geom.pages_per_block != flat / geom.pages_per_block);
                used.insert(flat);
            }
            let mut data = vec![0u8; 32];
            rng.fill(&mut data[..]);
            nand.program_page(a, &data).unwrap();
            assert_eq!(nand.read_page(a).unwrap(), &data[..]);
            done += 1;
        }
    }

    #[test]
    fn erase_resets_pages_and_counts() {
        let mut nand = NandArray::new(Geometry::tiny()).unwrap();
        for p in 0..3 {
            nand.program_page(addr(0, 0, 0, p), &[p as u8; 16]).unwrap();
        }
        nand.erase_block(0, 0, 0).unwrap();
        for p in 0..8 {
            assert_eq!(
                nand.page_state(addr(0, 0, 0, p)).unwrap(),
                RawPageState::Erased
            );
        }
        assert_eq!(nand.wear_report().per_block_erases[0], 1);
    }

    #[test]
    fn erase_never_programmed_block() {
        let mut nand = NandArray::new(Geometry::tiny()).unwrap();
        nand.erase_block(0, 0, 2).unwrap();
        assert_eq!(nand.wear_report().per_block_erases[2], 1);
        assert_eq!(nand.wear_report().total_erases, 1);
    }

    #[test]
    fn program_erase_program() {
        let mut nand = NandArray::new(Geometry::tiny()).unwrap();
        nand.program_page(addr(0, 0, 0, 0), &[1u8; 16]).unwrap();
        nand.erase_block(0, 0, 0).unwrap();
        nand.program_page(addr(0, 0, 0, 0), &[2u8; 16]).unwrap();
        assert_eq!(nand.read_page(addr(0, 0, 0, 0)).unwrap(), &[2u8; 16]);
    }

    #[test]
    fn fresh_device_wear_zero() {
        let nand = NandArray::new(Geometry::tiny()).unwrap();
        let w = nand.wear_report();
        assert_eq!(w.total_programs, 0);
        assert_eq!(w.total_erases, 0);
        assert!(w.per_block_erases.iter().all(|&e| e == 0));
    }

    #[test]
    fn n_erases_counted() {
        let mut nand = NandArray::new(Geometry::tiny()).unwrap();
        for i in 0..5 {
            nand.erase_block(0, 0, i % 4).unwrap();
        }
        assert_eq!(nand.wear_report().total_erases, 5);
    }

    #[test]
    fn geometry_validation() {
        let mut g = Geometry::tiny();
        g.page_size = 24;
        assert!(NandArray::new(g).is_err());
        g.page_size = 8;
        assert!(NandArray::new(g).is_err());
        let mut g = Geometry::tiny();
        g.channels = 0;
        assert!(NandArray::new(g).is_err());
    }

    #[test]
    fn flat_index_round_trip() {
        let g = Geometry::desk_scale();
        for flat in [0u32, 1, 63, 64, 4095, g.total_pages() - 1] {
            let a = g.addr_of_flat(flat);
            assert_eq!(g.page_index(a).unwrap(), flat);
        }
    }
}
