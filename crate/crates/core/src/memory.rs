// SPDX-License-Identifier: Apache-2.0

//! Shared DRAM, scratchpad banks, the host page table, and host copy cost.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::config::CalibrationConfig;
use crate::engine::Cycle;

pub const PAGE_SHIFT: u32 = 12;
pub const PAGE_SIZE: u32 = 1 << PAGE_SHIFT;

/// First byte of the physical DRAM window.
pub const DRAM_BASE: u32 = 0x8000_0000;
/// Size of the physical DRAM window.
pub const DRAM_SIZE: u32 = 0x4000_0000;
/// Physical region holding the page-table pages.
pub const PAGE_TABLE_BASE: u32 = DRAM_BASE;
pub const PAGE_TABLE_SIZE: u32 = 0x0100_0000;
/// Accelerator aperture (cluster SPMs and peripherals) in the physical map.
pub const PMCA_APERTURE_BASE: u32 = 0x1000_0000;
pub const PMCA_APERTURE_SIZE: u32 = 0x1000_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VirtualAddress(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhysicalAddress(pub u32);

impl VirtualAddress {
    pub fn page(self) -> u32 {
        self.0 >> PAGE_SHIFT
    }

    pub fn offset(self) -> u32 {
        self.0 & (PAGE_SIZE - 1)
    }
}

impl PhysicalAddress {
    pub fn page(self) -> u32 {
        self.0 >> PAGE_SHIFT
    }

    pub fn from_page(page: u32, offset: u32) -> Self {
        Self((page << PAGE_SHIFT) | (offset & (PAGE_SIZE - 1)))
    }
}

impl fmt::Display for VirtualAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "va:{:#010x}", self.0)
    }
}

impl fmt::Display for PhysicalAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pa:{:#010x}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MemoryError {
    #[error("physical access {addr} (+{bytes} bytes) outside DRAM")]
    OutOfRange { addr: PhysicalAddress, bytes: u32 },
    #[error("page fault at {0}")]
    PageFault(VirtualAddress),
    #[error("SPM bank {bank} out of range (cluster has {banks} banks)")]
    BadBank { bank: u32, banks: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PageFlags {
    pub read: bool,
    pub write: bool,
}

impl PageFlags {
    pub const RW: PageFlags = PageFlags {
        read: true,
        write: true,
    };
    pub const RO: PageFlags = PageFlags {
        read: true,
        write: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Translation {
    pub page: u32,
    pub flags: PageFlags,
}

/// Host page table of the user-space process.
#[derive(Debug, Clone)]
pub struct PageTable {
    levels: u32,
    map: BTreeMap<u32, Translation>,
}

impl PageTable {
    pub fn new(levels: u32) -> Self {
        assert!(levels > 0, "a page table needs at least one level");
        Self {
            levels,
            map: BTreeMap::new(),
        }
    }

    /// Identity mapping for every page in `[first, first + count)`.
    pub fn identity(levels: u32, first: u32, count: u32) -> Self {
        let mut pt = Self::new(levels);
        for page in first..first + count {
            pt.map(page, page, PageFlags::RW);
        }
        pt
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn map(&mut self, vpage: u32, ppage: u32, flags: PageFlags) {
        self.map.insert(vpage, Translation { page: ppage, flags });
    }

    pub fn unmap(&mut self, vpage: u32) {
        self.map.remove(&vpage);
    }

    pub fn lookup(&self, vpage: u32) -> Option<Translation> {
        self.map.get(&vpage).copied()
    }

    pub fn translate(&self, va: VirtualAddress) -> Option<PhysicalAddress> {
        self.lookup(va.page())
            .map(|t| PhysicalAddress::from_page(t.page, va.offset()))
    }

    pub fn mapped_pages(&self) -> usize {
        self.map.len()
    }

    /// Physical address of the table word read at `level` while walking `vpage`.
    pub fn entry_address(&self, vpage: u32, level: u32) -> PhysicalAddress {
        // Radix split of the 20-bit page number, upper levels first.
        let bits_per_level = 20u32.div_ceil(self.levels);
        let shift = bits_per_level * (self.levels - 1 - level);
        let index = (vpage >> shift) & ((1 << bits_per_level) - 1);
        let region = (PAGE_TABLE_SIZE / self.levels) & !(PAGE_SIZE - 1);
        let word = (index * 4) % region;
        PhysicalAddress(PAGE_TABLE_BASE + level * region + word)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkResult {
    pub va: VirtualAddress,
    pub result: Result<(PhysicalAddress, PageFlags), MemoryError>,
    /// Completion of each table read, in walk order.
    pub steps: Vec<Cycle>,
    pub done: Cycle,
}

/// Shared DRAM: fixed latency plus beat-serialized transfer, FIFO per port,
/// with a sparse byte backing store.
#[derive(Debug, Clone)]
pub struct Dram {
    base_latency: Cycle,
    beat_bytes: u64,
    beat_cycles: Cycle,
    port_free: Vec<Cycle>,
    pages: HashMap<u32, Box<[u8]>>,
    accesses: u64,
}

impl Dram {
    pub fn new(cal: &CalibrationConfig, ports: usize) -> Self {
        Self {
            base_latency: cal.dram_base_latency,
            beat_bytes: cal.dram_beat_bytes,
            beat_cycles: cal.dram_beat_cycles,
            port_free: vec![0; ports.max(1)],
            pages: HashMap::new(),
            accesses: 0,
        }
    }

    pub fn base_latency(&self) -> Cycle {
        self.base_latency
    }

    pub fn accesses(&self) -> u64 {
        self.accesses
    }

    pub fn uncontended_latency(&self, bytes: u32) -> Cycle {
        self.base_latency + (bytes as u64).div_ceil(self.beat_bytes) * self.beat_cycles
    }

    fn check_range(addr: PhysicalAddress, bytes: u32) -> Result<(), MemoryError> {
        let start = addr.0 as u64;
        let end = start + bytes as u64;
        if start < DRAM_BASE as u64 || end > DRAM_BASE as u64 + DRAM_SIZE as u64 {
            return Err(MemoryError::OutOfRange { addr, bytes });
        }
        Ok(())
    }

    /// Charge a timed access on `port` issued at `t`; returns the completion cycle.
    pub fn access(
        &mut self,
        port: usize,
        addr: PhysicalAddress,
        bytes: u32,
        t: Cycle,
    ) -> Result<Cycle, MemoryError> {
        Self::check_range(addr, bytes)?;
        let start = t.max(self.port_free[port]);
        let done = start + self.uncontended_latency(bytes);
        self.port_free[port] = done;
        self.accesses += 1;
        Ok(done)
    }

    pub fn read(&self, addr: PhysicalAddress, buf: &mut [u8]) -> Result<(), MemoryError> {
        Self::check_range(addr, buf.len() as u32)?;
        let mut a = addr.0;
        for b in buf.iter_mut() {
            *b = self
                .pages
                .get(&(a >> PAGE_SHIFT))
                .map_or(0, |p| p[(a & (PAGE_SIZE - 1)) as usize]);
            a += 1;
        }
        Ok(())
    }

    pub fn write(&mut self, addr: PhysicalAddress, data: &[u8]) -> Result<(), MemoryError> {
        Self::check_range(addr, data.len() as u32)?;
        let mut a = addr.0;
        for b in data {
            let page = self
                .pages
                .entry(a >> PAGE_SHIFT)
                .or_insert_with(|| vec![0u8; PAGE_SIZE as usize].into_boxed_slice());
            page[(a & (PAGE_SIZE - 1)) as usize] = *b;
            a += 1;
        }
        Ok(())
    }

    pub fn read_u32(&self, addr: PhysicalAddress) -> Result<u32, MemoryError> {
        let mut b = [0u8; 4];
        self.read(addr, &mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn write_u32(&mut self, addr: PhysicalAddress, v: u32) -> Result<(), MemoryError> {
        self.write(addr, &v.to_le_bytes())
    }
}

/// Walk `pt` for `va`, charging one 4-byte DRAM read per level on `port`.
pub fn pt_walk(
    dram: &mut Dram,
    port: usize,
    pt: &PageTable,
    va: VirtualAddress,
    t: Cycle,
) -> WalkResult {
    let mut now = t;
    let mut steps = Vec::with_capacity(pt.levels() as usize);
    for level in 0..pt.levels() {
        now = dram
            .access(port, pt.entry_address(va.page(), level), 4, now)
            .expect("page-table region lies inside DRAM");
        steps.push(now);
    }
    let result = match pt.lookup(va.page()) {
        Some(tr) => Ok((PhysicalAddress::from_page(tr.page, va.offset()), tr.flags)),
        None => Err(MemoryError::PageFault(va)),
    };
    WalkResult {
        va,
        result,
        steps,
        done: now,
    }
}

/// One cluster's L1 scratchpad: data bytes plus per-bank occupancy.
#[derive(Debug, Clone)]
pub struct Spm {
    data: Vec<u8>,
    busy_until: Vec<Cycle>,
}

impl Spm {
    pub fn new(bytes: u32, banks: u32) -> Self {
        Self {
            data: vec![0; bytes as usize],
            busy_until: vec![0; banks as usize],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn banks(&self) -> u32 {
        self.busy_until.len() as u32
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    /// One access per bank per cycle; conflicting accesses serialize.
    pub fn access(&mut self, bank: u32, t: Cycle) -> Result<Cycle, MemoryError> {
        let banks = self.banks();
        let slot = self
            .busy_until
            .get_mut(bank as usize)
            .ok_or(MemoryError::BadBank { bank, banks })?;
        let start = t.max(*slot);
        *slot = start + 1;
        Ok(start + 1)
    }
}

/// Host cycles to copy `bytes` into the uncached contiguous section and
/// rewrite `lds_nodes` embedded pointers.
pub fn host_copy(cal: &CalibrationConfig, bytes: u64, lds_nodes: u64) -> Cycle {
    (bytes as f64 / cal.host_copy_bytes_per_cycle).ceil() as Cycle
        + lds_nodes * cal.lds_rewrite_cycles_per_node
}

/// Bump allocator handing out contiguous physical ranges inside DRAM.
#[derive(Debug, Clone)]
pub struct PhysAllocator {
    next: u32,
    end: u32,
}

impl PhysAllocator {
    pub fn new(start: u32, end: u32) -> Self {
        Self { next: start, end }
    }

    pub fn alloc_pages(&mut self, pages: u32) -> Option<u32> {
        let bytes = pages.checked_mul(PAGE_SIZE)?;
        if self.end - self.next < bytes {
            return None;
        }
        let first = self.next >> PAGE_SHIFT;
        self.next += bytes;
        Some(first)
    }
}
