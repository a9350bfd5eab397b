// SPDX-License-Identifier: Apache-2.0

//! Remapping address block: the accelerator's software-managed IOMMU.
//!
//! The L1 TLB is fully associative and answers in a single cycle. An L1 miss
//! occupies the L2 lookup unit, which searches the selected bank of the
//! set-associative L2 TLB `l2_ways_per_cycle` ways at a time. L1 hits keep
//! completing in one cycle while that search is in flight (hit-under-miss).
//! Requests missing in both levels are queued for the miss handler.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::config::{CalibrationConfig, PlatformConfig};
use crate::engine::Cycle;
use crate::memory::{PhysicalAddress, VirtualAddress};

/// AXI-ID-like identifier of a bus master: cluster in the upper half, PE (or
/// DMA channel) in the lower half.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MasterId(pub u32);

/// Lower-half offset of DMA channel master ids.
pub const DMA_MASTER_BASE: u16 = 0x100;

impl MasterId {
    pub fn new(cluster: u16, pe: u16) -> Self {
        Self(((cluster as u32) << 16) | pe as u32)
    }

    pub fn dma(cluster: u16, channel: u16) -> Self {
        Self::new(cluster, DMA_MASTER_BASE + channel)
    }

    pub fn cluster(self) -> u16 {
        (self.0 >> 16) as u16
    }

    pub fn pe(self) -> u16 {
        self.0 as u16
    }

    pub fn is_dma(self) -> bool {
        self.pe() >= DMA_MASTER_BASE
    }
}

impl fmt::Display for MasterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_dma() {
            write!(f, "c{}.dma{}", self.cluster(), self.pe() - DMA_MASTER_BASE)
        } else {
            write!(f, "c{}.pe{}", self.cluster(), self.pe())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TlbEntry {
    pub vpn: u32,
    pub ppn: u32,
    pub read: bool,
    pub write: bool,
    pub valid: bool,
    /// Assigned by the RAB when the entry is written.
    pub seq: u64,
}

impl TlbEntry {
    pub fn new(vpn: u32, ppn: u32, read: bool, write: bool) -> Self {
        Self {
            vpn,
            ppn,
            read,
            write,
            valid: true,
            seq: 0,
        }
    }

    pub fn invalid() -> Self {
        Self::default()
    }

    pub fn permits(&self, is_write: bool) -> bool {
        if is_write {
            self.write
        } else {
            self.read
        }
    }

    /// 64-bit descriptor used in config-port trace records.
    pub fn descriptor(&self, coord: SlotCoord) -> u64 {
        let (level, slot) = match coord {
            SlotCoord::L1(s) => (0u64, s as u64),
            SlotCoord::L2 { bank, set, way } => (1, ((bank << 8 | set) << 8 | way) as u64),
        };
        (self.ppn as u64 & 0xF_FFFF)
            | (slot & 0xFFF) << 20
            | (self.vpn as u64 & 0xF_FFFF) << 32
            | (self.valid as u64) << 60
            | (self.read as u64) << 61
            | (self.write as u64) << 62
            | level << 63
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlbLevel {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SlotCoord {
    L1(u32),
    L2 { bank: u32, set: u32, way: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MissRecord {
    pub va: VirtualAddress,
    pub master: MasterId,
    pub is_write: bool,
    pub issue: Cycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeKind {
    L1Hit,
    L2Hit,
    MissEnqueued,
    MissDropped,
    PermissionFault,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TranslationOutcome {
    pub kind: OutcomeKind,
    pub pa: Option<PhysicalAddress>,
    /// Cycle at which the outcome is known (and a hit's address is usable).
    pub ready: Cycle,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RabError {
    #[error("slot {0:?} outside the TLB geometry")]
    BadCoordinates(SlotCoord),
    #[error("L2 slot {coord:?} is not in the set of vpn {vpn:#x}")]
    WrongSet { coord: SlotCoord, vpn: u32 },
    #[error("the L2 TLB is disabled")]
    L2Disabled,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RabStats {
    pub l1_hits: u64,
    pub l2_hits: u64,
    pub misses: u64,
    pub dropped: u64,
    pub faults: u64,
}

/// A TLB slot with its write history; entries become visible at the cycle
/// their configuration write completes.
#[derive(Debug, Clone)]
struct Slot {
    history: Vec<(Cycle, TlbEntry)>,
}

impl Slot {
    fn new() -> Self {
        Self {
            history: vec![(0, TlbEntry::invalid())],
        }
    }

    fn at(&self, t: Cycle) -> &TlbEntry {
        self.history
            .iter()
            .rev()
            .find(|(v, _)| *v <= t)
            .map(|(_, e)| e)
            .unwrap_or(&self.history[0].1)
    }

    fn latest(&self) -> &TlbEntry {
        &self.history.last().expect("slot history is never empty").1
    }

    fn write(&mut self, visible: Cycle, entry: TlbEntry) {
        // Keep history ordered by visibility; later writes win ties.
        let pos = self.history.partition_point(|(v, _)| *v <= visible);
        self.history.insert(pos, (visible, entry));
        if self.history.len() > 8 {
            // Only the newest entry at or before the oldest pending write matters.
            let keep_from = self.history.len() - 8;
            self.history.drain(..keep_from);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct L2Geometry {
    pub banks: u32,
    pub sets: u32,
    pub ways: u32,
}

impl L2Geometry {
    pub fn bank_of(&self, vpn: u32) -> u32 {
        vpn % self.banks
    }

    pub fn set_of(&self, vpn: u32) -> u32 {
        (vpn / self.banks) % self.sets
    }

    fn index(&self, bank: u32, set: u32, way: u32) -> usize {
        ((bank * self.sets + set) * self.ways + way) as usize
    }
}

/// A contiguous translation window configured once before a kernel starts.
/// Looked up alongside the L1 slots and never replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RangeEntry {
    pub first_vpn: u32,
    pub pages: u32,
    pub first_ppn: u32,
    pub read: bool,
    pub write: bool,
}

impl RangeEntry {
    fn lookup(&self, vpn: u32) -> Option<TlbEntry> {
        let off = vpn.checked_sub(self.first_vpn)?;
        (off < self.pages).then(|| TlbEntry::new(vpn, self.first_ppn + off, self.read, self.write))
    }
}

pub struct Rab {
    l1: Vec<Slot>,
    ranges: Vec<RangeEntry>,
    l2: Vec<Slot>,
    geometry: Option<L2Geometry>,
    search_cycles: Cycle,
    config_latency: Cycle,
    l2_free: Cycle,
    queue: VecDeque<MissRecord>,
    queue_depth: usize,
    next_seq: u64,
    stats: RabStats,
}

impl Rab {
    pub fn new(platform: &PlatformConfig, cal: &CalibrationConfig) -> Self {
        let geometry = (platform.rab_l2_entries > 0).then(|| L2Geometry {
            banks: platform.rab_l2_banks,
            sets: platform.l2_sets_per_bank(),
            ways: platform.rab_l2_assoc,
        });
        Self {
            l1: (0..platform.rab_l1_slots).map(|_| Slot::new()).collect(),
            ranges: Vec::new(),
            l2: (0..platform.rab_l2_entries).map(|_| Slot::new()).collect(),
            geometry,
            search_cycles: cal.l2_search_cycles(platform.rab_l2_assoc),
            config_latency: cal.rab_config_write_latency,
            l2_free: 0,
            queue: VecDeque::new(),
            queue_depth: cal.miss_queue_depth as usize,
            next_seq: 0,
            stats: RabStats::default(),
        }
    }

    pub fn stats(&self) -> RabStats {
        self.stats
    }

    pub fn l1_slots(&self) -> u32 {
        self.l1.len() as u32
    }

    pub fn l2_geometry(&self) -> Option<L2Geometry> {
        self.geometry
    }

    pub fn l2_search_cycles(&self) -> Cycle {
        self.search_cycles
    }

    pub fn config_latency(&self) -> Cycle {
        self.config_latency
    }

    /// Cycle at which the L2 lookup unit becomes free.
    pub fn l2_busy_until(&self) -> Cycle {
        self.l2_free
    }

    /// L1 entries as seen by a translation issued at `t`.
    pub fn l1_view(&self, t: Cycle) -> Vec<TlbEntry> {
        self.l1.iter().map(|s| *s.at(t)).collect()
    }

    /// Most recently written L1 entries, including writes not yet visible.
    pub fn l1_latest(&self) -> Vec<TlbEntry> {
        self.l1.iter().map(|s| *s.latest()).collect()
    }

    /// Latest entries of the L2 set that `vpn` maps to, with their coordinates.
    pub fn l2_set_latest(&self, vpn: u32) -> Vec<(SlotCoord, TlbEntry)> {
        let Some(g) = self.geometry else {
            return Vec::new();
        };
        let (bank, set) = (g.bank_of(vpn), g.set_of(vpn));
        (0..g.ways)
            .map(|way| {
                (
                    SlotCoord::L2 { bank, set, way },
                    *self.l2[g.index(bank, set, way)].latest(),
                )
            })
            .collect()
    }

    /// L1 slot currently (latest write) holding a valid entry for `vpn`.
    pub fn l1_slot_of(&self, vpn: u32) -> Option<u32> {
        self.l1
            .iter()
            .position(|s| s.latest().valid && s.latest().vpn == vpn)
            .map(|i| i as u32)
    }

    /// Add a range window. Ranges are visible immediately.
    pub fn install_range(&mut self, range: RangeEntry) {
        self.ranges.push(range);
    }

    pub fn ranges(&self) -> &[RangeEntry] {
        &self.ranges
    }

    fn l1_lookup(&self, vpn: u32, t: Cycle) -> Option<TlbEntry> {
        if let Some(e) = self.ranges.iter().find_map(|r| r.lookup(vpn)) {
            return Some(e);
        }
        self.l1
            .iter()
            .map(|s| s.at(t))
            .find(|e| e.valid && e.vpn == vpn)
            .copied()
    }

    fn l2_lookup(&self, vpn: u32, t: Cycle) -> Option<TlbEntry> {
        let g = self.geometry?;
        let (bank, set) = (g.bank_of(vpn), g.set_of(vpn));
        (0..g.ways)
            .map(|way| self.l2[g.index(bank, set, way)].at(t))
            .find(|e| e.valid && e.vpn == vpn)
            .copied()
    }

    fn hit(entry: &TlbEntry, va: VirtualAddress) -> PhysicalAddress {
        PhysicalAddress::from_page(entry.ppn, va.offset())
    }

    /// Translate `va` for `master`, issued at cycle `t`.
    pub fn translate(
        &mut self,
        va: VirtualAddress,
        master: MasterId,
        is_write: bool,
        t: Cycle,
    ) -> TranslationOutcome {
        let vpn = va.page();
        if let Some(e) = self.l1_lookup(vpn, t) {
            return self.resolve(e, va, is_write, t + 1, OutcomeKind::L1Hit);
        }
        let mut ready = t + 1;
        if self.geometry.is_some() {
            let start = ready.max(self.l2_free);
            ready = start + self.search_cycles;
            self.l2_free = ready;
            if let Some(e) = self.l2_lookup(vpn, start) {
                return self.resolve(e, va, is_write, ready, OutcomeKind::L2Hit);
            }
        }
        if self.queue.len() >= self.queue_depth {
            self.stats.dropped += 1;
            return TranslationOutcome {
                kind: OutcomeKind::MissDropped,
                pa: None,
                ready,
            };
        }
        self.stats.misses += 1;
        self.queue.push_back(MissRecord {
            va,
            master,
            is_write,
            issue: ready,
        });
        TranslationOutcome {
            kind: OutcomeKind::MissEnqueued,
            pa: None,
            ready,
        }
    }

    fn resolve(
        &mut self,
        e: TlbEntry,
        va: VirtualAddress,
        is_write: bool,
        ready: Cycle,
        kind: OutcomeKind,
    ) -> TranslationOutcome {
        if !e.permits(is_write) {
            self.stats.faults += 1;
            return TranslationOutcome {
                kind: OutcomeKind::PermissionFault,
                pa: None,
                ready,
            };
        }
        match kind {
            OutcomeKind::L1Hit => self.stats.l1_hits += 1,
            _ => self.stats.l2_hits += 1,
        }
        TranslationOutcome {
            kind,
            pa: Some(Self::hit(&e, va)),
            ready,
        }
    }

    fn check_coord(&self, coord: SlotCoord) -> Result<usize, RabError> {
        match coord {
            SlotCoord::L1(s) if (s as usize) < self.l1.len() => Ok(s as usize),
            SlotCoord::L1(_) => Err(RabError::BadCoordinates(coord)),
            SlotCoord::L2 { bank, set, way } => {
                let g = self.geometry.ok_or(RabError::L2Disabled)?;
                if bank >= g.banks || set >= g.sets || way >= g.ways {
                    return Err(RabError::BadCoordinates(coord));
                }
                Ok(g.index(bank, set, way))
            }
        }
    }

    /// Write `entry` into a slot through the configuration port at `t`; the
    /// entry is visible to translations issued at or after the returned cycle.
    /// Any other valid entry of the same level for the same page is
    /// invalidated at the same cycle.
    pub fn config_write(
        &mut self,
        coord: SlotCoord,
        mut entry: TlbEntry,
        t: Cycle,
    ) -> Result<Cycle, RabError> {
        let idx = self.check_coord(coord)?;
        if let (SlotCoord::L2 { bank, set, .. }, Some(g), true) = (coord, self.geometry, entry.valid) {
            if g.bank_of(entry.vpn) != bank || g.set_of(entry.vpn) != set {
                return Err(RabError::WrongSet {
                    coord,
                    vpn: entry.vpn,
                });
            }
        }
        let visible = t + self.config_latency;
        entry.seq = self.next_seq;
        self.next_seq += 1;
        let slots = match coord {
            SlotCoord::L1(_) => &mut self.l1,
            SlotCoord::L2 { .. } => &mut self.l2,
        };
        if entry.valid {
            let dups: Vec<usize> = match (coord, self.geometry) {
                (SlotCoord::L2 { bank, set, .. }, Some(g)) => (0..g.ways)
                    .map(|w| g.index(bank, set, w))
                    .filter(|&i| i != idx)
                    .collect(),
                _ => (0..slots.len()).filter(|&i| i != idx).collect(),
            };
            for i in dups {
                let cur = slots[i].latest();
                if cur.valid && cur.vpn == entry.vpn {
                    slots[i].write(visible, TlbEntry::invalid());
                }
            }
        }
        slots[idx].write(visible, entry);
        Ok(visible)
    }

    /// Placement for a new L2 entry: first invalid way, else the oldest install.
    pub fn l2_place(&self, vpn: u32) -> Option<SlotCoord> {
        let set = self.l2_set_latest(vpn);
        if let Some((c, _)) = set.iter().find(|(_, e)| e.valid && e.vpn == vpn) {
            return Some(*c);
        }
        set.iter()
            .find(|(_, e)| !e.valid)
            .or_else(|| set.iter().min_by_key(|(_, e)| e.seq))
            .map(|(c, _)| *c)
    }

    pub fn pop_miss(&mut self) -> Option<MissRecord> {
        self.queue.pop_front()
    }

    pub fn pending_misses(&self) -> usize {
        self.queue.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rab() -> Rab {
        Rab::new(&PlatformConfig::default(), &CalibrationConfig::default())
    }

    const M0: MasterId = MasterId(0);
    const M1: MasterId = MasterId(1);

    #[test]
    fn l1_hit_is_single_cycle() {
        let mut r = rab();
        r.config_write(SlotCoord::L1(0), TlbEntry::new(0x12345, 0x80010, true, true), 0)
            .unwrap();
        let o = r.translate(VirtualAddress(0x1234_54A0), M0, false, 10);
        assert_eq!(o.kind, OutcomeKind::L1Hit);
        assert_eq!(o.ready, 11);
        assert_eq!(o.pa, Some(PhysicalAddress(0x8001_04A0)));
    }

    #[test]
    fn l2_hit_takes_search_cycles() {
        let mut r = rab();
        let vpn = 0x9;
        let coord = r.l2_place(vpn).unwrap();
        r.config_write(coord, TlbEntry::new(vpn, 0x80020, true, true), 0).unwrap();
        let o = r.translate(VirtualAddress(0x99FC), M0, false, 10);
        assert_eq!(o.kind, OutcomeKind::L2Hit);
        assert_eq!(o.ready, 10 + 1 + 4);
    }

    #[test]
    fn hit_under_miss() {
        let mut r = rab();
        r.config_write(SlotCoord::L1(0), TlbEntry::new(0x0, 0x80000, true, true), 0).unwrap();
        let miss = r.translate(VirtualAddress(0x5000), M0, false, 10);
        assert_eq!(miss.kind, OutcomeKind::MissEnqueued);
        let hit = r.translate(VirtualAddress(0x40A), M1, false, 12);
        assert_eq!(hit.kind, OutcomeKind::L1Hit);
        assert_eq!(hit.ready, 13);
        // a second L1 miss waits for the lookup unit
        let second = r.translate(VirtualAddress(0x6000), M1, false, 12);
        assert_eq!(second.ready, miss.ready + 4);
    }

    #[test]
    fn invalid_write_makes_page_miss() {
        let mut r = rab();
        r.config_write(SlotCoord::L1(3), TlbEntry::new(0x10, 0x80000, true, true), 0).unwrap();
        r.config_write(SlotCoord::L1(3), TlbEntry::invalid(), 5).unwrap();
        let o = r.translate(VirtualAddress(0x10_000), M0, false, 10);
        assert_eq!(o.kind, OutcomeKind::MissEnqueued);
    }

    #[test]
    fn write_visible_after_latency() {
        let mut r = rab();
        r.config_write(SlotCoord::L1(0), TlbEntry::new(0x10, 0x80000, true, true), 10).unwrap();
        assert_eq!(r.translate(VirtualAddress(0x10_000), M0, false, 11).kind, OutcomeKind::MissEnqueued);
        assert_eq!(r.translate(VirtualAddress(0x10_000), M0, false, 12).kind, OutcomeKind::L1Hit);
    }

    #[test]
    fn overwrite_replaces_mapping() {
        let mut r = rab();
        r.config_write(SlotCoord::L1(0), TlbEntry::new(0x10, 0x80000, true, true), 0).unwrap();
        r.config_write(SlotCoord::L1(0), TlbEntry::new(0x11, 0x80001, true, true), 4).unwrap();
        assert_eq!(r.translate(VirtualAddress(0x10_000), M0, false, 3).kind, OutcomeKind::L1Hit);
        assert_eq!(r.translate(VirtualAddress(0x10_000), M0, false, 10).kind, OutcomeKind::MissEnqueued);
        let o = r.translate(VirtualAddress(0x11_004), M0, false, 20);
        assert_eq!(o.pa, Some(PhysicalAddress(0x8000_1004)));
    }

    #[test]
    fn same_page_in_two_slots_keeps_one() {
        let mut r = rab();
        r.config_write(SlotCoord::L1(0), TlbEntry::new(0x10, 0x80000, true, true), 0).unwrap();
        r.config_write(SlotCoord::L1(5), TlbEntry::new(0x10, 0x80007, true, true), 0).unwrap();
        let live: Vec<_> = r.l1_view(100).into_iter().filter(|e| e.valid).collect();
        assert_eq!(live.len(), 1);
        assert_eq!(live[0].ppn, 0x80007);
    }

    #[test]
    fn permission_fault() {
        let mut r = rab();
        r.config_write(SlotCoord::L1(0), TlbEntry::new(0x10, 0x80000, true, false), 0).unwrap();
        let o = r.translate(VirtualAddress(0x10_000), M0, true, 10);
        assert_eq!(o.kind, OutcomeKind::PermissionFault);
        assert_eq!(r.stats().faults, 1);
    }

    #[test]
    fn miss_queue_is_fifo_and_bounded() {
        let mut r = rab();
        assert!(r.pop_miss().is_none());
        for i in 0..17u32 {
            let o = r.translate(VirtualAddress(0x100_000 + (i << 12)), M0, false, 0);
            let want = if i < 16 {
                OutcomeKind::MissEnqueued
            } else {
                OutcomeKind::MissDropped
            };
            assert_eq!(o.kind, want, "miss {i}");
        }
        assert_eq!(r.pop_miss().unwrap().va, VirtualAddress(0x100_000));
        assert_eq!(r.pop_miss().unwrap().va, VirtualAddress(0x101_000));
    }

    #[test]
    fn bad_coordinates() {
        let mut r = rab();
        assert!(r.config_write(SlotCoord::L1(32), TlbEntry::invalid(), 0).is_err());
        assert!(r
            .config_write(SlotCoord::L2 { bank: 4, set: 0, way: 0 }, TlbEntry::invalid(), 0)
            .is_err());
        // vpn 1 lives in bank 1
        assert!(matches!(
            r.config_write(SlotCoord::L2 { bank: 0, set: 0, way: 0 }, TlbEntry::new(1, 2, true, true), 0),
            Err(RabError::WrongSet { .. })
        ));
    }

    #[test]
    fn disabled_l2_misses_directly() {
        let p = PlatformConfig {
            rab_l2_entries: 0,
            ..Default::default()
        };
        let mut r = Rab::new(&p, &CalibrationConfig::default());
        let o = r.translate(VirtualAddress(0x5000), M0, false, 10);
        assert_eq!(o.kind, OutcomeKind::MissEnqueued);
        assert_eq!(o.ready, 11);
        assert!(r.l2_place(5).is_none());
    }

    #[test]
    fn master_id_packing() {
        let m = MasterId::new(3, 7);
        assert_eq!((m.cluster(), m.pe()), (3, 7));
        assert!(!m.is_dma());
        assert!(MasterId::dma(2, 0).is_dma());
        assert_eq!(MasterId::dma(2, 1).to_string(), "c2.dma1");
    }

    #[test]
    fn range_window_hits_in_one_cycle() {
        let mut r = rab();
        r.install_range(RangeEntry {
            first_vpn: 0x80000,
            pages: 600,
            first_ppn: 0x80000,
            read: true,
            write: true,
        });
        let o = r.translate(VirtualAddress(0x8020_0010), M0, true, 4);
        assert_eq!(o.kind, OutcomeKind::L1Hit);
        assert_eq!(o.ready, 5);
        assert_eq!(o.pa, Some(PhysicalAddress(0x8020_0010)));
        let o = r.translate(VirtualAddress(0x8000_0000 + 600 * 4096), M0, false, 5);
        assert_eq!(o.kind, OutcomeKind::MissEnqueued);
    }
}
