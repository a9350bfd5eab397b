// SPDX-License-Identifier: Apache-2.0

//! Accelerator-side virtual memory management: services RAB misses by walking
//! the host page table and installing the translation into the RAB.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::VictimPolicyKind;
use crate::engine::Cycle;
use crate::memory::{pt_walk, Dram, MemoryError, PageFlags, PageTable, VirtualAddress};
use crate::rab::{MasterId, MissRecord, Rab, RabError, SlotCoord, TlbEntry, TlbLevel};
use crate::SimError;

/// Replacement policy for RAB slots.
#[derive(Debug, Clone)]
pub enum VictimPolicy {
    /// Oldest install first.
    Fifo,
    RoundRobin { next: u32 },
    Random(ChaCha8Rng),
}

impl VictimPolicy {
    pub fn new(kind: VictimPolicyKind, seed: u64) -> Self {
        match kind {
            VictimPolicyKind::Fifo => Self::Fifo,
            VictimPolicyKind::RoundRobin => Self::RoundRobin { next: 0 },
            VictimPolicyKind::Random => Self::Random(ChaCha8Rng::seed_from_u64(seed)),
        }
    }
}

/// Pick the slot to overwrite. Invalid slots are always preferred.
pub fn select_victim(
    level: TlbLevel,
    policy: &mut VictimPolicy,
    rab: &Rab,
    vpn: u32,
) -> Option<SlotCoord> {
    let slots: Vec<(SlotCoord, TlbEntry)> = match level {
        TlbLevel::L1 => rab
            .l1_latest()
            .into_iter()
            .enumerate()
            .map(|(i, e)| (SlotCoord::L1(i as u32), e))
            .collect(),
        TlbLevel::L2 => rab.l2_set_latest(vpn),
    };
    if slots.is_empty() {
        return None;
    }
    if let Some((c, _)) = slots.iter().find(|(_, e)| !e.valid) {
        return Some(*c);
    }
    let pick = match policy {
        VictimPolicy::Fifo => {
            slots
                .iter()
                .enumerate()
                .min_by_key(|(_, (_, e))| e.seq)
                .expect("nonempty")
                .0
        }
        VictimPolicy::RoundRobin { next } => {
            let i = *next as usize % slots.len();
            *next = (i as u32 + 1) % slots.len() as u32;
            i
        }
        VictimPolicy::Random(rng) => rng.gen_range(0..slots.len()),
    };
    Some(slots[pick].0)
}

/// Timeline of one serviced miss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissHandling {
    pub miss: MissRecord,
    pub start: Cycle,
    /// Issue cycle and completion cycle of each page-table read.
    pub ptw: Vec<(Cycle, Cycle)>,
    pub coord: SlotCoord,
    pub entry: TlbEntry,
    /// Cycle the configuration write is issued.
    pub config_issue: Cycle,
    /// Cycle the new entry becomes visible.
    pub config_done: Cycle,
    /// Extra L2 write, when enabled.
    pub l2_write: Option<(SlotCoord, TlbEntry)>,
    pub wake: Cycle,
}

impl MissHandling {
    pub fn ptw_done(&self) -> Cycle {
        self.ptw.last().map_or(self.start, |s| s.1)
    }
}

/// Install or refresh the translation for `vpn`, returning the slot and
/// configuration timing.
struct Install {
    coord: SlotCoord,
    entry: TlbEntry,
    done: Cycle,
    l2: Option<(SlotCoord, TlbEntry)>,
}

pub struct Vmm {
    policy: VictimPolicy,
    handler: MasterId,
    install_l2: bool,
    wake_latency: Cycle,
    busy_until: Cycle,
    handled: u64,
}

impl Vmm {
    pub fn new(policy: VictimPolicy, handler: MasterId, install_l2: bool, wake_latency: Cycle) -> Self {
        Self {
            policy,
            handler,
            install_l2,
            wake_latency,
            busy_until: 0,
            handled: 0,
        }
    }

    pub fn handler(&self) -> MasterId {
        self.handler
    }

    pub fn busy_until(&self) -> Cycle {
        self.busy_until
    }

    pub fn handled(&self) -> u64 {
        self.handled
    }

    fn install(
        &mut self,
        rab: &mut Rab,
        vpn: u32,
        ppn: u32,
        flags: PageFlags,
        t: Cycle,
    ) -> Result<Install, RabError> {
        let entry = TlbEntry::new(vpn, ppn, flags.read, flags.write);
        let coord = match rab.l1_slot_of(vpn) {
            Some(slot) => SlotCoord::L1(slot),
            None => select_victim(TlbLevel::L1, &mut self.policy, rab, vpn)
                .ok_or(RabError::BadCoordinates(SlotCoord::L1(0)))?,
        };
        let done = rab.config_write(coord, entry, t)?;
        let mut l2 = None;
        if self.install_l2 {
            if let Some(c2) = rab.l2_place(vpn) {
                rab.config_write(c2, entry, t)?;
                l2 = Some((c2, entry));
            }
        }
        Ok(Install {
            coord,
            entry,
            done,
            l2,
        })
    }

    /// Service one dequeued miss starting no earlier than `t`. The walk reads
    /// go through DRAM `port`.
    pub fn handle_miss(
        &mut self,
        miss: MissRecord,
        rab: &mut Rab,
        dram: &mut Dram,
        port: usize,
        pt: &PageTable,
        t: Cycle,
    ) -> Result<MissHandling, SimError> {
        let start = t.max(self.busy_until);
        let walk = pt_walk(dram, port, pt, miss.va, start);
        let mut issue = start;
        let ptw = walk
            .steps
            .iter()
            .map(|&done| {
                let s = (issue, done);
                issue = done;
                s
            })
            .collect();
        let (pa, flags) = walk.result.map_err(|e| match e {
            MemoryError::PageFault(va) => SimError::PageFault {
                va,
                master: miss.master,
            },
            other => SimError::Memory(other),
        })?;
        let inst = self.install(rab, miss.va.page(), pa.page(), flags, walk.done)?;
        let wake = inst.done + self.wake_latency;
        self.busy_until = wake;
        self.handled += 1;
        Ok(MissHandling {
            miss,
            start,
            ptw,
            coord: inst.coord,
            entry: inst.entry,
            config_issue: walk.done,
            config_done: inst.done,
            l2_write: inst.l2,
            wake,
        })
    }

    /// Explicitly map a page (walk + configure, no sleep/wake). `flags`
    /// further restrict the page-table permissions.
    #[allow(clippy::too_many_arguments)]
    pub fn map_page(
        &mut self,
        va: VirtualAddress,
        flags: PageFlags,
        rab: &mut Rab,
        dram: &mut Dram,
        port: usize,
        pt: &PageTable,
        t: Cycle,
    ) -> Result<Cycle, SimError> {
        let start = t.max(self.busy_until);
        let walk = pt_walk(dram, port, pt, va, start);
        let (pa, pt_flags) = walk.result.map_err(|e| match e {
            MemoryError::PageFault(va) => SimError::PageFault {
                va,
                master: self.handler,
            },
            other => SimError::Memory(other),
        })?;
        let eff = PageFlags {
            read: flags.read && pt_flags.read,
            write: flags.write && pt_flags.write,
        };
        let inst = self.install(rab, va.page(), pa.page(), eff, walk.done)?;
        self.busy_until = inst.done;
        Ok(inst.done)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{CalibrationConfig, PlatformConfig};
    use crate::memory::DRAM_BASE;
    use crate::rab::OutcomeKind;

    fn small_platform() -> PlatformConfig {
        PlatformConfig {
            rab_l1_slots: 4,
            ..Default::default()
        }
    }

    fn setup() -> (Rab, Dram, PageTable, Vmm) {
        let cal = CalibrationConfig::default();
        let rab = Rab::new(&small_platform(), &cal);
        let dram = Dram::new(&cal, 1);
        let mut pt = PageTable::new(2);
        for i in 0..64 {
            pt.map(0x20000 + i, (DRAM_BASE >> 12) + 0x1000 + i, PageFlags::RW);
        }
        let vmm = Vmm::new(VictimPolicy::Fifo, MasterId::new(0, 7), false, 2);
        (rab, dram, pt, vmm)
    }

    #[test]
    fn prefers_invalid_slot() {
        let (mut rab, ..) = setup();
        for s in [0, 1, 3] {
            rab.config_write(SlotCoord::L1(s), TlbEntry::new(s, s, true, true), 0).unwrap();
        }
        let mut p = VictimPolicy::Fifo;
        assert_eq!(select_victim(TlbLevel::L1, &mut p, &rab, 99), Some(SlotCoord::L1(2)));
    }

    #[test]
    fn fifo_picks_oldest_install() {
        let (mut rab, ..) = setup();
        for s in [0, 1, 2, 3] {
            rab.config_write(SlotCoord::L1(s), TlbEntry::new(s, s, true, true), 0).unwrap();
        }
        let mut p = VictimPolicy::Fifo;
        assert_eq!(select_victim(TlbLevel::L1, &mut p, &rab, 99), Some(SlotCoord::L1(0)));
        rab.config_write(SlotCoord::L1(0), TlbEntry::new(9, 9, true, true), 1).unwrap();
        assert_eq!(select_victim(TlbLevel::L1, &mut p, &rab, 99), Some(SlotCoord::L1(1)));
    }

    #[test]
    fn round_robin_cycles() {
        let (mut rab, ..) = setup();
        for s in 0..4 {
            rab.config_write(SlotCoord::L1(s), TlbEntry::new(s, s, true, true), 0).unwrap();
        }
        let mut p = VictimPolicy::new(VictimPolicyKind::RoundRobin, 0);
        let picks: Vec<_> = (0..5)
            .map(|_| select_victim(TlbLevel::L1, &mut p, &rab, 99).unwrap())
            .collect();
        let want: Vec<_> = [0, 1, 2, 3, 0].into_iter().map(SlotCoord::L1).collect();
        assert_eq!(picks, want);
    }

    #[test]
    fn random_is_seeded() {
        let (mut rab, ..) = setup();
        for s in 0..4 {
            rab.config_write(SlotCoord::L1(s), TlbEntry::new(s, s, true, true), 0).unwrap();
        }
        let run = |seed| {
            let mut p = VictimPolicy::new(VictimPolicyKind::Random, seed);
            (0..16)
                .map(|_| select_victim(TlbLevel::L1, &mut p, &rab, 99).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn miss_handling_timeline_and_retry_hits() {
        let (mut rab, mut dram, pt, mut vmm) = setup();
        let va = VirtualAddress(0x2000_0C00);
        let m = MasterId::new(0, 0);
        let o = rab.translate(va, m, false, 10);
        assert_eq!(o.kind, OutcomeKind::MissEnqueued);
        let miss = rab.pop_miss().unwrap();
        let h = vmm.handle_miss(miss, &mut rab, &mut dram, 0, &pt, o.ready).unwrap();
        assert_eq!(h.ptw.len(), 2);
        assert_eq!(h.ptw_done() - h.start, 18);
        assert_eq!(h.config_done, h.config_issue + 2);
        assert_eq!(h.wake, h.config_done + 2);
        let retry = rab.translate(va, m, false, h.wake);
        assert_eq!(retry.kind, OutcomeKind::L1Hit);
        assert_eq!(retry.pa, pt.translate(va));
    }

    #[test]
    fn raced_miss_reuses_slot() {
        let (mut rab, mut dram, pt, mut vmm) = setup();
        let va = VirtualAddress(0x2000_1000);
        let m = MasterId::new(0, 0);
        rab.translate(va, m, false, 0);
        rab.translate(va, MasterId::new(0, 1), false, 0);
        let a = rab.pop_miss().unwrap();
        let b = rab.pop_miss().unwrap();
        let h1 = vmm.handle_miss(a, &mut rab, &mut dram, 0, &pt, 0).unwrap();
        let h2 = vmm.handle_miss(b, &mut rab, &mut dram, 0, &pt, 0).unwrap();
        assert_eq!(h1.coord, h2.coord);
        let valid = rab.l1_view(h2.wake).iter().filter(|e| e.valid).count();
        assert_eq!(valid, 1);
        assert_eq!(rab.translate(va, m, false, h2.wake).kind, OutcomeKind::L1Hit);
    }

    #[test]
    fn unmapped_page_faults() {
        let (mut rab, mut dram, pt, mut vmm) = setup();
        let va = VirtualAddress(0x7000_0000);
        let m = MasterId::new(1, 2);
        rab.translate(va, m, false, 0);
        let miss = rab.pop_miss().unwrap();
        let err = vmm.handle_miss(miss, &mut rab, &mut dram, 0, &pt, 0).unwrap_err();
        assert_eq!(err, SimError::PageFault { va, master: m });
    }

    #[test]
    fn map_page_variants() {
        let (mut rab, mut dram, pt, mut vmm) = setup();
        let va = VirtualAddress(0x2000_3000);
        let done = vmm.map_page(va, PageFlags::RW, &mut rab, &mut dram, 0, &pt, 0).unwrap();
        assert_eq!(rab.translate(va, MasterId(0), false, done).kind, OutcomeKind::L1Hit);
        assert_eq!(rab.stats().misses, 0);
        let done = vmm.map_page(va, PageFlags::RO, &mut rab, &mut dram, 0, &pt, done).unwrap();
        let live = rab.l1_view(done).iter().filter(|e| e.valid && e.vpn == va.page()).count();
        assert_eq!(live, 1);
        assert_eq!(
            rab.translate(va, MasterId(0), true, done).kind,
            OutcomeKind::PermissionFault
        );
    }

    #[test]
    fn never_evicts_own_install() {
        let (mut rab, mut dram, pt, mut vmm) = setup();
        let m = MasterId(0);
        for i in 0..12u32 {
            let va = VirtualAddress(0x2000_0000 + (i << 12));
            rab.translate(va, m, false, i as u64 * 100);
            let miss = rab.pop_miss().unwrap();
            let h = vmm.handle_miss(miss, &mut rab, &mut dram, 0, &pt, i as u64 * 100).unwrap();
            assert_eq!(rab.translate(va, m, false, h.wake).kind, OutcomeKind::L1Hit);
        }
    }
}
