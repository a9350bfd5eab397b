// SPDX-License-Identifier: Apache-2.0

//! Brute-force reference for the RAB: every slot is a flat list of timed
//! writes, every lookup scans all of them.

use hero_sim::config::{CalibrationConfig, PlatformConfig};
use hero_sim::memory::{PhysicalAddress, VirtualAddress, PAGE_SHIFT};
use hero_sim::rab::{MasterId, OutcomeKind, Rab, SlotCoord, TlbEntry, TlbLevel};
use hero_sim::vmm::{select_victim, VictimPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PAGES: u32 = 64;
const VPN_BASE: u32 = 0x40000;

#[derive(Debug, Clone, Copy)]
struct Written {
    visible: u64,
    order: u64,
    vpn: u32,
    ppn: u32,
    read: bool,
    write: bool,
    valid: bool,
}

#[derive(Debug, Clone)]
struct RefSlot {
    coord: SlotCoord,
    writes: Vec<Written>,
}

impl RefSlot {
    /// Entry visible at `t`: the latest-visible write, ties to the later one.
    fn at(&self, t: u64) -> Option<&Written> {
        self.writes
            .iter()
            .filter(|w| w.visible <= t)
            .max_by_key(|w| (w.visible, w.order))
    }

    fn latest(&self) -> Option<&Written> {
        self.writes.iter().max_by_key(|w| (w.visible, w.order))
    }
}

pub struct RefRab {
    l1: Vec<RefSlot>,
    l2: Vec<RefSlot>,
    search: u64,
    latency: u64,
    depth: usize,
    queue: usize,
    l2_free: u64,
    order: u64,
    banks: u32,
    sets: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefOutcome {
    pub kind: OutcomeKind,
    pub pa: Option<PhysicalAddress>,
    pub ready: u64,
}

impl RefRab {
    pub fn new(p: &PlatformConfig, c: &CalibrationConfig) -> Self {
        let l1 = (0..p.rab_l1_slots)
            .map(|i| RefSlot {
                coord: SlotCoord::L1(i),
                writes: Vec::new(),
            })
            .collect();
        let sets = if p.rab_l2_entries == 0 {
            0
        } else {
            p.rab_l2_entries / (p.rab_l2_assoc * p.rab_l2_banks)
        };
        let mut l2 = Vec::new();
        for bank in 0..if sets == 0 { 0 } else { p.rab_l2_banks } {
            for set in 0..sets {
                for way in 0..p.rab_l2_assoc {
                    l2.push(RefSlot {
                        coord: SlotCoord::L2 { bank, set, way },
                        writes: Vec::new(),
                    });
                }
            }
        }
        Self {
            l1,
            l2,
            search: (p.rab_l2_assoc as u64).div_ceil(c.l2_ways_per_cycle),
            latency: c.rab_config_write_latency,
            depth: c.miss_queue_depth as usize,
            queue: 0,
            l2_free: 0,
            order: 0,
            banks: p.rab_l2_banks,
            sets,
        }
    }

    pub fn l2_coord(&self, vpn: u32, way: u32) -> Option<SlotCoord> {
        (self.sets > 0).then(|| SlotCoord::L2 {
            bank: vpn % self.banks,
            set: (vpn / self.banks) % self.sets,
            way,
        })
    }

    fn find(slots: &[RefSlot], vpn: u32, t: u64) -> Result<Option<Written>, String> {
        let hits: Vec<&Written> = slots
            .iter()
            .filter_map(|s| s.at(t))
            .filter(|w| w.valid && w.vpn == vpn)
            .collect();
        match hits[..] {
            [] => Ok(None),
            [w] => Ok(Some(*w)),
            _ => Err(format!("{} valid entries for vpn {vpn:#x} at {t}", hits.len())),
        }
    }

    fn resolve(w: &Written, va: u32, is_write: bool, kind: OutcomeKind, ready: u64) -> RefOutcome {
        let ok = if is_write { w.write } else { w.read };
        RefOutcome {
            kind: if ok { kind } else { OutcomeKind::PermissionFault },
            pa: ok.then_some(PhysicalAddress(w.ppn << PAGE_SHIFT | (va & 0xFFF))),
            ready,
        }
    }

    pub fn translate(&mut self, va: u32, is_write: bool, t: u64) -> Result<RefOutcome, String> {
        let vpn = va >> PAGE_SHIFT;
        if let Some(w) = Self::find(&self.l1, vpn, t)? {
            return Ok(Self::resolve(&w, va, is_write, OutcomeKind::L1Hit, t + 1));
        }
        let mut ready = t + 1;
        if !self.l2.is_empty() {
            let start = ready.max(self.l2_free);
            ready = start + self.search;
            self.l2_free = ready;
            if let Some(w) = Self::find(&self.l2, vpn, start)? {
                return Ok(Self::resolve(&w, va, is_write, OutcomeKind::L2Hit, ready));
            }
        }
        let kind = if self.queue >= self.depth {
            OutcomeKind::MissDropped
        } else {
            self.queue += 1;
            OutcomeKind::MissEnqueued
        };
        Ok(RefOutcome { kind, pa: None, ready })
    }

    pub fn pop_miss(&mut self) -> bool {
        if self.queue > 0 {
            self.queue -= 1;
            true
        } else {
            false
        }
    }

    pub fn write(&mut self, coord: SlotCoord, e: TlbEntry, t: u64) -> u64 {
        let visible = t + self.latency;
        let slots = match coord {
            SlotCoord::L1(_) => &mut self.l1,
            SlotCoord::L2 { .. } => &mut self.l2,
        };
        if e.valid {
            for s in slots.iter_mut().filter(|s| s.coord != coord) {
                if s.latest().is_some_and(|w| w.valid && w.vpn == e.vpn) {
                    self.order += 1;
                    s.writes.push(Written {
                        visible,
                        order: self.order,
                        vpn: 0,
                        ppn: 0,
                        read: false,
                        write: false,
                        valid: false,
                    });
                }
            }
        }
        self.order += 1;
        let slot = slots.iter_mut().find(|s| s.coord == coord).expect("coordinate in range");
        slot.writes.push(Written {
            visible,
            order: self.order,
            vpn: e.vpn,
            ppn: e.ppn,
            read: e.read,
            write: e.write,
            valid: e.valid,
        });
        visible
    }

    /// FIFO victim among the L1 slots: first invalid slot, else the valid
    /// entry installed earliest.
    pub fn fifo_victim_l1(&self) -> SlotCoord {
        let latest: Vec<Option<&Written>> = self.l1.iter().map(RefSlot::latest).collect();
        if let Some(i) = latest.iter().position(|w| !w.is_some_and(|w| w.valid)) {
            return self.l1[i].coord;
        }
        let i = (0..latest.len())
            .min_by_key(|&i| latest[i].unwrap().order)
            .unwrap();
        self.l1[i].coord
    }
}

/// Drives the model and the reference with `ops` random operations.
/// Returns how many victim choices were compared.
pub fn run(p: &PlatformConfig, ops: usize, seed: u64) -> Result<usize, String> {
    let cal = CalibrationConfig::default();
    let mut rab = Rab::new(p, &cal);
    let mut reference = RefRab::new(p, &cal);
    let mut policy = VictimPolicy::Fifo;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let master = MasterId::new(0, 0);
    let mut t = 0u64;
    let mut victims = 0;
    for i in 0..ops {
        t += rng.gen_range(0..4);
        let vpn = VPN_BASE + rng.gen_range(0..PAGES);
        let entry = |rng: &mut ChaCha8Rng| {
            if rng.gen_bool(0.1) {
                TlbEntry::invalid()
            } else {
                TlbEntry::new(vpn, 0x90000 + rng.gen_range(0..4096), rng.gen_bool(0.95), rng.gen_bool(0.8))
            }
        };
        match rng.gen_range(0..100) {
            0..=44 => {
                let va = vpn << PAGE_SHIFT | rng.gen_range(0..4096);
                let is_write = rng.gen_bool(0.3);
                let got = rab.translate(VirtualAddress(va), master, is_write, t);
                let want = reference.translate(va, is_write, t).map_err(|e| format!("op {i}: {e}"))?;
                let got = RefOutcome {
                    kind: got.kind,
                    pa: got.pa,
                    ready: got.ready,
                };
                if got != want {
                    return Err(format!("op {i}: translate {va:#x} at {t}: model {got:?}, reference {want:?}"));
                }
            }
            45..=59 => {
                let a = rab.pop_miss().is_some();
                let b = reference.pop_miss();
                if a != b {
                    return Err(format!("op {i}: miss queue disagrees ({a} vs {b})"));
                }
            }
            60..=84 => {
                // handler-style install into the FIFO victim
                let got = select_victim(TlbLevel::L1, &mut policy, &rab, vpn).expect("L1 slots");
                let want = reference.fifo_victim_l1();
                if got != want {
                    return Err(format!("op {i}: victim {got:?}, reference {want:?}"));
                }
                victims += 1;
                let e = TlbEntry::new(vpn, 0x90000 + vpn, true, true);
                let a = rab.config_write(got, e, t).map_err(|e| e.to_string())?;
                let b = reference.write(want, e, t);
                if a != b {
                    return Err(format!("op {i}: visibility {a} vs {b}"));
                }
            }
            _ => {
                let e = entry(&mut rng);
                let coord = if rng.gen_bool(0.5) {
                    reference.l2_coord(vpn, rng.gen_range(0..p.rab_l2_assoc.max(1)))
                } else {
                    None
                }
                .unwrap_or_else(|| SlotCoord::L1(rng.gen_range(0..p.rab_l1_slots)));
                let a = rab.config_write(coord, e, t).map_err(|e| e.to_string())?;
                let b = reference.write(coord, e, t);
                if a != b {
                    return Err(format!("op {i}: visibility {a} vs {b}"));
                }
            }
        }
    }
    Ok(victims)
}
