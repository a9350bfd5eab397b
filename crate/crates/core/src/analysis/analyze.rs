// SPDX-License-Identifier: Apache-2.0

//! Layer 3: statistics and assertions over a decoded stream.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{Decoded, MissPhases, TlbOutcome, TypedEvent};
use crate::engine::Cycle;

#[derive(Debug, Clone, PartialEq)]
pub enum Filter {
    Any,
    MemoryAccess,
    /// TLB episodes, optionally only those with this first outcome.
    Tlb(Option<TlbOutcome>),
    Bus,
    Core(u32),
    All(Vec<Filter>),
}

impl Filter {
    pub fn matches(&self, e: &TypedEvent) -> bool {
        match self {
            Filter::Any => true,
            Filter::MemoryAccess => matches!(e, TypedEvent::MemoryAccess { .. }),
            Filter::Tlb(o) => match e {
                TypedEvent::TlbEpisode { outcome, .. } => o.is_none_or(|o| o == *outcome),
                _ => false,
            },
            Filter::Bus => matches!(e, TypedEvent::BusTransfer { .. }),
            Filter::Core(c) => e.core() == Some(*c),
            Filter::All(fs) => fs.iter().all(|f| f.matches(e)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Cmp {
    pub fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Cmp::Lt => a < b,
            Cmp::Le => a <= b,
            Cmp::Eq => approx_eq(a, b),
            Cmp::Ge => a >= b,
            Cmp::Gt => a > b,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Eq => "==",
            Cmp::Ge => ">=",
            Cmp::Gt => ">",
        }
    }
}

fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Check {
    /// Every L1 hit issued while another request's L2 search is in flight
    /// completes its lookup in one cycle.
    HitUnderMiss,
    /// Every event passing `filter` and starting inside `window` has
    /// `latency cmp bound`.
    ForAll {
        filter: Filter,
        window: Option<(Cycle, Cycle)>,
        cmp: Cmp,
        bound: f64,
    },
    /// At least one such event does.
    Exists {
        filter: Filter,
        window: Option<(Cycle, Cycle)>,
        cmp: Cmp,
        bound: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub name: String,
    pub check: Check,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub ts: Cycle,
    pub core: Option<u32>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    /// Events the predicate was evaluated on.
    pub checked: usize,
    pub counterexample: Option<Counterexample>,
}

impl Assertion {
    pub fn hit_under_miss() -> Self {
        Self {
            name: "hit-under-miss".into(),
            check: Check::HitUnderMiss,
        }
    }

    /// Built-in assertions by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "hit-under-miss" => Some(Self::hit_under_miss()),
            _ => None,
        }
    }

    pub fn evaluate(&self, d: &Decoded) -> Verdict {
        let (passed, checked, counterexample) = match &self.check {
            Check::HitUnderMiss => hit_under_miss(d),
            Check::ForAll {
                filter,
                window,
                cmp,
                bound,
            } => {
                let mut n = 0;
                let bad = selected(d, filter, *window).find(|e| {
                    n += 1;
                    !cmp.holds(e.latency().unwrap_or(f64::NAN), *bound)
                });
                let cx = bad.map(|e| Counterexample {
                    ts: e.ts(),
                    core: e.core(),
                    detail: format!(
                        "{} latency {} violates {} {bound}",
                        e.kind_name(),
                        e.latency().unwrap_or(f64::NAN),
                        cmp.symbol()
                    ),
                });
                (cx.is_none(), if cx.is_some() { n } else { selected(d, filter, *window).count() }, cx)
            }
            Check::Exists {
                filter,
                window,
                cmp,
                bound,
            } => {
                let n = selected(d, filter, *window).count();
                let ok = selected(d, filter, *window).any(|e| cmp.holds(e.latency().unwrap_or(f64::NAN), *bound));
                let cx = (!ok).then(|| Counterexample {
                    ts: window.map_or(0, |w| w.0),
                    core: None,
                    detail: format!("no event with latency {} {bound} among {n}", cmp.symbol()),
                });
                (ok, n, cx)
            }
        };
        Verdict {
            name: self.name.clone(),
            passed,
            checked,
            counterexample,
        }
    }
}

fn selected<'a>(d: &'a Decoded, f: &'a Filter, w: Option<(Cycle, Cycle)>) -> impl Iterator<Item = &'a TypedEvent> + 'a {
    d.events
        .iter()
        .map(|t| &t.event)
        .filter(move |e| f.matches(e) && e.latency().is_some())
        .filter(move |e| w.is_none_or(|(a, b)| e.ts() >= a && e.ts() < b))
}

fn hit_under_miss(d: &Decoded) -> (bool, usize, Option<Counterexample>) {
    // lookup windows of requests that went to the L2 TLB
    let mut windows: Vec<(Cycle, Cycle, u32)> = d
        .events
        .iter()
        .filter_map(|t| match t.event {
            TypedEvent::TlbEpisode {
                core,
                ts,
                lookup_done,
                outcome: TlbOutcome::L2Hit | TlbOutcome::Miss,
                ..
            } if lookup_done > ts + 1 => Some((ts, lookup_done, core)),
            _ => None,
        })
        .collect();
    windows.sort_unstable();
    let mut hits: Vec<(Cycle, u32, f64)> = d
        .events
        .iter()
        .filter_map(|t| match t.event {
            TypedEvent::TlbEpisode {
                core,
                ts,
                outcome: TlbOutcome::L1Hit,
                dropped: 0,
                latency,
                ..
            } => Some((ts, core, latency)),
            _ => None,
        })
        .collect();
    hits.sort_by_key(|h| (h.0, h.1));
    let want = d.scale;
    let (mut wi, mut reach, mut checked) = (0, 0, 0);
    for (ts, core, latency) in hits {
        while wi < windows.len() && windows[wi].0 <= ts {
            reach = reach.max(windows[wi].1);
            wi += 1;
        }
        if reach <= ts {
            continue;
        }
        checked += 1;
        if !approx_eq(latency, want) {
            return (
                false,
                checked,
                Some(Counterexample {
                    ts,
                    core: Some(core),
                    detail: format!("L1 hit during an L2 search took {latency} (expected {want})"),
                }),
            );
        }
    }
    (true, checked, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoreLatency {
    pub core: u32,
    pub accesses: u64,
    pub mean: f64,
    /// (latency, count), ascending latency.
    pub histogram: Vec<(f64, u64)>,
    /// Mean post-translation latency of reads, when traced.
    pub mean_memory_read: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TlbBreakdown {
    pub l1_hits: u64,
    pub l2_hits: u64,
    pub misses: u64,
    pub dropped: u64,
    /// Retried lookups after a miss that hit in L1.
    pub retry_l1_hits: u64,
    pub mean_phases: Option<MissPhases>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    /// Width of a bus timeline bucket in cycles.
    pub bus_window: Cycle,
    pub assertions: Vec<Assertion>,
}

impl Default for Analysis {
    fn default() -> Self {
        Self {
            bus_window: 1000,
            assertions: vec![Assertion::hit_under_miss()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub scale: f64,
    pub cores: Vec<CoreLatency>,
    pub tlb: TlbBreakdown,
    /// (bucket start, busy cycles / bucket width).
    pub bus_timeline: Vec<(Cycle, f64)>,
    pub syncs: u64,
    pub diagnostics: u64,
    pub verdicts: Vec<Verdict>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "latency scale: {}", self.scale);
        let t = &self.tlb;
        let _ = writeln!(
            s,
            "tlb: l1_hits={} l2_hits={} misses={} dropped={} retry_l1_hits={}",
            t.l1_hits, t.l2_hits, t.misses, t.dropped, t.retry_l1_hits
        );
        if let Some(p) = t.mean_phases {
            let _ = writeln!(
                s,
                "mean miss phases: queue={:.3} ptw={:.3} config={:.3} wake={:.3}",
                p.queue, p.ptw, p.config, p.wake
            );
        }
        for c in &self.cores {
            let _ = write!(s, "core {:#x}: accesses={} mean={:.3}", c.core, c.accesses, c.mean);
            if let Some(m) = c.mean_memory_read {
                let _ = write!(s, " mean_memory_read={m:.3}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "barrier releases: {}", self.syncs);
        let _ = writeln!(s, "decode diagnostics: {}", self.diagnostics);
        for v in &self.verdicts {
            let _ = write!(
                s,
                "assert {}: {} ({} checked)",
                v.name,
                if v.passed { "PASS" } else { "FAIL" },
                v.checked
            );
            if let Some(cx) = &v.counterexample {
                let _ = write!(s, " at cycle {}: {}", cx.ts, cx.detail);
            }
            s.push('\n');
        }
        s
    }

    /// Per-core latency histogram as CSV.
    pub fn latency_csv(&self) -> String {
        let mut s = String::from("core,latency,count\n");
        for c in &self.cores {
            for (l, n) in &c.histogram {
                let _ = writeln!(s, "{:#x},{l},{n}", c.core);
            }
        }
        s
    }

    pub fn bus_csv(&self) -> String {
        let mut s = String::from("cycle,occupancy\n");
        for (t, o) in &self.bus_timeline {
            let _ = writeln!(s, "{t},{o:.4}");
        }
        s
    }
}

pub fn analyze(d: &Decoded, a: &Analysis) -> Report {
    #[derive(Default)]
    struct Acc {
        n: u64,
        sum: f64,
        hist: BTreeMap<u64, u64>,
        mem_n: u64,
        mem_sum: f64,
    }
    let mut cores: BTreeMap<u32, Acc> = BTreeMap::new();
    let mut tlb = TlbBreakdown::default();
    let mut phase_sum = MissPhases {
        queue: 0.0,
        ptw: 0.0,
        config: 0.0,
        wake: 0.0,
    };
    let mut phase_n = 0u64;
    let mut busy: BTreeMap<Cycle, u64> = BTreeMap::new();
    let mut syncs = 0;
    let w = a.bus_window.max(1);
    for t in &d.events {
        match &t.event {
            TypedEvent::MemoryAccess {
                core,
                is_write,
                latency,
                memory_latency,
                ..
            } => {
                let c = cores.entry(*core).or_default();
                c.n += 1;
                c.sum += latency;
                // latencies are non-negative, so their bit patterns sort numerically
                *c.hist.entry(latency.to_bits()).or_default() += 1;
                if let (false, Some(m)) = (is_write, memory_latency) {
                    c.mem_n += 1;
                    c.mem_sum += m;
                }
            }
            TypedEvent::TlbEpisode {
                outcome,
                dropped,
                phases,
                retry,
                ..
            } => {
                match outcome {
                    TlbOutcome::L1Hit => tlb.l1_hits += 1,
                    TlbOutcome::L2Hit => tlb.l2_hits += 1,
                    TlbOutcome::Miss => tlb.misses += 1,
                }
                tlb.dropped += *dropped as u64;
                if *retry == Some(TlbOutcome::L1Hit) {
                    tlb.retry_l1_hits += 1;
                }
                if let Some(p) = phases {
                    phase_n += 1;
                    phase_sum.queue += p.queue;
                    phase_sum.ptw += p.ptw;
                    phase_sum.config += p.config;
                    phase_sum.wake += p.wake;
                }
            }
            TypedEvent::BusTransfer { start, end, .. } => {
                let mut t0 = *start;
                while t0 < *end {
                    let b = t0 / w * w;
                    let t1 = (*end).min(b + w);
                    *busy.entry(b).or_default() += t1 - t0;
                    t0 = t1;
                }
            }
            TypedEvent::SyncEvent { .. } => syncs += 1,
        }
    }
    let n = phase_n as f64;
    tlb.mean_phases = (phase_n > 0).then(|| MissPhases {
        queue: phase_sum.queue / n,
        ptw: phase_sum.ptw / n,
        config: phase_sum.config / n,
        wake: phase_sum.wake / n,
    });
    Report {
        scale: d.scale,
        cores: cores
            .into_iter()
            .map(|(core, c)| CoreLatency {
                core,
                accesses: c.n,
                mean: c.sum / c.n as f64,
                histogram: c.hist.into_iter().map(|(b, n)| (f64::from_bits(b), n)).collect(),
                mean_memory_read: (c.mem_n > 0).then(|| c.mem_sum / c.mem_n as f64),
            })
            .collect(),
        tlb,
        bus_timeline: busy.into_iter().map(|(b, c)| (b, c as f64 / w as f64)).collect(),
        syncs,
        diagnostics: d.diagnostics.len() as u64,
        verdicts: a.assertions.iter().map(|x| x.evaluate(d)).collect(),
    }
}
