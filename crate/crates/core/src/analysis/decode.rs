// SPDX-License-Identifier: Apache-2.0

//! Layer 2: pair requests with responses and assemble TLB episodes.
//!
//! Requests and responses pair per (master, direction) in FIFO order, which
//! the simulator guarantees. Miss-handler activity (page-table-walk accesses
//! and RAB configuration writes) is grouped per handled miss and attached to
//! the miss with the same page, in handling order.

use std::collections::{BTreeMap, HashMap, VecDeque};

use super::{DecodeDiagnostic, Decoded, MissPhases, ParsedTrace, TlbOutcome, Typed, TypedEvent};
use crate::config::CalibrationConfig;
use crate::engine::Cycle;
use crate::memory::PAGE_SHIFT;
use crate::trace::{flags, RecordKind, TraceRecord};

/// Platform facts the trace itself does not carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeMeta {
    /// Cycles from the end of a RAB configuration write to the wake record.
    pub wake_latency: Cycle,
}

impl Default for DecodeMeta {
    fn default() -> Self {
        Self::from(&CalibrationConfig::default())
    }
}

impl From<&CalibrationConfig> for DecodeMeta {
    fn from(c: &CalibrationConfig) -> Self {
        Self {
            wake_latency: c.wake_latency,
        }
    }
}

/// Handler work for one miss.
#[derive(Debug, Default)]
struct Group {
    sources: Vec<usize>,
    start: Option<Cycle>,
    config_issue: Option<Cycle>,
    vpn: u32,
    l2_write: bool,
}

#[derive(Debug)]
struct Attempt {
    sources: Vec<usize>,
    va: u32,
    first_ts: Cycle,
    lookup_done: Option<Cycle>,
    outcome: Option<TlbOutcome>,
    dropped: u32,
    enq: Option<Cycle>,
    phases: Option<MissPhases>,
    woken: bool,
}

#[derive(Debug)]
struct Open {
    source: usize,
    ts: Cycle,
    va: u32,
    dma: bool,
    downstream: Option<Cycle>,
}

fn is_handler(r: &TraceRecord) -> bool {
    r.kind == RecordKind::ConfigWrite || r.has(flags::PTW)
}

fn span(a: Cycle, b: Cycle) -> f64 {
    (a as i64 - b as i64) as f64
}

/// Pass over handler records only, in their own causal order.
fn handler_groups(trace: &ParsedTrace) -> Vec<Group> {
    let mut idx: Vec<usize> = (0..trace.events.len())
        .filter(|&i| is_handler(&trace.events[i].record))
        .collect();
    let rank = |r: &TraceRecord| match r.kind {
        RecordKind::ReadResp | RecordKind::WriteResp => 0,
        RecordKind::ConfigWrite => 2,
        _ => 1,
    };
    idx.sort_by_key(|&i| {
        let r = &trace.events[i].record;
        (r.timestamp, rank(r), i)
    });
    let mut groups: Vec<Group> = Vec::new();
    for i in idx {
        let r = trace.events[i].record;
        let closed = groups.last().is_none_or(|g| g.config_issue.is_some());
        match r.kind {
            RecordKind::ConfigWrite => {
                let vpn = ((r.payload >> 32) & 0xF_FFFF) as u32;
                let extend = match groups.last() {
                    Some(g) if g.config_issue.is_none() => true,
                    Some(g) => r.has(flags::L2) && !g.l2_write && g.vpn == vpn && g.config_issue == Some(r.timestamp),
                    None => false,
                };
                if !extend {
                    groups.push(Group::default());
                }
                let g = groups.last_mut().unwrap();
                g.sources.push(i);
                if r.has(flags::L2) && g.config_issue.is_some() {
                    g.l2_write = true;
                } else {
                    g.config_issue = Some(r.timestamp);
                    g.vpn = vpn;
                    g.start.get_or_insert(r.timestamp);
                }
            }
            _ => {
                if closed {
                    groups.push(Group::default());
                }
                let g = groups.last_mut().unwrap();
                g.sources.push(i);
                g.start.get_or_insert(r.timestamp);
            }
        }
    }
    groups
}

pub fn decode(trace: &ParsedTrace, meta: &DecodeMeta) -> Decoded {
    let ev = &trace.events;
    let mut groups: Vec<Option<Group>> = handler_groups(trace).into_iter().map(Some).collect();
    let mut by_vpn: HashMap<u32, VecDeque<usize>> = HashMap::new();
    for (gi, g) in groups.iter().enumerate() {
        let g = g.as_ref().unwrap();
        if g.config_issue.is_some() {
            by_vpn.entry(g.vpn).or_default().push_back(gi);
        }
    }

    let mut out: Vec<Typed> = Vec::new();
    let mut diags: Vec<DecodeDiagnostic> = Vec::new();
    let diag = |diags: &mut Vec<DecodeDiagnostic>, i: usize, m: &str| {
        diags.push(DecodeDiagnostic {
            source: i,
            ts: ev[i].record.timestamp,
            message: m.to_string(),
        })
    };
    let mut xlate: BTreeMap<u32, Attempt> = BTreeMap::new();
    let mut access: BTreeMap<(u32, bool), VecDeque<Open>> = BTreeMap::new();
    let mut bus: BTreeMap<(u32, bool), VecDeque<(usize, TraceRecord)>> = BTreeMap::new();
    let mut sync: BTreeMap<u64, (Cycle, Vec<usize>)> = BTreeMap::new();

    for (i, e) in ev.iter().enumerate() {
        let r = e.record;
        if is_handler(&r) {
            continue;
        }
        let m = r.master_id;
        let is_write = matches!(r.kind, RecordKind::WriteReq | RecordKind::WriteResp);
        match r.kind {
            RecordKind::ReadReq | RecordKind::WriteReq if r.has(flags::BUS) => {
                bus.entry((m, is_write)).or_default().push_back((i, r));
            }
            RecordKind::ReadReq | RecordKind::WriteReq if r.has(flags::DOWNSTREAM) => {
                let Some(mut a) = xlate.remove(&m) else {
                    diag(&mut diags, i, "downstream request without a translation in progress");
                    continue;
                };
                a.sources.push(i);
                let o = if r.has(flags::L2) {
                    TlbOutcome::L2Hit
                } else {
                    TlbOutcome::L1Hit
                };
                let (outcome, retry) = match a.outcome {
                    Some(first) => (first, Some(o)),
                    None => {
                        a.lookup_done = Some(r.timestamp);
                        (o, None)
                    }
                };
                if let Some(open) = access.get_mut(&(m, is_write)).and_then(|q| q.back_mut()) {
                    open.downstream = Some(r.timestamp);
                }
                out.push(Typed {
                    event: TypedEvent::TlbEpisode {
                        core: m,
                        va: a.va,
                        ts: a.first_ts,
                        lookup_done: a.lookup_done.unwrap_or(r.timestamp),
                        outcome,
                        latency: span(r.timestamp, a.first_ts),
                        dropped: a.dropped,
                        phases: a.phases,
                        retry,
                    },
                    sources: a.sources,
                });
            }
            RecordKind::ReadReq | RecordKind::WriteReq => {
                if r.has(flags::RETRY) {
                    match xlate.get_mut(&m) {
                        Some(a) => a.sources.push(i),
                        None => diag(&mut diags, i, "retried request without an earlier attempt"),
                    }
                    continue;
                }
                if let Some(old) = xlate.remove(&m) {
                    for s in old.sources {
                        diag(&mut diags, s, "translation superseded before completing");
                    }
                }
                let va = r.payload as u32;
                xlate.insert(
                    m,
                    Attempt {
                        sources: Vec::new(),
                        va,
                        first_ts: r.timestamp,
                        lookup_done: None,
                        outcome: None,
                        dropped: 0,
                        enq: None,
                        phases: None,
                        woken: false,
                    },
                );
                access.entry((m, is_write)).or_default().push_back(Open {
                    source: i,
                    ts: r.timestamp,
                    va,
                    dma: r.has(flags::DMA),
                    downstream: None,
                });
            }
            RecordKind::ReadResp | RecordKind::WriteResp if r.has(flags::BUS) => {
                match bus.get_mut(&(m, is_write)).and_then(|q| q.pop_front()) {
                    Some((j, req)) => out.push(Typed {
                        event: TypedEvent::BusTransfer {
                            master: m,
                            address: req.payload as u32,
                            bytes: (req.payload >> 32) as u32,
                            is_write,
                            start: req.timestamp,
                            end: r.timestamp,
                            latency: span(r.timestamp, req.timestamp),
                        },
                        sources: vec![j, i],
                    }),
                    None => diag(&mut diags, i, "bus response without a request"),
                }
            }
            RecordKind::ReadResp | RecordKind::WriteResp => {
                match access.get_mut(&(m, is_write)).and_then(|q| q.pop_front()) {
                    Some(o) => out.push(Typed {
                        event: TypedEvent::MemoryAccess {
                            core: m,
                            address: o.va,
                            is_write,
                            dma: o.dma,
                            request_ts: o.ts,
                            response_ts: r.timestamp,
                            latency: span(r.timestamp, o.ts),
                            memory_latency: o.downstream.map(|d| span(r.timestamp, d)),
                        },
                        sources: vec![o.source, i],
                    }),
                    None => diag(&mut diags, i, "response without a request"),
                }
            }
            RecordKind::MissEnq => {
                let Some(a) = xlate.get_mut(&m) else {
                    diag(&mut diags, i, "miss without a translation in progress");
                    continue;
                };
                a.sources.push(i);
                if r.has(flags::DROPPED) {
                    a.dropped += 1;
                } else if a.enq.is_none() {
                    a.enq = Some(r.timestamp);
                    if a.outcome.is_none() {
                        a.outcome = Some(TlbOutcome::Miss);
                        a.lookup_done = Some(r.timestamp);
                    }
                }
            }
            RecordKind::Sleep => match xlate.get_mut(&m) {
                Some(a) => a.sources.push(i),
                None => diag(&mut diags, i, "sleep without a pending miss"),
            },
            RecordKind::Wake if r.has(flags::SYNC) => {
                sync.entry(r.payload).or_insert((r.timestamp, Vec::new())).1.push(i);
            }
            RecordKind::Wake => {
                let Some(a) = xlate.get_mut(&m) else {
                    diag(&mut diags, i, "wake without a pending miss");
                    continue;
                };
                a.sources.push(i);
                if let (Some(enq), false) = (a.enq, a.woken) {
                    a.woken = true;
                    let gi = by_vpn.get_mut(&(a.va >> PAGE_SHIFT)).and_then(|q| q.pop_front());
                    if let Some(g) = gi.and_then(|gi| groups[gi].take()) {
                        let (start, ci) = (g.start.unwrap(), g.config_issue.unwrap());
                        let wl = meta.wake_latency;
                        a.phases = Some(MissPhases {
                            queue: span(start, enq),
                            ptw: span(ci, start),
                            config: span(r.timestamp, ci) - wl as f64,
                            wake: wl as f64,
                        });
                        a.sources.extend(g.sources);
                    }
                }
            }
            RecordKind::ConfigWrite | RecordKind::DrainMarker => {
                diag(&mut diags, i, "unexpected record");
            }
        }
    }

    for (_, a) in xlate {
        for s in a.sources {
            diag(&mut diags, s, "translation episode never completed");
        }
    }
    for (_, q) in access {
        for o in q {
            diag(&mut diags, o.source, "request without a response");
        }
    }
    for (_, q) in bus {
        for (j, _) in q {
            diag(&mut diags, j, "bus request without a response");
        }
    }
    for g in groups.into_iter().flatten() {
        for s in g.sources {
            diag(&mut diags, s, "miss-handler activity not matched to a miss");
        }
    }
    for (barrier, (ts, srcs)) in sync {
        let mut cores: Vec<u32> = srcs.iter().map(|&s| ev[s].record.master_id).collect();
        cores.sort_unstable();
        out.push(Typed {
            event: TypedEvent::SyncEvent { cores, ts, barrier },
            sources: srcs,
        });
    }
    for t in &mut out {
        t.sources.sort_unstable();
    }
    out.sort_by_key(|t| t.sources[0]);
    diags.sort_by_key(|d| d.source);
    Decoded {
        events: out,
        diagnostics: diags,
        scale: 1.0,
    }
}
