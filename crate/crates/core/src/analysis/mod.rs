// SPDX-License-Identifier: Apache-2.0

//! Trace analysis in three layers.
//!
//! 1. [`parse`]: binary trace file to a time-sorted list of generic events.
//! 2. [`decode`]: generic events to per-core memory accesses, TLB episodes,
//!    barrier releases and interconnect bursts.
//! 3. [`analyze`]: histograms, breakdowns, a bus occupancy timeline and
//!    assertions over the typed stream. [`rescale`] multiplies latencies by
//!    a clock ratio.

mod analyze;
mod decode;

use std::path::Path;

pub use analyze::{analyze, Analysis, Assertion, Check, Cmp, Counterexample, CoreLatency, Filter, Report, TlbBreakdown, Verdict};
pub use decode::{decode, DecodeMeta};

use crate::engine::Cycle;
use crate::trace::{RecordKind, TraceFile, TraceFileError, TraceRecord};

/// One PMCA-domain record with its position in the file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenericEvent {
    pub record: TraceRecord,
    pub file_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub platform_hash: u64,
    pub clock_ratio: f64,
    /// Sorted by (timestamp, tracer id, file order); drain markers excluded.
    pub events: Vec<GenericEvent>,
    /// Host-side drain markers in file order.
    pub drains: Vec<TraceRecord>,
}

pub fn parse(bytes: &[u8]) -> Result<ParsedTrace, TraceFileError> {
    Ok(parse_file(TraceFile::from_bytes(bytes)?))
}

pub fn parse_path(path: impl AsRef<Path>) -> Result<ParsedTrace, TraceFileError> {
    Ok(parse_file(TraceFile::load(path)?))
}

pub fn parse_file(file: TraceFile) -> ParsedTrace {
    let (drains, pmca): (Vec<_>, Vec<_>) = file
        .records
        .into_iter()
        .enumerate()
        .partition(|(_, r)| r.kind == RecordKind::DrainMarker);
    let mut events: Vec<GenericEvent> = pmca
        .into_iter()
        .map(|(file_index, record)| GenericEvent { record, file_index })
        .collect();
    events.sort_by_key(|e| (e.record.timestamp, e.record.tracer_id, e.file_index));
    ParsedTrace {
        platform_hash: file.platform_hash,
        clock_ratio: file.clock_ratio,
        events,
        drains: drains.into_iter().map(|(_, r)| r).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TlbOutcome {
    L1Hit,
    L2Hit,
    Miss,
}

impl TlbOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            TlbOutcome::L1Hit => "l1_hit",
            TlbOutcome::L2Hit => "l2_hit",
            TlbOutcome::Miss => "miss",
        }
    }
}

/// Durations of a serviced miss; they add up to enqueue-to-wake.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissPhases {
    pub queue: f64,
    pub ptw: f64,
    pub config: f64,
    pub wake: f64,
}

impl MissPhases {
    pub fn total(&self) -> f64 {
        self.queue + self.ptw + self.config + self.wake
    }

    fn scaled(self, r: f64) -> Self {
        Self {
            queue: self.queue * r,
            ptw: self.ptw * r,
            config: self.config * r,
            wake: self.wake * r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TypedEvent {
    /// An upstream access from request to response. `memory_latency` is the
    /// part after translation, when the downstream request was traced.
    MemoryAccess {
        core: u32,
        address: u32,
        is_write: bool,
        dma: bool,
        request_ts: Cycle,
        response_ts: Cycle,
        latency: f64,
        memory_latency: Option<f64>,
    },
    /// One translation: the first attempt's outcome, the cycles until the
    /// final downstream request, and for misses the handling phases and the
    /// outcome of the retried lookup.
    TlbEpisode {
        core: u32,
        va: u32,
        ts: Cycle,
        /// Cycle the lookup unit finished with the first non-dropped attempt.
        lookup_done: Cycle,
        outcome: TlbOutcome,
        latency: f64,
        dropped: u32,
        phases: Option<MissPhases>,
        retry: Option<TlbOutcome>,
    },
    /// Barrier release of a set of cores.
    SyncEvent { cores: Vec<u32>, ts: Cycle, barrier: u64 },
    /// One system-interconnect burst.
    BusTransfer {
        master: u32,
        address: u32,
        bytes: u32,
        is_write: bool,
        start: Cycle,
        end: Cycle,
        latency: f64,
    },
}

impl TypedEvent {
    /// Timestamp the event starts at.
    pub fn ts(&self) -> Cycle {
        match *self {
            TypedEvent::MemoryAccess { request_ts, .. } => request_ts,
            TypedEvent::TlbEpisode { ts, .. } => ts,
            TypedEvent::SyncEvent { ts, .. } => ts,
            TypedEvent::BusTransfer { start, .. } => start,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            TypedEvent::MemoryAccess { .. } => "memory_access",
            TypedEvent::TlbEpisode { .. } => "tlb_episode",
            TypedEvent::SyncEvent { .. } => "sync",
            TypedEvent::BusTransfer { .. } => "bus_transfer",
        }
    }

    pub fn core(&self) -> Option<u32> {
        match *self {
            TypedEvent::MemoryAccess { core, .. } | TypedEvent::TlbEpisode { core, .. } => Some(core),
            TypedEvent::BusTransfer { master, .. } => Some(master),
            TypedEvent::SyncEvent { .. } => None,
        }
    }

    pub fn latency(&self) -> Option<f64> {
        match *self {
            TypedEvent::MemoryAccess { latency, .. }
            | TypedEvent::TlbEpisode { latency, .. }
            | TypedEvent::BusTransfer { latency, .. } => Some(latency),
            TypedEvent::SyncEvent { .. } => None,
        }
    }

    fn scaled(&self, r: f64) -> Self {
        let mut e = self.clone();
        match &mut e {
            TypedEvent::MemoryAccess {
                latency,
                memory_latency,
                ..
            } => {
                *latency *= r;
                if let Some(m) = memory_latency {
                    *m *= r;
                }
            }
            TypedEvent::TlbEpisode { latency, phases, .. } => {
                *latency *= r;
                *phases = phases.map(|p| p.scaled(r));
            }
            TypedEvent::BusTransfer { latency, .. } => *latency *= r,
            TypedEvent::SyncEvent { .. } => {}
        }
        e
    }
}

/// A typed event and the indices (into `ParsedTrace::events`) it consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct Typed {
    pub event: TypedEvent,
    pub sources: Vec<usize>,
}

/// A generic event that no typed event could account for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeDiagnostic {
    pub source: usize,
    pub ts: Cycle,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub events: Vec<Typed>,
    pub diagnostics: Vec<DecodeDiagnostic>,
    /// Product of all ratios applied by [`rescale`]; 1.0 when decoded.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("clock ratio must be a positive finite number, got {0}")]
pub struct RatioError(pub String);

/// Multiply every latency and phase duration by `ratio`; timestamps stay.
pub fn rescale(d: &Decoded, ratio: f64) -> Result<Decoded, RatioError> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(RatioError(ratio.to_string()));
    }
    Ok(Decoded {
        events: d
            .events
            .iter()
            .map(|t| Typed {
                event: t.event.scaled(ratio),
                sources: t.sources.clone(),
            })
            .collect(),
        diagnostics: d.diagnostics.clone(),
        scale: d.scale * ratio,
    })
}

/// Layer-2 CSV: one row per typed event.
pub fn typed_csv(d: &Decoded) -> String {
    let mut out = String::from("kind,ts,core,address,is_write,outcome,latency,memory_latency,queue,ptw,config,wake,retry,detail\n");
    let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for t in &d.events {
        let line = match &t.event {
            TypedEvent::MemoryAccess {
                core,
                address,
                is_write,
                dma,
                request_ts,
                latency,
                memory_latency,
                ..
            } => format!(
                "memory_access,{request_ts},{core:#x},{address:#x},{is_write},,{latency},{},,,,,,{}",
                f(*memory_latency),
                if *dma { "dma" } else { "" }
            ),
            TypedEvent::TlbEpisode {
                core,
                va,
                ts,
                outcome,
                latency,
                dropped,
                phases,
                retry,
                ..
            } => format!(
                "tlb_episode,{ts},{core:#x},{va:#x},,{},{latency},,{},{},{},{},{},dropped={dropped}",
                outcome.as_str(),
                f(phases.map(|p| p.queue)),
                f(phases.map(|p| p.ptw)),
                f(phases.map(|p| p.config)),
                f(phases.map(|p| p.wake)),
                retry.map(|r| r.as_str()).unwrap_or(""),
            ),
            TypedEvent::SyncEvent { cores, ts, barrier } => {
                let set: Vec<String> = cores.iter().map(|c| format!("{c:#x}")).collect();
                format!("sync,{ts},,,,,,,,,,,,barrier={barrier:#x} cores={}", set.join(" "))
            }
            TypedEvent::BusTransfer {
                master,
                address,
                bytes,
                is_write,
                start,
                latency,
                ..
            } => format!("bus_transfer,{start},{master:#x},{address:#x},{is_write},,{latency},,,,,,,bytes={bytes}"),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}
