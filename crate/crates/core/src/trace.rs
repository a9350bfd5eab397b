// SPDX-License-Identifier: Apache-2.0

//! Event tracers and the binary trace file format.
//!
//! Tracers sit on attachment points (the RAB request/response channels, its
//! configuration port, the system interconnect, cluster sleep/wake) and record
//! a timestamped event whenever their activation predicate matches. Each
//! tracer owns a fixed-depth buffer; when one fills up, the accelerator clock
//! is gated, all buffers are moved to the host-side store, and the clock is
//! re-enabled. Timestamps come from the accelerator clock, so draining is
//! invisible to the traced system.
//!
//! File layout (little-endian): a 32-byte header
//!
//! | offset | size | field                       |
//! |--------|------|-----------------------------|
//! | 0      | 4    | magic `HTRC`                |
//! | 4      | 2    | format version (1)          |
//! | 6      | 2    | reserved (0)                |
//! | 8      | 8    | platform configuration hash |
//! | 16     | 8    | record count                |
//! | 24     | 8    | clock ratio (f64)           |
//!
//! followed by 24-byte records: timestamp u64, tracer id u16, kind u8,
//! flags u8, master id u32, payload u64.

use std::fmt;
use std::io::{self, Read, Write};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::engine::Cycle;

pub const MAGIC: [u8; 4] = *b"HTRC";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_BYTES: usize = 32;
pub const RECORD_BYTES: usize = 24;
/// Tracer id carried by host-side drain markers.
pub const HOST_TRACER_ID: u16 = 0xFFFF;

/// Record flag bits.
pub mod flags {
    /// Memory side of the RAB; payload is a physical address.
    pub const DOWNSTREAM: u8 = 1 << 0;
    /// Translation was served by the L2 TLB.
    pub const L2: u8 = 1 << 1;
    /// Page-table walk access of the miss handler.
    pub const PTW: u8 = 1 << 2;
    /// Issued by a DMA engine.
    pub const DMA: u8 = 1 << 3;
    /// Access retried after a serviced miss.
    pub const RETRY: u8 = 1 << 4;
    /// Miss dropped because the miss queue was full.
    pub const DROPPED: u8 = 1 << 5;
    /// Barrier release.
    pub const SYNC: u8 = 1 << 6;
    /// System interconnect burst; payload is (bytes << 32) | physical address.
    pub const BUS: u8 = 1 << 7;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum RecordKind {
    ReadReq = 0,
    ReadResp = 1,
    WriteReq = 2,
    WriteResp = 3,
    ConfigWrite = 4,
    MissEnq = 5,
    Sleep = 6,
    Wake = 7,
    DrainMarker = 8,
}

impl RecordKind {
    pub const ALL: [RecordKind; 9] = [
        RecordKind::ReadReq,
        RecordKind::ReadResp,
        RecordKind::WriteReq,
        RecordKind::WriteResp,
        RecordKind::ConfigWrite,
        RecordKind::MissEnq,
        RecordKind::Sleep,
        RecordKind::Wake,
        RecordKind::DrainMarker,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RecordKind::ReadReq => "read_req",
            RecordKind::ReadResp => "read_resp",
            RecordKind::WriteReq => "write_req",
            RecordKind::WriteResp => "write_resp",
            RecordKind::ConfigWrite => "config_write",
            RecordKind::MissEnq => "miss_enq",
            RecordKind::Sleep => "sleep",
            RecordKind::Wake => "wake",
            RecordKind::DrainMarker => "drain_marker",
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceRecord {
    pub timestamp: Cycle,
    pub tracer_id: u16,
    pub kind: RecordKind,
    pub flags: u8,
    pub master_id: u32,
    pub payload: u64,
}

impl TraceRecord {
    pub fn encode(&self) -> [u8; RECORD_BYTES] {
        let mut b = [0u8; RECORD_BYTES];
        b[0..8].copy_from_slice(&self.timestamp.to_le_bytes());
        b[8..10].copy_from_slice(&self.tracer_id.to_le_bytes());
        b[10] = self.kind as u8;
        b[11] = self.flags;
        b[12..16].copy_from_slice(&self.master_id.to_le_bytes());
        b[16..24].copy_from_slice(&self.payload.to_le_bytes());
        b
    }

    pub fn decode(b: &[u8; RECORD_BYTES]) -> Result<Self, TraceFileError> {
        let kind = RecordKind::from_u8(b[10]).ok_or(TraceFileError::BadKind(b[10]))?;
        Ok(Self {
            timestamp: u64::from_le_bytes(b[0..8].try_into().unwrap()),
            tracer_id: u16::from_le_bytes(b[8..10].try_into().unwrap()),
            kind,
            flags: b[11],
            master_id: u32::from_le_bytes(b[12..16].try_into().unwrap()),
            payload: u64::from_le_bytes(b[16..24].try_into().unwrap()),
        })
    }

    pub fn has(&self, flag: u8) -> bool {
        self.flags & flag != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceHeader {
    pub version: u16,
    pub platform_hash: u64,
    pub record_count: u64,
    pub clock_ratio: f64,
}

impl TraceHeader {
    pub fn encode(&self) -> [u8; HEADER_BYTES] {
        let mut b = [0u8; HEADER_BYTES];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[8..16].copy_from_slice(&self.platform_hash.to_le_bytes());
        b[16..24].copy_from_slice(&self.record_count.to_le_bytes());
        b[24..32].copy_from_slice(&self.clock_ratio.to_le_bytes());
        b
    }

    pub fn decode(b: &[u8; HEADER_BYTES]) -> Result<Self, TraceFileError> {
        if b[0..4] != MAGIC {
            return Err(TraceFileError::BadMagic);
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != FORMAT_VERSION {
            return Err(TraceFileError::Version(version));
        }
        Ok(Self {
            version,
            platform_hash: u64::from_le_bytes(b[8..16].try_into().unwrap()),
            record_count: u64::from_le_bytes(b[16..24].try_into().unwrap()),
            clock_ratio: f64::from_le_bytes(b[24..32].try_into().unwrap()),
        })
    }
}

#[derive(Debug, Error)]
pub enum TraceFileError {
    #[error("not a trace file (bad magic)")]
    BadMagic,
    #[error("unsupported trace format version {0}")]
    Version(u16),
    #[error("truncated trace: header announces {expected} records, found {found} complete")]
    Truncated { expected: u64, found: u64 },
    #[error("trailing bytes after {0} records")]
    Trailing(u64),
    #[error("unknown record kind {0}")]
    BadKind(u8),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A complete trace: header metadata plus records in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub platform_hash: u64,
    pub clock_ratio: f64,
    pub records: Vec<TraceRecord>,
}

impl TraceFile {
    pub fn header(&self) -> TraceHeader {
        TraceHeader {
            version: FORMAT_VERSION,
            platform_hash: self.platform_hash,
            record_count: self.records.len() as u64,
            clock_ratio: self.clock_ratio,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + RECORD_BYTES * self.records.len());
        out.extend_from_slice(&self.header().encode());
        for r in &self.records {
            out.extend_from_slice(&r.encode());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TraceFileError> {
        if bytes.len() < HEADER_BYTES {
            if bytes.len() >= 4 && bytes[0..4] != MAGIC {
                return Err(TraceFileError::BadMagic);
            }
            return Err(TraceFileError::Truncated {
                expected: 0,
                found: 0,
            });
        }
        let header = TraceHeader::decode(bytes[..HEADER_BYTES].try_into().unwrap())?;
        let body = &bytes[HEADER_BYTES..];
        let complete = (body.len() / RECORD_BYTES) as u64;
        if complete < header.record_count {
            return Err(TraceFileError::Truncated {
                expected: header.record_count,
                found: complete,
            });
        }
        if body.len() as u64 != header.record_count * RECORD_BYTES as u64 {
            return Err(TraceFileError::Trailing(header.record_count));
        }
        let records = body
            .chunks_exact(RECORD_BYTES)
            .map(|c| TraceRecord::decode(c.try_into().unwrap()))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            platform_hash: header.platform_hash,
            clock_ratio: header.clock_ratio,
            records,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, TraceFileError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    /// Write the trace to `path`.
    pub fn dump(&self, path: impl AsRef<Path>) -> io::Result<()> {
        std::fs::write(path, self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TraceFileError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Where a tracer taps the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttachPoint {
    RabReadReq,
    RabReadResp,
    RabWriteReq,
    RabWriteResp,
    RabConfig,
    Bus,
    ClusterSync,
}

impl AttachPoint {
    pub const ALL: [AttachPoint; 7] = [
        AttachPoint::RabReadReq,
        AttachPoint::RabReadResp,
        AttachPoint::RabWriteReq,
        AttachPoint::RabWriteResp,
        AttachPoint::RabConfig,
        AttachPoint::Bus,
        AttachPoint::ClusterSync,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttachPoint::RabReadReq => "rab_read_req",
            AttachPoint::RabReadResp => "rab_read_resp",
            AttachPoint::RabWriteReq => "rab_write_req",
            AttachPoint::RabWriteResp => "rab_write_resp",
            AttachPoint::RabConfig => "rab_config",
            AttachPoint::Bus => "bus",
            AttachPoint::ClusterSync => "cluster_sync",
        }
    }
}

impl FromStr for AttachPoint {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, TraceError> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| TraceError::UnknownPoint(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("unknown attachment point `{0}`")]
    UnknownPoint(String),
    #[error("tracer buffer depth must be at least 1")]
    ZeroDepth,
}

/// Activation condition over a sampled event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    Always,
    Master(u32),
    Cluster(u16),
    Kind(RecordKind),
    /// All of the given flag bits set.
    Flags(u8),
    Not(Box<Predicate>),
    All(Vec<Predicate>),
    Any(Vec<Predicate>),
}

impl Predicate {
    pub fn matches(&self, r: &TraceRecord) -> bool {
        match self {
            Predicate::Always => true,
            Predicate::Master(m) => r.master_id == *m,
            Predicate::Cluster(c) => (r.master_id >> 16) as u16 == *c,
            Predicate::Kind(k) => r.kind == *k,
            Predicate::Flags(f) => r.flags & f == *f,
            Predicate::Not(p) => !p.matches(r),
            Predicate::All(ps) => ps.iter().all(|p| p.matches(r)),
            Predicate::Any(ps) => ps.iter().any(|p| p.matches(r)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TracerBlock {
    pub id: u16,
    pub point: AttachPoint,
    pub predicate: Predicate,
    pub depth: usize,
    active_from: Cycle,
    buffer: Vec<TraceRecord>,
}

impl TracerBlock {
    pub fn occupancy(&self) -> usize {
        self.buffer.len()
    }
}

/// All tracers of a system plus the host-side store they drain into.
#[derive(Debug, Clone, Default)]
pub struct TraceUnit {
    tracers: Vec<TracerBlock>,
    store: Vec<TraceRecord>,
    drains: u64,
}

impl TraceUnit {
    pub fn new() -> Self {
        Self::default()
    }

    /// One tracer with the same predicate and depth on every point.
    pub fn everywhere(depth: usize) -> Self {
        let mut u = Self::new();
        for p in AttachPoint::ALL {
            u.attach(p, Predicate::Always, depth).expect("nonzero depth");
        }
        u
    }

    /// Attach before the run starts; the tracer is active from cycle 0.
    pub fn attach(
        &mut self,
        point: AttachPoint,
        predicate: Predicate,
        depth: usize,
    ) -> Result<u16, TraceError> {
        self.attach_at(point, predicate, depth, None)
    }

    /// Attach while running at `now`; the tracer is active from the next cycle.
    pub fn attach_at(
        &mut self,
        point: AttachPoint,
        predicate: Predicate,
        depth: usize,
        now: Option<Cycle>,
    ) -> Result<u16, TraceError> {
        if depth == 0 {
            return Err(TraceError::ZeroDepth);
        }
        let id = self.tracers.len() as u16;
        self.tracers.push(TracerBlock {
            id,
            point,
            predicate,
            depth,
            active_from: now.map_or(0, |t| t + 1),
            buffer: Vec::with_capacity(depth.min(4096)),
        });
        Ok(id)
    }

    pub fn is_empty(&self) -> bool {
        self.tracers.is_empty()
    }

    pub fn tracers(&self) -> &[TracerBlock] {
        &self.tracers
    }

    pub fn drains(&self) -> u64 {
        self.drains
    }

    pub fn listens(&self, point: AttachPoint) -> bool {
        self.tracers.iter().any(|t| t.point == point)
    }

    /// Offer an event to every tracer on `point`. Returns true when some
    /// buffer is full afterwards and must be drained.
    pub fn capture(&mut self, point: AttachPoint, event: TraceRecord) -> bool {
        let mut full = false;
        for t in self.tracers.iter_mut().filter(|t| t.point == point) {
            if event.timestamp < t.active_from || !t.predicate.matches(&event) {
                continue;
            }
            t.buffer.push(TraceRecord {
                tracer_id: t.id,
                ..event
            });
            full |= t.buffer.len() >= t.depth;
        }
        full
    }

    /// Move every buffer, in tracer-id order, to the host store and append a
    /// drain marker. `pmca_cycle` stamps the marker; `host_cycle` is stored
    /// in its payload.
    pub fn drain(&mut self, pmca_cycle: Cycle, host_cycle: Cycle) -> usize {
        let moved = self.flush();
        self.drains += 1;
        self.store.push(TraceRecord {
            timestamp: pmca_cycle,
            tracer_id: HOST_TRACER_ID,
            kind: RecordKind::DrainMarker,
            flags: 0,
            master_id: moved as u32,
            payload: host_cycle,
        });
        moved
    }

    /// Final readout at the end of a run (no gating, no marker).
    pub fn flush(&mut self) -> usize {
        let mut moved = 0;
        for t in &mut self.tracers {
            moved += t.buffer.len();
            self.store.append(&mut t.buffer);
        }
        moved
    }

    pub fn store(&self) -> &[TraceRecord] {
        &self.store
    }

    pub fn into_file(mut self, platform_hash: u64, clock_ratio: f64) -> TraceFile {
        self.flush();
        TraceFile {
            platform_hash,
            clock_ratio,
            records: self.store,
        }
    }
}
