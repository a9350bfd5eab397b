// SPDX-License-Identifier: Apache-2.0

//! Cluster execution. PEs interpret timed op streams; every main-memory access
//! and every VA-addressed DMA page goes through the RAB. A miss puts the
//! requester to sleep until the miss handler has walked the page table and
//! reconfigured the RAB. DMA bursts compete on the system interconnect.
//!
//! Trace records are captured at their own timestamp: records that describe a
//! future cycle are scheduled as separate events, so every tracer sees a
//! non-decreasing time stream and capture never reorders model events.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use crate::config::SimConfig;
use crate::engine::{Cycle, DomainId, Engine, EngineError};
use crate::interconnect::{Burst, SystemInterconnect, BURST_BYTES};
use crate::memory::{
    Dram, MemoryError, PageTable, PhysicalAddress, Spm, VirtualAddress, PAGE_SHIFT, PAGE_SIZE,
};
use crate::rab::{MasterId, OutcomeKind, Rab, RabStats, RangeEntry};
use crate::trace::{flags, AttachPoint, RecordKind, TraceFile, TraceRecord, TraceUnit};
use crate::vmm::{VictimPolicy, Vmm};
use crate::SimError;

/// DMA transfer handle, numbered per PE in issue order from 0.
pub type Tag = u32;

/// Host cycles to service a trace-buffer interrupt, plus per drained record.
pub const DRAIN_BASE_CYCLES: Cycle = 200;
pub const DRAIN_CYCLES_PER_RECORD: Cycle = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Addr {
    Va(u32),
    Pa(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scope {
    Cluster,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Compute(Cycle),
    LoadVa(u32),
    StoreVa(u32),
    LoadSpm(u32),
    StoreSpm(u32),
    DmaGet {
        src: Addr,
        dst: u32,
        bytes: u32,
        channel: u16,
    },
    DmaPut {
        src: u32,
        dst: Addr,
        bytes: u32,
        channel: u16,
    },
    WaitDma(Tag),
    Barrier(Scope),
    /// Run functional hook `n` of the kernel (zero cycles).
    Call(usize),
    End,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KernelProgram {
    pub ops: Vec<Op>,
}

impl KernelProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// A program that only ends.
    pub fn empty() -> Self {
        Self { ops: vec![Op::End] }
    }

    pub fn push(&mut self, op: Op) -> &mut Self {
        self.ops.push(op);
        self
    }

    /// Append compute cycles, merging with a preceding compute op.
    pub fn compute(&mut self, cycles: Cycle) -> &mut Self {
        if cycles == 0 {
            return self;
        }
        if let Some(Op::Compute(c)) = self.ops.last_mut() {
            *c += cycles;
        } else {
            self.ops.push(Op::Compute(cycles));
        }
        self
    }

    pub fn dma_ops(&self) -> u32 {
        self.ops
            .iter()
            .filter(|o| matches!(o, Op::DmaGet { .. } | Op::DmaPut { .. }))
            .count() as u32
    }

    pub fn dma_get(&mut self, src: Addr, dst: u32, bytes: u32, channel: u16) -> Tag {
        let tag = self.dma_ops();
        self.ops.push(Op::DmaGet {
            src,
            dst,
            bytes,
            channel,
        });
        tag
    }

    pub fn dma_put(&mut self, src: u32, dst: Addr, bytes: u32, channel: u16) -> Tag {
        let tag = self.dma_ops();
        self.ops.push(Op::DmaPut {
            src,
            dst,
            bytes,
            channel,
        });
        tag
    }

    pub fn wait(&mut self, tag: Tag) -> &mut Self {
        self.push(Op::WaitDma(tag))
    }

    pub fn barrier(&mut self, scope: Scope) -> &mut Self {
        self.push(Op::Barrier(scope))
    }

    pub fn end(mut self) -> Self {
        self.ops.push(Op::End);
        self
    }

    /// Only `End`; such a PE does not take part in barriers.
    pub fn is_trivial(&self) -> bool {
        self.ops.len() <= 1
    }

    fn validate(&self, spm_bytes: u32, banks: u32, channels: u32, calls: usize) -> Result<(), String> {
        match self.ops.last() {
            Some(Op::End) => {}
            _ => return Err("program does not terminate with End".into()),
        }
        let spm_ok = |off: u32, bytes: u32| off as u64 + bytes as u64 <= spm_bytes as u64;
        let mut issued = 0u32;
        for (i, op) in self.ops.iter().enumerate() {
            let bad = match *op {
                Op::End if i + 1 != self.ops.len() => Some("End before the last op".to_string()),
                Op::LoadSpm(b) | Op::StoreSpm(b) if b >= banks => {
                    Some(format!("SPM bank {b} out of {banks}"))
                }
                Op::DmaGet {
                    dst: off,
                    bytes,
                    channel,
                    ..
                }
                | Op::DmaPut {
                    src: off,
                    bytes,
                    channel,
                    ..
                } => {
                    issued += 1;
                    if !spm_ok(off, bytes) {
                        Some(format!("SPM range {off:#x}+{bytes} exceeds {spm_bytes} bytes"))
                    } else if channel as u32 >= channels {
                        Some(format!("DMA channel {channel} out of {channels}"))
                    } else {
                        None
                    }
                }
                Op::WaitDma(t) if t >= issued => Some(format!("wait on tag {t} before it is issued")),
                Op::Call(n) if n >= calls => Some(format!("call {n} not defined")),
                _ => None,
            };
            if let Some(msg) = bad {
                return Err(format!("op {i}: {msg}"));
            }
        }
        Ok(())
    }
}

/// Byte-level view of memory as seen by functional hooks: contiguous range
/// windows first, then the page table.
pub struct FunctionalMemory<'a> {
    dram: &'a mut Dram,
    pt: &'a PageTable,
    ranges: &'a [RangeEntry],
}

impl<'a> FunctionalMemory<'a> {
    pub fn new(dram: &'a mut Dram, pt: &'a PageTable, ranges: &'a [RangeEntry]) -> Self {
        Self { dram, pt, ranges }
    }

    pub fn translate(&self, va: u32) -> Result<PhysicalAddress, SimError> {
        let v = VirtualAddress(va);
        for r in self.ranges {
            let off = v.page().wrapping_sub(r.first_vpn);
            if off < r.pages {
                return Ok(PhysicalAddress::from_page(r.first_ppn + off, v.offset()));
            }
        }
        self.pt
            .translate(v)
            .ok_or(SimError::Memory(MemoryError::PageFault(v)))
    }

    fn chunks(va: u32, len: usize) -> impl Iterator<Item = (u32, usize, usize)> {
        let mut done = 0usize;
        std::iter::from_fn(move || {
            if done >= len {
                return None;
            }
            let a = va + done as u32;
            let n = ((PAGE_SIZE - (a & (PAGE_SIZE - 1))) as usize).min(len - done);
            let item = (a, done, n);
            done += n;
            Some(item)
        })
    }

    pub fn read(&self, va: u32, buf: &mut [u8]) -> Result<(), SimError> {
        for (a, at, n) in Self::chunks(va, buf.len()) {
            self.dram.read(self.translate(a)?, &mut buf[at..at + n])?;
        }
        Ok(())
    }

    pub fn write(&mut self, va: u32, data: &[u8]) -> Result<(), SimError> {
        for (a, at, n) in Self::chunks(va, data.len()) {
            let pa = self.translate(a)?;
            self.dram.write(pa, &data[at..at + n])?;
        }
        Ok(())
    }

    pub fn read_u32(&self, va: u32) -> Result<u32, SimError> {
        let mut b = [0u8; 4];
        self.read(va, &mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn write_u32(&mut self, va: u32, v: u32) -> Result<(), SimError> {
        self.write(va, &v.to_le_bytes())
    }
}

/// State handed to a functional hook.
pub struct CallCtx<'a> {
    pub cluster: u16,
    pub pe: u16,
    pub spm: &'a mut [u8],
    pub mem: FunctionalMemory<'a>,
}

pub type CallFn = Arc<dyn Fn(&mut CallCtx<'_>) -> Result<(), SimError> + Send + Sync>;

/// Programs indexed `[cluster][pe]` plus the functional hooks they call.
#[derive(Clone, Default)]
pub struct Kernel {
    pub programs: Vec<Vec<KernelProgram>>,
    pub calls: Vec<CallFn>,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("programs", &self.programs)
            .field("calls", &self.calls.len())
            .finish()
    }
}

impl Kernel {
    pub fn single(program: KernelProgram) -> Self {
        Self {
            programs: vec![vec![program]],
            calls: Vec::new(),
        }
    }

    pub fn add_call(&mut self, f: CallFn) -> usize {
        self.calls.push(f);
        self.calls.len() - 1
    }

    pub fn validate(&self, cfg: &SimConfig) -> Result<(), SimError> {
        let p = &cfg.platform;
        if self.programs.len() > p.n_clusters as usize {
            return Err(SimError::Program(format!(
                "{} cluster programs for {} clusters",
                self.programs.len(),
                p.n_clusters
            )));
        }
        for (c, pes) in self.programs.iter().enumerate() {
            if pes.len() > p.pes_per_cluster as usize {
                return Err(SimError::Program(format!(
                    "cluster {c}: {} programs for {} PEs",
                    pes.len(),
                    p.pes_per_cluster
                )));
            }
            for (pe, prog) in pes.iter().enumerate() {
                prog.validate(
                    p.l1_spm_bytes(),
                    p.l1_spm_banks,
                    cfg.calibration.dma_channels,
                    self.calls.len(),
                )
                .map_err(|m| SimError::Program(format!("c{c}.pe{pe} {m}")))?;
            }
        }
        Ok(())
    }
}

/// The accelerator side of the SoC plus shared memory.
pub struct Soc {
    pub config: SimConfig,
    pub dram: Dram,
    pub pt: PageTable,
    pub rab: Rab,
    pub vmm: Vmm,
    pub trace: TraceUnit,
}

impl Soc {
    pub fn new(config: SimConfig, seed: u64) -> Self {
        let p = &config.platform;
        let c = &config.calibration;
        let vmm = Vmm::new(
            VictimPolicy::new(c.victim_policy, seed),
            MasterId::new(0, c.vmm_handler_pe as u16),
            c.vmm_install_l2,
            c.wake_latency,
        );
        Self {
            dram: Dram::new(c, p.n_clusters as usize + 1),
            pt: PageTable::new(c.ptw_levels),
            rab: Rab::new(p, c),
            vmm,
            trace: TraceUnit::new(),
            config,
        }
    }

    /// DRAM port used by the miss handler; cluster `c` uses port `c`.
    pub fn vmm_port(&self) -> usize {
        self.config.platform.n_clusters as usize
    }

    pub fn memory(&mut self) -> FunctionalMemory<'_> {
        FunctionalMemory::new(&mut self.dram, &self.pt, self.rab.ranges())
    }

    /// Hand the captured records over as a trace file and reset the tracers'
    /// store.
    pub fn take_trace(&mut self) -> TraceFile {
        let unit = std::mem::take(&mut self.trace);
        unit.into_file(self.config.hash(), self.config.calibration.clock_ratio)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExecOptions {
    /// PMCA cycle at which every PE starts.
    pub t0: Cycle,
    pub event_limit: u64,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self {
            t0: 0,
            event_limit: 1_000_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecReport {
    pub start: Cycle,
    /// Last PE finish, PMCA cycles.
    pub finish: Cycle,
    pub cluster_finish: Vec<Cycle>,
    pub rab: RabStats,
    pub misses_handled: u64,
    pub bus_bytes: u64,
    pub drains: u64,
    pub events: u64,
    /// Host-domain cycle at which the run ended (includes drain stalls).
    pub global_finish: Cycle,
}

impl ExecReport {
    pub fn kernel_cycles(&self) -> Cycle {
        self.finish - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PeStatus {
    Running,
    /// Waiting for a RAB miss to be serviced.
    Sleeping,
    /// Waiting on a DMA tag or barrier.
    Blocked,
    Done,
}

#[derive(Debug, Clone)]
struct PeState {
    pc: usize,
    status: PeStatus,
    retry: bool,
    issued: Tag,
    waiting: Option<Tag>,
    dma_done: Vec<bool>,
    finish: Option<Cycle>,
}

#[derive(Debug, Clone, Copy)]
struct Transfer {
    pe: u16,
    tag: Tag,
    is_put: bool,
    addr: Addr,
    spm: u32,
    bytes: u32,
    done: u32,
}

#[derive(Debug, Clone, Copy)]
struct PageCursor {
    vpn: u32,
    ppn: u32,
    va: u32,
}

#[derive(Debug, Clone, Default)]
struct Channel {
    queue: VecDeque<Transfer>,
    active: bool,
    retry: bool,
    page: Option<PageCursor>,
}

struct ClusterState {
    pes: Vec<PeState>,
    channels: Vec<Channel>,
    spm: Spm,
}

#[derive(Debug, Clone, Copy)]
enum Action {
    Pe { c: u16, p: u16 },
    Dma { c: u16, ch: u16 },
    DmaDone { c: u16, p: u16, tag: Tag },
    Link(usize),
    Vmm,
    Wake { master: MasterId, va: u32 },
    Emit(AttachPoint, TraceRecord),
    DrainDone,
}

fn record(t: Cycle, kind: RecordKind, flags: u8, master: MasterId, payload: u64) -> TraceRecord {
    TraceRecord {
        timestamp: t,
        tracer_id: 0,
        kind,
        flags,
        master_id: master.0,
        payload,
    }
}

fn points(is_write: bool) -> (AttachPoint, AttachPoint, RecordKind, RecordKind) {
    if is_write {
        (
            AttachPoint::RabWriteReq,
            AttachPoint::RabWriteResp,
            RecordKind::WriteReq,
            RecordKind::WriteResp,
        )
    } else {
        (
            AttachPoint::RabReadReq,
            AttachPoint::RabReadResp,
            RecordKind::ReadReq,
            RecordKind::ReadResp,
        )
    }
}

fn barrier_key(scope: Scope, c: u16) -> u32 {
    match scope {
        Scope::Cluster => c as u32,
        Scope::Global => u32::MAX,
    }
}

struct Executor<'a> {
    soc: &'a mut Soc,
    kernel: &'a Kernel,
    engine: Engine<Action>,
    host: DomainId,
    pmca: DomainId,
    now: Cycle,
    clusters: Vec<ClusterState>,
    ic: SystemInterconnect,
    vmm_scheduled: bool,
    drains_in_flight: u32,
    arrivals: HashMap<u32, Vec<(u16, u16)>>,
    participants: HashMap<u32, usize>,
    generation: HashMap<u32, u64>,
}

/// Run `kernel` to completion on `soc`.
pub fn execute(soc: &mut Soc, kernel: &Kernel, opts: ExecOptions) -> Result<ExecReport, SimError> {
    kernel.validate(&soc.config)?;
    let p = soc.config.platform.clone();
    let channels = soc.config.calibration.dma_channels as usize;
    let clusters = (0..p.n_clusters as usize)
        .map(|c| {
            let progs = kernel.programs.get(c);
            ClusterState {
                pes: (0..p.pes_per_cluster as usize)
                    .map(|pe| PeState {
                        pc: 0,
                        status: PeStatus::Running,
                        retry: false,
                        issued: 0,
                        waiting: None,
                        dma_done: vec![
                            false;
                            progs.and_then(|v| v.get(pe)).map_or(0, |k| k.dma_ops()) as usize
                        ],
                        finish: None,
                    })
                    .collect(),
                channels: vec![Channel::default(); channels],
                spm: Spm::new(p.l1_spm_bytes(), p.l1_spm_banks),
            }
        })
        .collect();
    let mut engine = Engine::new().with_event_limit(opts.event_limit);
    let host = engine.add_domain("host");
    let pmca = engine.add_domain("pmca");
    let mut participants = HashMap::new();
    for (c, pes) in kernel.programs.iter().enumerate() {
        for _ in pes.iter().filter(|k| !k.is_trivial()) {
            *participants.entry(c as u32).or_insert(0) += 1;
            *participants.entry(u32::MAX).or_insert(0) += 1;
        }
    }
    let ic = SystemInterconnect::new(p.interconnect, p.n_clusters as usize, &soc.config.calibration);
    let ex = Executor {
        soc,
        kernel,
        engine,
        host,
        pmca,
        now: 0,
        clusters,
        ic,
        vmm_scheduled: false,
        drains_in_flight: 0,
        arrivals: HashMap::new(),
        participants,
        generation: HashMap::new(),
    };
    ex.run(opts)
}

impl Executor<'_> {
    fn run(mut self, opts: ExecOptions) -> Result<ExecReport, SimError> {
        for c in 0..self.clusters.len() as u16 {
            for p in 0..self.clusters[c as usize].pes.len() as u16 {
                self.engine
                    .schedule_at(self.pmca, opts.t0, Action::Pe { c, p })?;
            }
        }
        loop {
            let fired = match self.engine.next_event() {
                Ok(Some(f)) => f,
                Ok(None) => break,
                Err(EngineError::EventLimit(n)) => {
                    return Err(SimError::Deadlock(format!(
                        "no completion after {n} events; stuck: {}",
                        self.stuck()
                    )))
                }
                Err(e) => return Err(e.into()),
            };
            if fired.domain == self.pmca {
                self.now = fired.local;
            }
            self.dispatch(fired.action)?;
        }
        if self
            .clusters
            .iter()
            .flat_map(|c| &c.pes)
            .any(|p| p.status != PeStatus::Done)
        {
            return Err(SimError::Deadlock(format!(
                "event queue empty with unfinished PEs: {}",
                self.stuck()
            )));
        }
        let cluster_finish: Vec<Cycle> = self
            .clusters
            .iter()
            .map(|c| c.pes.iter().filter_map(|p| p.finish).max().unwrap_or(opts.t0))
            .collect();
        Ok(ExecReport {
            start: opts.t0,
            finish: cluster_finish.iter().copied().max().unwrap_or(opts.t0),
            cluster_finish,
            rab: self.soc.rab.stats(),
            misses_handled: self.soc.vmm.handled(),
            bus_bytes: self.ic.bytes_transferred(),
            drains: self.soc.trace.drains(),
            events: self.engine.events_fired(),
            global_finish: self.engine.now(),
        })
    }

    fn stuck(&self) -> String {
        let mut out = Vec::new();
        for (c, cl) in self.clusters.iter().enumerate() {
            for (p, pe) in cl.pes.iter().enumerate() {
                if pe.status != PeStatus::Done {
                    let op = self
                        .kernel
                        .programs
                        .get(c)
                        .and_then(|v| v.get(p))
                        .and_then(|k| k.ops.get(pe.pc));
                    out.push(format!("c{c}.pe{p} {:?} at {:?}", pe.status, op));
                }
            }
        }
        out.join(", ")
    }

    fn at(&mut self, t: Cycle, action: Action) -> Result<(), SimError> {
        self.engine
            .schedule(self.pmca, t.saturating_sub(self.now), action)?;
        Ok(())
    }

    fn dispatch(&mut self, action: Action) -> Result<(), SimError> {
        match action {
            Action::Pe { c, p } => self.pe_step(c, p),
            Action::Dma { c, ch } => self.dma_step(c, ch),
            Action::DmaDone { c, p, tag } => {
                let pe = &mut self.clusters[c as usize].pes[p as usize];
                pe.dma_done[tag as usize] = true;
                if pe.status == PeStatus::Blocked && pe.waiting == Some(tag) {
                    pe.status = PeStatus::Running;
                    pe.waiting = None;
                    return self.pe_step(c, p);
                }
                Ok(())
            }
            Action::Link(server) => self.link_done(server),
            Action::Vmm => self.vmm_service(),
            Action::Wake { master, va } => self.wake(master, va),
            Action::Emit(point, rec) => self.capture(point, rec),
            Action::DrainDone => {
                self.drains_in_flight -= 1;
                if self.drains_in_flight == 0 {
                    self.engine.ungate(self.pmca)?;
                }
                Ok(())
            }
        }
    }

    // ---- tracing ----

    fn emit(&mut self, t: Cycle, point: AttachPoint, rec: TraceRecord) -> Result<(), SimError> {
        if !self.soc.trace.listens(point) {
            return Ok(());
        }
        if t <= self.now {
            self.capture(point, rec)
        } else {
            self.at(t, Action::Emit(point, rec))
        }
    }

    fn capture(&mut self, point: AttachPoint, rec: TraceRecord) -> Result<(), SimError> {
        if !self.soc.trace.capture(point, rec) {
            return Ok(());
        }
        let moved = self.soc.trace.drain(self.now, self.engine.now()) as Cycle;
        if !self.engine.is_gated(self.pmca)? {
            self.engine.gate(self.pmca)?;
        }
        self.drains_in_flight += 1;
        self.engine.schedule(
            self.host,
            DRAIN_BASE_CYCLES + moved * DRAIN_CYCLES_PER_RECORD,
            Action::DrainDone,
        )?;
        Ok(())
    }

    // ---- PEs ----

    fn pe_step(&mut self, c: u16, p: u16) -> Result<(), SimError> {
        let Some(prog) = self
            .kernel
            .programs
            .get(c as usize)
            .and_then(|v| v.get(p as usize))
        else {
            let pe = &mut self.clusters[c as usize].pes[p as usize];
            pe.status = PeStatus::Done;
            pe.finish = Some(self.now);
            return Ok(());
        };
        loop {
            let pc = self.clusters[c as usize].pes[p as usize].pc;
            let now = self.now;
            match prog.ops[pc] {
                Op::Compute(n) => {
                    self.advance(c, p);
                    return self.at(now + n, Action::Pe { c, p });
                }
                Op::LoadSpm(bank) | Op::StoreSpm(bank) => {
                    let done = self.clusters[c as usize].spm.access(bank, now)?;
                    self.advance(c, p);
                    return self.at(done, Action::Pe { c, p });
                }
                Op::LoadVa(va) => return self.pe_access(c, p, va, false),
                Op::StoreVa(va) => return self.pe_access(c, p, va, true),
                Op::DmaGet {
                    src,
                    dst,
                    bytes,
                    channel,
                } => {
                    self.dma_issue(c, p, false, src, dst, bytes, channel)?;
                    self.advance(c, p);
                    return self.at(now + 1, Action::Pe { c, p });
                }
                Op::DmaPut {
                    src,
                    dst,
                    bytes,
                    channel,
                } => {
                    self.dma_issue(c, p, true, dst, src, bytes, channel)?;
                    self.advance(c, p);
                    return self.at(now + 1, Action::Pe { c, p });
                }
                Op::WaitDma(tag) => {
                    let pe = &mut self.clusters[c as usize].pes[p as usize];
                    if pe.dma_done[tag as usize] {
                        pe.pc += 1;
                        continue;
                    }
                    pe.status = PeStatus::Blocked;
                    pe.waiting = Some(tag);
                    return Ok(());
                }
                Op::Barrier(scope) => {
                    self.advance(c, p);
                    return self.arrive(scope, c, p);
                }
                Op::Call(n) => {
                    let f = self.kernel.calls[n].clone();
                    let soc = &mut *self.soc;
                    let mut ctx = CallCtx {
                        cluster: c,
                        pe: p,
                        spm: self.clusters[c as usize].spm.data_mut(),
                        mem: FunctionalMemory::new(&mut soc.dram, &soc.pt, soc.rab.ranges()),
                    };
                    f(&mut ctx)?;
                    self.advance(c, p);
                }
                Op::End => {
                    let pe = &mut self.clusters[c as usize].pes[p as usize];
                    pe.status = PeStatus::Done;
                    pe.finish = Some(now);
                    return Ok(());
                }
            }
        }
    }

    fn advance(&mut self, c: u16, p: u16) {
        self.clusters[c as usize].pes[p as usize].pc += 1;
    }

    fn pe_access(&mut self, c: u16, p: u16, va: u32, is_write: bool) -> Result<(), SimError> {
        let master = MasterId::new(c, p);
        let now = self.now;
        let (req_pt, resp_pt, req_kind, resp_kind) = points(is_write);
        let pe = &mut self.clusters[c as usize].pes[p as usize];
        let retry = if std::mem::take(&mut pe.retry) {
            flags::RETRY
        } else {
            0
        };
        self.emit(now, req_pt, record(now, req_kind, retry, master, va as u64))?;
        let o = self
            .soc
            .rab
            .translate(VirtualAddress(va), master, is_write, now);
        match o.kind {
            OutcomeKind::L1Hit | OutcomeKind::L2Hit => {
                let pa = o.pa.expect("hit carries an address");
                let l2 = if o.kind == OutcomeKind::L2Hit { flags::L2 } else { 0 };
                self.emit(
                    o.ready,
                    req_pt,
                    record(o.ready, req_kind, flags::DOWNSTREAM | l2, master, pa.0 as u64),
                )?;
                let done = self.soc.dram.access(c as usize, pa, 4, o.ready)?;
                self.emit(done, resp_pt, record(done, resp_kind, 0, master, va as u64))?;
                self.advance(c, p);
                self.at(done, Action::Pe { c, p })
            }
            OutcomeKind::MissEnqueued => {
                self.emit(o.ready, req_pt, record(o.ready, RecordKind::MissEnq, 0, master, va as u64))?;
                self.emit(
                    o.ready,
                    AttachPoint::ClusterSync,
                    record(o.ready, RecordKind::Sleep, 0, master, va as u64),
                )?;
                self.clusters[c as usize].pes[p as usize].status = PeStatus::Sleeping;
                self.kick_vmm(o.ready)
            }
            OutcomeKind::MissDropped => {
                self.emit(
                    o.ready,
                    req_pt,
                    record(o.ready, RecordKind::MissEnq, flags::DROPPED, master, va as u64),
                )?;
                self.clusters[c as usize].pes[p as usize].retry = true;
                let again = (o.ready + 1).max(self.soc.vmm.busy_until());
                self.at(again, Action::Pe { c, p })
            }
            OutcomeKind::PermissionFault => Err(SimError::PermissionFault {
                va: VirtualAddress(va),
                master,
                access: if is_write { "write" } else { "read" },
            }),
        }
    }

    fn arrive(&mut self, scope: Scope, c: u16, p: u16) -> Result<(), SimError> {
        self.clusters[c as usize].pes[p as usize].status = PeStatus::Blocked;
        let key = barrier_key(scope, c);
        let list = self.arrivals.entry(key).or_default();
        list.push((c, p));
        if list.len() < self.participants.get(&key).copied().unwrap_or(0) {
            return Ok(());
        }
        let list = std::mem::take(list);
        let gen = self.generation.entry(key).or_insert(0);
        let payload = ((key as u64) << 32) | *gen;
        *gen += 1;
        let release = self.now + 1;
        for (c, p) in list {
            self.clusters[c as usize].pes[p as usize].status = PeStatus::Running;
            self.emit(
                release,
                AttachPoint::ClusterSync,
                record(release, RecordKind::Wake, flags::SYNC, MasterId::new(c, p), payload),
            )?;
            self.at(release, Action::Pe { c, p })?;
        }
        Ok(())
    }

    // ---- miss handling ----

    fn kick_vmm(&mut self, at: Cycle) -> Result<(), SimError> {
        if self.vmm_scheduled {
            return Ok(());
        }
        self.vmm_scheduled = true;
        let t = at.max(self.soc.vmm.busy_until());
        self.at(t, Action::Vmm)
    }

    fn vmm_service(&mut self) -> Result<(), SimError> {
        self.vmm_scheduled = false;
        let Some(miss) = self.soc.rab.pop_miss() else {
            return Ok(());
        };
        let t = self.now.max(miss.issue);
        let port = self.soc.vmm_port();
        let soc = &mut *self.soc;
        let h = soc
            .vmm
            .handle_miss(miss, &mut soc.rab, &mut soc.dram, port, &soc.pt, t)?;
        let handler = self.soc.vmm.handler();
        for (level, &(issue, done)) in h.ptw.iter().enumerate() {
            let pa = self.soc.pt.entry_address(miss.va.page(), level as u32).0 as u64;
            self.emit(
                issue,
                AttachPoint::RabReadReq,
                record(issue, RecordKind::ReadReq, flags::DOWNSTREAM | flags::PTW, handler, pa),
            )?;
            self.emit(
                done,
                AttachPoint::RabReadResp,
                record(done, RecordKind::ReadResp, flags::PTW, handler, pa),
            )?;
        }
        let ci = h.config_issue;
        self.emit(
            ci,
            AttachPoint::RabConfig,
            record(ci, RecordKind::ConfigWrite, 0, handler, h.entry.descriptor(h.coord)),
        )?;
        if let Some((coord, e)) = h.l2_write {
            self.emit(
                ci,
                AttachPoint::RabConfig,
                record(ci, RecordKind::ConfigWrite, flags::L2, handler, e.descriptor(coord)),
            )?;
        }
        self.at(
            h.wake,
            Action::Wake {
                master: miss.master,
                va: miss.va.0,
            },
        )?;
        if self.soc.rab.pending_misses() > 0 {
            self.kick_vmm(h.wake)?;
        }
        Ok(())
    }

    fn wake(&mut self, master: MasterId, va: u32) -> Result<(), SimError> {
        let now = self.now;
        self.emit(
            now,
            AttachPoint::ClusterSync,
            record(now, RecordKind::Wake, 0, master, va as u64),
        )?;
        let c = master.cluster();
        if master.is_dma() {
            let ch = master.pe() - crate::rab::DMA_MASTER_BASE;
            self.clusters[c as usize].channels[ch as usize].retry = true;
            self.dma_step(c, ch)
        } else {
            let p = master.pe();
            let pe = &mut self.clusters[c as usize].pes[p as usize];
            pe.status = PeStatus::Running;
            pe.retry = true;
            self.pe_step(c, p)
        }
    }

    // ---- DMA ----

    #[allow(clippy::too_many_arguments)]
    fn dma_issue(
        &mut self,
        c: u16,
        p: u16,
        is_put: bool,
        addr: Addr,
        spm: u32,
        bytes: u32,
        channel: u16,
    ) -> Result<(), SimError> {
        let pe = &mut self.clusters[c as usize].pes[p as usize];
        let tag = pe.issued;
        pe.issued += 1;
        if bytes == 0 {
            pe.dma_done[tag as usize] = true;
            return Ok(());
        }
        let ch = &mut self.clusters[c as usize].channels[channel as usize];
        ch.queue.push_back(Transfer {
            pe: p,
            tag,
            is_put,
            addr,
            spm,
            bytes,
            done: 0,
        });
        if !ch.active {
            ch.active = true;
            return self.dma_step(c, channel);
        }
        Ok(())
    }

    fn dma_step(&mut self, c: u16, chn: u16) -> Result<(), SimError> {
        let ch = &mut self.clusters[c as usize].channels[chn as usize];
        let Some(&tr) = ch.queue.front() else {
            ch.active = false;
            return Ok(());
        };
        let left = tr.bytes - tr.done;
        let (pa, chunk) = match tr.addr {
            Addr::Pa(base) => (base + tr.done, left.min(BURST_BYTES)),
            Addr::Va(base) => {
                let va = base + tr.done;
                let vpn = va >> PAGE_SHIFT;
                let ppn = match ch.page {
                    Some(cur) if cur.vpn == vpn => cur.ppn,
                    _ => {
                        if let Some(prev) = ch.page.take() {
                            self.page_resp(c, chn, tr.is_put, prev)?;
                        }
                        return self.dma_translate(c, chn, va, tr.is_put);
                    }
                };
                let off = va & (PAGE_SIZE - 1);
                let chunk = left.min(BURST_BYTES).min(PAGE_SIZE - off);
                ((ppn << PAGE_SHIFT) | off, chunk)
            }
        };
        let server = self.ic.request(Burst {
            cluster: c,
            channel: chn,
            bytes: chunk,
            addr: pa,
            is_write: tr.is_put,
        });
        self.grant_next(server)
    }

    fn page_resp(&mut self, c: u16, chn: u16, is_put: bool, page: PageCursor) -> Result<(), SimError> {
        let (_, resp_pt, _, resp_kind) = points(is_put);
        let now = self.now;
        self.emit(
            now,
            resp_pt,
            record(now, resp_kind, flags::DMA, MasterId::dma(c, chn), page.va as u64),
        )
    }

    fn dma_translate(&mut self, c: u16, chn: u16, va: u32, is_put: bool) -> Result<(), SimError> {
        let now = self.now;
        let master = MasterId::dma(c, chn);
        let (req_pt, _, req_kind, _) = points(is_put);
        let ch = &mut self.clusters[c as usize].channels[chn as usize];
        let retry = if std::mem::take(&mut ch.retry) {
            flags::RETRY
        } else {
            0
        };
        self.emit(now, req_pt, record(now, req_kind, flags::DMA | retry, master, va as u64))?;
        let o = self.soc.rab.translate(VirtualAddress(va), master, is_put, now);
        match o.kind {
            OutcomeKind::L1Hit | OutcomeKind::L2Hit => {
                let pa = o.pa.expect("hit carries an address");
                let l2 = if o.kind == OutcomeKind::L2Hit { flags::L2 } else { 0 };
                self.emit(
                    o.ready,
                    req_pt,
                    record(o.ready, req_kind, flags::DOWNSTREAM | flags::DMA | l2, master, pa.0 as u64),
                )?;
                self.clusters[c as usize].channels[chn as usize].page = Some(PageCursor {
                    vpn: va >> PAGE_SHIFT,
                    ppn: pa.page(),
                    va,
                });
                self.at(o.ready, Action::Dma { c, ch: chn })
            }
            OutcomeKind::MissEnqueued => {
                self.emit(
                    o.ready,
                    req_pt,
                    record(o.ready, RecordKind::MissEnq, flags::DMA, master, va as u64),
                )?;
                self.emit(
                    o.ready,
                    AttachPoint::ClusterSync,
                    record(o.ready, RecordKind::Sleep, flags::DMA, master, va as u64),
                )?;
                self.kick_vmm(o.ready)
            }
            OutcomeKind::MissDropped => {
                self.emit(
                    o.ready,
                    req_pt,
                    record(o.ready, RecordKind::MissEnq, flags::DMA | flags::DROPPED, master, va as u64),
                )?;
                self.clusters[c as usize].channels[chn as usize].retry = true;
                let again = (o.ready + 1).max(self.soc.vmm.busy_until());
                self.at(again, Action::Dma { c, ch: chn })
            }
            OutcomeKind::PermissionFault => Err(SimError::PermissionFault {
                va: VirtualAddress(va),
                master,
                access: if is_put { "write" } else { "read" },
            }),
        }
    }

    fn bus_record(&self, t: Cycle, b: &Burst, resp: bool) -> TraceRecord {
        let kind = match (b.is_write, resp) {
            (false, false) => RecordKind::ReadReq,
            (false, true) => RecordKind::ReadResp,
            (true, false) => RecordKind::WriteReq,
            (true, true) => RecordKind::WriteResp,
        };
        record(
            t,
            kind,
            flags::DMA | flags::BUS,
            MasterId::dma(b.cluster, b.channel),
            ((b.bytes as u64) << 32) | b.addr as u64,
        )
    }

    fn grant_next(&mut self, server: usize) -> Result<(), SimError> {
        if let Some(g) = self.ic.try_grant(server, self.now) {
            let rec = self.bus_record(self.now, &g.burst, false);
            self.emit(self.now, AttachPoint::Bus, rec)?;
            self.at(g.done, Action::Link(server))?;
        }
        Ok(())
    }

    fn link_done(&mut self, server: usize) -> Result<(), SimError> {
        let g = self.ic.complete(server).expect("link event without a burst in flight");
        let b = g.burst;
        let rec = self.bus_record(self.now, &b, true);
        self.emit(self.now, AttachPoint::Bus, rec)?;
        let (c, chn) = (b.cluster as usize, b.channel as usize);
        let cl = &mut self.clusters[c];
        let tr = cl.channels[chn].queue.front_mut().expect("burst belongs to a transfer");
        let at = (tr.spm + tr.done) as usize;
        let span = at..at + b.bytes as usize;
        if tr.is_put {
            self.soc
                .dram
                .write(PhysicalAddress(b.addr), &cl.spm.data()[span])?;
        } else {
            self.soc
                .dram
                .read(PhysicalAddress(b.addr), &mut cl.spm.data_mut()[span])?;
        }
        tr.done += b.bytes;
        if tr.done == tr.bytes {
            let tr = cl.channels[chn].queue.pop_front().expect("front exists");
            if let Some(page) = cl.channels[chn].page.take() {
                self.page_resp(b.cluster, b.channel, tr.is_put, page)?;
            }
            let complete = self.now + self.soc.dram.base_latency();
            self.at(
                complete,
                Action::DmaDone {
                    c: b.cluster,
                    p: tr.pe,
                    tag: tr.tag,
                },
            )?;
        }
        self.dma_step(b.cluster, b.channel)?;
        self.grant_next(server)
    }
}
