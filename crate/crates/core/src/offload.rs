// SPDX-License-Identifier: Apache-2.0

//! Host-side offload runtime.
//!
//! Copy-based arguments are marshalled into one physically contiguous section
//! (pointers inside linked layouts are rewritten to section addresses) and the
//! RAB gets a range window over that section, so kernels never miss on them.
//! Shared-virtual-memory arguments are passed as host virtual addresses and
//! translated on demand.

use std::fmt;
use std::str::FromStr;

use crate::cluster::{execute, ExecOptions, ExecReport, Kernel, Soc};
use crate::engine::Cycle;
use crate::memory::{
    host_copy, PageFlags, PhysAllocator, DRAM_BASE, DRAM_SIZE, PAGE_SHIFT, PAGE_SIZE,
    PAGE_TABLE_SIZE, PMCA_APERTURE_BASE, PMCA_APERTURE_SIZE,
};
use crate::rab::{RabStats, RangeEntry};
use crate::SimError;

/// First virtual address handed out to host buffers.
pub const HOST_VA_BASE: u32 = 0x4000_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Copy,
    Svm,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Copy => "copy",
            Mode::Svm => "svm",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "copy" => Ok(Mode::Copy),
            "svm" => Ok(Mode::Svm),
            _ => Err(format!("unknown mode `{s}` (expected copy or svm)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    To,
    From,
    ToFrom,
}

impl Direction {
    pub fn inbound(self) -> bool {
        matches!(self, Direction::To | Direction::ToFrom)
    }

    pub fn outbound(self) -> bool {
        matches!(self, Direction::From | Direction::ToFrom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Layout {
    Flat,
    /// `nodes` records of `node_bytes` each; the u32 words at
    /// `pointer_offsets` inside every record hold virtual addresses (0 = null).
    Linked {
        nodes: u32,
        node_bytes: u32,
        pointer_offsets: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataArg {
    pub name: String,
    /// Host virtual address of the data.
    pub va: u32,
    pub bytes: u32,
    pub direction: Direction,
    pub mode: Mode,
    pub layout: Layout,
}

impl DataArg {
    pub fn flat(name: &str, va: u32, bytes: u32, direction: Direction, mode: Mode) -> Self {
        Self {
            name: name.to_string(),
            va,
            bytes,
            direction,
            mode,
            layout: Layout::Flat,
        }
    }

    pub fn lds_nodes(&self) -> u64 {
        match self.layout {
            Layout::Flat => 0,
            Layout::Linked { nodes, .. } => nodes as u64,
        }
    }

    fn validate(&self) -> Result<(), String> {
        if let Layout::Linked {
            nodes,
            node_bytes,
            ref pointer_offsets,
        } = self.layout
        {
            if nodes == 0 {
                return Err(format!("{}: linked layout needs at least one node", self.name));
            }
            if nodes as u64 * node_bytes as u64 > self.bytes as u64 {
                return Err(format!("{}: {nodes} nodes of {node_bytes} bytes exceed {} bytes", self.name, self.bytes));
            }
            if let Some(o) = pointer_offsets.iter().find(|&&o| o + 4 > node_bytes) {
                return Err(format!("{}: pointer offset {o} outside a {node_bytes}-byte node", self.name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffloadDescriptor {
    pub kernel: String,
    pub args: Vec<DataArg>,
}

impl OffloadDescriptor {
    /// The common mode of all arguments, if there is one.
    pub fn mode(&self) -> Option<Mode> {
        let first = self.args.first()?.mode;
        self.args.iter().all(|a| a.mode == first).then_some(first)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub arg: usize,
    pub start: u64,
    pub end: u64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "arg {} [{:#x}, {:#x}) overlaps the PMCA address map [{:#x}, {:#x})",
            self.arg,
            self.start,
            self.end,
            PMCA_APERTURE_BASE,
            PMCA_APERTURE_BASE as u64 + PMCA_APERTURE_SIZE as u64
        )
    }
}

/// Check `(va, bytes)` ranges against the PMCA's memory-mapped aperture.
/// Such addresses would be routed to the accelerator rather than to SVM.
pub fn reserve_va_overlap(ranges: &[(u32, u32)]) -> Vec<Violation> {
    let lo = PMCA_APERTURE_BASE as u64;
    let hi = lo + PMCA_APERTURE_SIZE as u64;
    ranges
        .iter()
        .enumerate()
        .filter_map(|(arg, &(va, bytes))| {
            let (start, end) = (va as u64, va as u64 + bytes.max(1) as u64);
            (start < hi && end > lo).then_some(Violation { arg, start, end })
        })
        .collect()
}

/// Host process memory: page-granular virtual buffers backed by DRAM pages,
/// plus physically contiguous sections for copy-based offload.
#[derive(Debug, Clone)]
pub struct Host {
    phys: PhysAllocator,
    next_va: u32,
}

impl Default for Host {
    fn default() -> Self {
        Self::new()
    }
}

impl Host {
    pub fn new() -> Self {
        Self {
            phys: PhysAllocator::new(DRAM_BASE + PAGE_TABLE_SIZE, DRAM_BASE + DRAM_SIZE),
            next_va: HOST_VA_BASE,
        }
    }

    fn pages(bytes: u32) -> u32 {
        bytes.div_ceil(PAGE_SIZE).max(1)
    }

    /// Allocate and map a zeroed buffer; returns its virtual address.
    pub fn alloc(&mut self, soc: &mut Soc, bytes: u32) -> Result<u32, SimError> {
        let va = self.next_va;
        self.map_at(soc, va, bytes)?;
        self.next_va = va + Self::pages(bytes) * PAGE_SIZE;
        Ok(va)
    }

    /// Map a buffer at a caller-chosen virtual address.
    pub fn map_at(&mut self, soc: &mut Soc, va: u32, bytes: u32) -> Result<(), SimError> {
        let n = Self::pages(bytes);
        let first = self
            .phys
            .alloc_pages(n)
            .ok_or_else(|| SimError::Offload(format!("out of DRAM for {bytes} bytes")))?;
        for i in 0..n {
            soc.pt.map((va >> PAGE_SHIFT) + i, first + i, PageFlags::RW);
        }
        Ok(())
    }

    /// Physically contiguous, page-aligned section; returns its base address.
    pub fn alloc_contiguous(&mut self, bytes: u32) -> Result<u32, SimError> {
        self.phys
            .alloc_pages(Self::pages(bytes))
            .map(|p| p << PAGE_SHIFT)
            .ok_or_else(|| SimError::Offload(format!("out of DRAM for a {bytes}-byte section")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub kernel: String,
    pub mode: Option<Mode>,
    /// Host cycles spent before and after the kernel.
    pub offload_cycles: Cycle,
    /// PMCA cycles from launch to the last PE finishing.
    pub kernel_cycles: Cycle,
    pub total_cycles: Cycle,
    pub rab: RabStats,
    pub misses_handled: u64,
    pub copy_in_bytes: u64,
    pub copy_out_bytes: u64,
    pub exec: ExecReport,
}

/// Map host pointer values inside copied arguments to section addresses.
struct Relocation {
    /// (host va, section address, bytes) per copied argument.
    spans: Vec<(u32, u32, u32)>,
}

impl Relocation {
    fn forward(&self, p: u32) -> u32 {
        self.spans
            .iter()
            .find(|&&(h, _, n)| p >= h && p - h < n)
            .map_or(p, |&(h, s, _)| s + (p - h))
    }

    fn backward(&self, p: u32) -> u32 {
        self.spans
            .iter()
            .find(|&&(_, s, n)| p >= s && p - s < n)
            .map_or(p, |&(h, s, _)| h + (p - s))
    }
}

fn rewrite(data: &mut [u8], layout: &Layout, f: impl Fn(u32) -> u32) {
    if let Layout::Linked {
        nodes,
        node_bytes,
        pointer_offsets,
    } = layout
    {
        for n in 0..*nodes as usize {
            for &o in pointer_offsets {
                let at = n * *node_bytes as usize + o as usize;
                let w = u32::from_le_bytes(data[at..at + 4].try_into().unwrap());
                if w != 0 {
                    data[at..at + 4].copy_from_slice(&f(w).to_le_bytes());
                }
            }
        }
    }
}

/// Run one offload: marshal arguments, build the kernel against the
/// device-visible argument addresses, execute, and copy results back.
pub fn offload<F>(
    soc: &mut Soc,
    host: &mut Host,
    desc: &OffloadDescriptor,
    build: F,
    opts: ExecOptions,
) -> Result<RunReport, SimError>
where
    F: FnOnce(&[u32]) -> Result<Kernel, SimError>,
{
    for a in &desc.args {
        a.validate().map_err(SimError::Offload)?;
    }
    let ranges: Vec<(u32, u32)> = desc.args.iter().map(|a| (a.va, a.bytes)).collect();
    let violations = reserve_va_overlap(&ranges);
    if !violations.is_empty() {
        let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(SimError::Offload(msg.join("; ")));
    }
    let cal = soc.config.calibration.clone();
    let mut offload_cycles = cal.descriptor_cycles;

    let copy_pages: u32 = desc
        .args
        .iter()
        .filter(|a| a.mode == Mode::Copy)
        .map(|a| a.bytes.div_ceil(PAGE_SIZE))
        .sum();
    let section = if copy_pages > 0 {
        Some(host.alloc_contiguous(copy_pages * PAGE_SIZE)?)
    } else {
        None
    };
    let mut addrs = Vec::with_capacity(desc.args.len());
    let mut spans = Vec::new();
    let mut next = section.unwrap_or(0);
    for a in &desc.args {
        match a.mode {
            Mode::Svm => addrs.push(a.va),
            Mode::Copy => {
                addrs.push(next);
                spans.push((a.va, next, a.bytes));
                next += a.bytes.div_ceil(PAGE_SIZE) * PAGE_SIZE;
            }
        }
    }
    let reloc = Relocation { spans };

    let (mut in_bytes, mut in_nodes) = (0u64, 0u64);
    for (a, &dev) in desc.args.iter().zip(&addrs) {
        if a.mode != Mode::Copy || !a.direction.inbound() || a.bytes == 0 {
            continue;
        }
        let mut buf = vec![0u8; a.bytes as usize];
        let mem = soc.memory();
        mem.read(a.va, &mut buf)?;
        rewrite(&mut buf, &a.layout, |p| reloc.forward(p));
        soc.dram.write(crate::memory::PhysicalAddress(dev), &buf)?;
        in_bytes += a.bytes as u64;
        in_nodes += a.lds_nodes();
    }
    if let Some(base) = section {
        offload_cycles += host_copy(&cal, in_bytes, in_nodes);
        soc.rab.install_range(RangeEntry {
            first_vpn: base >> PAGE_SHIFT,
            pages: copy_pages,
            first_ppn: base >> PAGE_SHIFT,
            read: true,
            write: true,
        });
    }

    let kernel = build(&addrs)?;
    let exec = execute(soc, &kernel, opts)?;

    let mut out_bytes = 0u64;
    for (a, &dev) in desc.args.iter().zip(&addrs) {
        if a.mode != Mode::Copy || !a.direction.outbound() || a.bytes == 0 {
            continue;
        }
        let mut buf = vec![0u8; a.bytes as usize];
        soc.dram.read(crate::memory::PhysicalAddress(dev), &mut buf)?;
        rewrite(&mut buf, &a.layout, |p| reloc.backward(p));
        soc.memory().write(a.va, &buf)?;
        out_bytes += a.bytes as u64;
    }
    if section.is_some() {
        offload_cycles += host_copy(&cal, out_bytes, 0);
    }
    let kernel_cycles = exec.kernel_cycles();
    Ok(RunReport {
        kernel: desc.kernel.clone(),
        mode: desc.mode(),
        offload_cycles,
        kernel_cycles,
        total_cycles: offload_cycles + kernel_cycles,
        rab: exec.rab,
        misses_handled: exec.misses_handled,
        copy_in_bytes: in_bytes,
        copy_out_bytes: out_bytes,
        exec,
    })
}
