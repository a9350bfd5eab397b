// SPDX-License-Identifier: Apache-2.0

//! Benchmark generators: host data, offload descriptors and per-PE programs
//! for matrix multiplication, memory copy, PageRank and random forest
//! classification.

mod forest;
mod matmul;
mod memcopy;
mod pagerank;

use std::fmt;
use std::str::FromStr;

pub use forest::{forest_paths, ForestSpec};
pub use matmul::{matmul_inputs, reference_matmul, MatmulSpec};
pub use memcopy::{memcopy_input, MemcopySpec};
pub use pagerank::LdsGraphSpec;

use crate::cluster::{ExecOptions, Kernel, Soc};
use crate::config::SimConfig;
use crate::offload::{offload, Host, Mode, OffloadDescriptor, RunReport};
use crate::trace::{TraceFile, TraceUnit};
use crate::SimError;

/// Builds the kernel once argument addresses are known.
pub type KernelBuilder = Box<dyn FnOnce(&[u32]) -> Result<Kernel, SimError>>;

pub struct Prepared {
    pub desc: OffloadDescriptor,
    pub build: KernelBuilder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkKind {
    Matmul,
    Memcopy,
    Pagerank,
    Forest,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 4] = [
        BenchmarkKind::Matmul,
        BenchmarkKind::Memcopy,
        BenchmarkKind::Pagerank,
        BenchmarkKind::Forest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkKind::Matmul => "matmul",
            BenchmarkKind::Memcopy => "memcopy",
            BenchmarkKind::Pagerank => "pagerank",
            BenchmarkKind::Forest => "forest",
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown benchmark `{s}` (expected matmul, memcopy, pagerank or forest)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BenchSpec {
    Matmul(MatmulSpec),
    Memcopy(MemcopySpec),
    Pagerank(LdsGraphSpec),
    Forest(ForestSpec),
}

impl BenchSpec {
    /// Desk-scale defaults.
    pub fn default_for(kind: BenchmarkKind) -> Self {
        match kind {
            BenchmarkKind::Matmul => BenchSpec::Matmul(MatmulSpec::default()),
            BenchmarkKind::Memcopy => BenchSpec::Memcopy(MemcopySpec::default()),
            BenchmarkKind::Pagerank => BenchSpec::Pagerank(LdsGraphSpec::default()),
            BenchmarkKind::Forest => BenchSpec::Forest(ForestSpec::default()),
        }
    }

    pub fn kind(&self) -> BenchmarkKind {
        match self {
            BenchSpec::Matmul(_) => BenchmarkKind::Matmul,
            BenchSpec::Memcopy(_) => BenchmarkKind::Memcopy,
            BenchSpec::Pagerank(_) => BenchmarkKind::Pagerank,
            BenchSpec::Forest(_) => BenchmarkKind::Forest,
        }
    }

    pub fn prepare(
        &self,
        cfg: &SimConfig,
        soc: &mut Soc,
        host: &mut Host,
        mode: Mode,
        seed: u64,
    ) -> Result<Prepared, SimError> {
        match self {
            BenchSpec::Matmul(s) => s.prepare(cfg, soc, host, mode, seed),
            BenchSpec::Memcopy(s) => s.prepare(cfg, soc, host, mode, seed),
            BenchSpec::Pagerank(s) => s.prepare(cfg, soc, host, mode, seed),
            BenchSpec::Forest(s) => s.prepare(cfg, soc, host, mode, seed),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchRun {
    pub report: RunReport,
    /// Concatenated host-side contents of every outbound argument.
    pub output: Vec<u8>,
    pub trace: TraceFile,
}

/// Generate, offload and run one benchmark on a fresh system.
pub fn run_benchmark(
    cfg: &SimConfig,
    spec: &BenchSpec,
    mode: Mode,
    seed: u64,
    trace: Option<TraceUnit>,
) -> Result<BenchRun, SimError> {
    let mut soc = Soc::new(cfg.clone(), seed);
    if let Some(t) = trace {
        soc.trace = t;
    }
    let mut host = Host::new();
    let prepared = spec.prepare(cfg, &mut soc, &mut host, mode, seed)?;
    let report = offload(
        &mut soc,
        &mut host,
        &prepared.desc,
        prepared.build,
        ExecOptions::default(),
    )?;
    let mut output = Vec::new();
    for a in prepared.desc.args.iter().filter(|a| a.direction.outbound()) {
        let mut buf = vec![0u8; a.bytes as usize];
        soc.memory().read(a.va, &mut buf)?;
        output.extend_from_slice(&buf);
    }
    Ok(BenchRun {
        report,
        output,
        trace: soc.take_trace(),
    })
}

pub(crate) fn words(bytes: &[u8]) -> Vec<u32> {
    bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

pub(crate) fn to_bytes(words: &[u32]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_le_bytes()).collect()
}

/// Split `n` items into `parts` contiguous, nearly equal ranges.
pub(crate) fn chunk(n: usize, parts: usize, i: usize) -> std::ops::Range<usize> {
    (i * n / parts)..((i + 1) * n / parts)
}
