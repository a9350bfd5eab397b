// SPDX-License-Identifier: Apache-2.0

//! Single runs and parameter sweeps.

use std::str::FromStr;

use rayon::prelude::*;

use hero_sim::bench::{run_benchmark, BenchSpec, BenchmarkKind};
use hero_sim::config::{ConfigError, Interconnect, SimConfig};
use hero_sim::offload::Mode;
use hero_sim::trace::{TraceFile, TraceUnit};
use hero_sim::SimError;

use crate::report::{apply_baseline, ResultRow};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Benchmark size overrides; `None` keeps the benchmark default.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BenchParams {
    pub matmul_n: Option<u32>,
    pub cycles_per_mac: Option<u64>,
    pub memcopy_bytes: Option<u32>,
    pub graph_nodes: Option<u32>,
    pub graph_iterations: Option<u32>,
    pub forest_trees: Option<u32>,
    pub forest_depth: Option<u32>,
}

impl BenchParams {
    pub fn spec(&self, kind: BenchmarkKind) -> BenchSpec {
        let mut spec = BenchSpec::default_for(kind);
        match &mut spec {
            BenchSpec::Matmul(s) => {
                s.n = self.matmul_n.unwrap_or(s.n);
                s.cycles_per_mac = self.cycles_per_mac.unwrap_or(s.cycles_per_mac);
            }
            BenchSpec::Memcopy(s) => s.bytes = self.memcopy_bytes.unwrap_or(s.bytes),
            BenchSpec::Pagerank(s) => {
                s.nodes = self.graph_nodes.unwrap_or(s.nodes);
                s.iterations = self.graph_iterations.unwrap_or(s.iterations);
            }
            BenchSpec::Forest(s) => {
                s.trees = self.forest_trees.unwrap_or(s.trees);
                s.depth = self.forest_depth.unwrap_or(s.depth);
            }
        }
        spec
    }
}

/// One experiment: everything a row depends on besides the base config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Point {
    pub benchmark: BenchmarkKind,
    pub mode: Mode,
    /// Overrides the configured cluster count.
    pub clusters: Option<u32>,
    pub interconnect: Option<Interconnect>,
}

impl Point {
    pub fn config(&self, base: &SimConfig) -> Result<SimConfig, ConfigError> {
        let mut p = base.platform.clone();
        if let Some(n) = self.clusters {
            p.n_clusters = n;
        }
        if let Some(i) = self.interconnect {
            p.interconnect = i;
        }
        SimConfig::new(p, base.calibration.clone())
    }
}

pub struct Outcome {
    pub row: ResultRow,
    pub trace: TraceFile,
}

pub fn run_point(
    base: &SimConfig,
    point: &Point,
    params: &BenchParams,
    seed: u64,
    trace_depth: Option<usize>,
) -> Result<Outcome, RunError> {
    let cfg = point.config(base)?;
    let run = run_benchmark(
        &cfg,
        &params.spec(point.benchmark),
        point.mode,
        seed,
        trace_depth.map(TraceUnit::everywhere),
    )?;
    Ok(Outcome {
        row: ResultRow::new(cfg.hash(), point.benchmark, point.mode, cfg.platform.n_clusters, &run.report),
        trace: run.trace,
    })
}

/// One `--axis name=v1,v2,...` flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SweepAxis {
    Clusters(Vec<u32>),
    Mode(Vec<Mode>),
    Benchmark(Vec<BenchmarkKind>),
    Interconnect(Vec<Interconnect>),
}

impl SweepAxis {
    fn len(&self) -> usize {
        match self {
            SweepAxis::Clusters(v) => v.len(),
            SweepAxis::Mode(v) => v.len(),
            SweepAxis::Benchmark(v) => v.len(),
            SweepAxis::Interconnect(v) => v.len(),
        }
    }

    fn apply(&self, i: usize, p: &mut Point) {
        match self {
            SweepAxis::Clusters(v) => p.clusters = Some(v[i]),
            SweepAxis::Mode(v) => p.mode = v[i],
            SweepAxis::Benchmark(v) => p.benchmark = v[i],
            SweepAxis::Interconnect(v) => p.interconnect = Some(v[i]),
        }
    }
}

fn values<T>(name: &str, list: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, String> {
    list.split(',')
        .map(str::trim)
        .map(|v| f(v).ok_or_else(|| format!("invalid value `{v}` for axis `{name}`")))
        .collect()
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, list) = s
            .split_once('=')
            .ok_or_else(|| format!("expected name=v1,v2,... but got `{s}`"))?;
        let name = name.trim();
        let axis = match name {
            "clusters" => SweepAxis::Clusters(values(name, list, |v| v.parse().ok())?),
            "mode" => SweepAxis::Mode(values(name, list, |v| v.parse().ok())?),
            "benchmark" => SweepAxis::Benchmark(values(name, list, |v| v.parse().ok())?),
            "interconnect" => SweepAxis::Interconnect(values(name, list, |v| v.parse().ok())?),
            _ => {
                return Err(format!(
                    "unknown axis `{name}` (expected clusters, mode, benchmark or interconnect)"
                ))
            }
        };
        Ok(axis)
    }
}

/// All points of the product of `axes`, first axis outermost.
pub fn points(start: Point, axes: &[SweepAxis]) -> Vec<Point> {
    let mut pts = vec![start];
    for axis in axes {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                (0..axis.len()).map(move |i| {
                    let mut q = p;
                    axis.apply(i, &mut q);
                    q
                })
            })
            .collect();
    }
    pts
}

/// Runs every point in parallel; rows come back in axis order with the
/// speedup relative to the first point.
pub fn sweep(
    base: &SimConfig,
    start: Point,
    axes: &[SweepAxis],
    params: &BenchParams,
    seed: u64,
) -> Result<Vec<ResultRow>, RunError> {
    let pts = points(start, axes);
    // validate every configuration before spending time on any run
    for p in &pts {
        p.config(base)?;
    }
    let mut rows = pts
        .par_iter()
        .map(|p| run_point(base, p, params, seed, None).map(|o| o.row))
        .collect::<Result<Vec<_>, _>>()?;
    apply_baseline(&mut rows);
    Ok(rows)
}
