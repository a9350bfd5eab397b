// SPDX-License-Identifier: Apache-2.0

//! `results.csv` rows.
//!
//! Columns, in order:
//!
//! | column              | meaning                                        |
//! |---------------------|------------------------------------------------|
//! | config_hash         | 16 hex digits, digest of the full configuration |
//! | benchmark           | matmul, memcopy, pagerank or forest            |
//! | mode                | copy or svm                                    |
//! | clusters            | clusters of the simulated platform             |
//! | offload_cycles      | host cycles outside the kernel                 |
//! | kernel_cycles       | accelerator cycles from launch to completion   |
//! | total_cycles        | offload_cycles + kernel_cycles                 |
//! | l1_hits             | RAB L1 hits                                    |
//! | l2_hits             | RAB L2 hits                                    |
//! | misses              | RAB misses                                     |
//! | speedup_vs_baseline | baseline total_cycles / total_cycles, 4 digits |

use std::fmt::Write;

use hero_sim::bench::BenchmarkKind;
use hero_sim::offload::{Mode, RunReport};

pub const HEADER: &str = "config_hash,benchmark,mode,clusters,offload_cycles,kernel_cycles,total_cycles,l1_hits,l2_hits,misses,speedup_vs_baseline";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub config_hash: u64,
    pub benchmark: BenchmarkKind,
    pub mode: Mode,
    pub clusters: u32,
    pub offload_cycles: u64,
    pub kernel_cycles: u64,
    pub total_cycles: u64,
    pub l1_hits: u64,
    pub l2_hits: u64,
    pub misses: u64,
    pub speedup_vs_baseline: f64,
}

impl ResultRow {
    pub fn new(config_hash: u64, benchmark: BenchmarkKind, mode: Mode, clusters: u32, r: &RunReport) -> Self {
        Self {
            config_hash,
            benchmark,
            mode,
            clusters,
            offload_cycles: r.offload_cycles,
            kernel_cycles: r.kernel_cycles,
            total_cycles: r.total_cycles,
            l1_hits: r.rab.l1_hits,
            l2_hits: r.rab.l2_hits,
            misses: r.rab.misses,
            speedup_vs_baseline: 1.0,
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{:016x},{},{},{},{},{},{},{},{},{},{:.4}",
            self.config_hash,
            self.benchmark,
            self.mode,
            self.clusters,
            self.offload_cycles,
            self.kernel_cycles,
            self.total_cycles,
            self.l1_hits,
            self.l2_hits,
            self.misses,
            self.speedup_vs_baseline
        )
    }
}

/// Fill the speedup column against the first row.
pub fn apply_baseline(rows: &mut [ResultRow]) {
    let Some(base) = rows.first().map(|r| r.total_cycles as f64) else {
        return;
    };
    for r in rows {
        r.speedup_vs_baseline = if r.total_cycles == 0 {
            0.0
        } else {
            base / r.total_cycles as f64
        };
    }
}

pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut s = String::with_capacity(HEADER.len() + 1 + rows.len() * 96);
    s.push_str(HEADER);
    s.push('\n');
    for r in rows {
        writeln!(s, "{}", r.csv_line()).unwrap();
    }
    s
}
