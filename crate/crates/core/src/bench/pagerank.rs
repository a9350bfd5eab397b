// SPDX-License-Identifier: Apache-2.0

//! PageRank over a linked graph of fixed-size node records.
//!
//! A node record holds its id, its out-degree and one pointer per out-edge.
//! Every node has a ring edge to its successor (so the graph is connected)
//! plus edges to random nodes within a locality window. Ranks are u32 fixed
//! point. Nodes are interleaved over all PEs; after every iteration a global
//! barrier lets PE 0 of cluster 0 apply the update by walking the pointers.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{to_bytes, Prepared};
use crate::cluster::{CallCtx, Kernel, KernelProgram, Op, Scope, Soc};
use crate::config::SimConfig;
use crate::offload::{DataArg, Direction, Host, Layout, Mode, OffloadDescriptor};
use crate::SimError;

/// Rank of every node before the first iteration.
pub const RANK_ONE: u32 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdsGraphSpec {
    pub nodes: u32,
    pub edges: u32,
    pub node_bytes: u32,
    pub iterations: u32,
    /// Random edges stay within this many nodes of their source.
    pub window: u32,
    pub cycles_per_edge: u64,
}

impl Default for LdsGraphSpec {
    fn default() -> Self {
        Self {
            nodes: 4096,
            edges: 4,
            node_bytes: 64,
            iterations: 26,
            window: 64,
            cycles_per_edge: 32,
        }
    }
}

impl LdsGraphSpec {
    /// Out-neighbours of every node for a seed.
    pub fn graph(&self, seed: u64) -> Vec<Vec<u32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7072_616e);
        let n = self.nodes;
        (0..n)
            .map(|u| {
                if n == 1 {
                    return Vec::new();
                }
                let mut out = vec![(u + 1) % n];
                let w = self.window.clamp(1, n - 1) as i64;
                for _ in 1..self.edges {
                    let mut d = 0;
                    while d == 0 {
                        d = rng.gen_range(-w..=w);
                    }
                    out.push((u as i64 + d).rem_euclid(n as i64) as u32);
                }
                out
            })
            .collect()
    }

    pub(crate) fn prepare(
        &self,
        cfg: &SimConfig,
        soc: &mut Soc,
        host: &mut Host,
        mode: Mode,
        seed: u64,
    ) -> Result<Prepared, SimError> {
        let (n, nb) = (self.nodes, self.node_bytes);
        if n == 0 || nb < 8 + 4 * self.edges || nb % 4 != 0 {
            return Err(SimError::Program(format!(
                "pagerank: {n} nodes of {nb} bytes cannot hold {} edges",
                self.edges
            )));
        }
        let graph = self.graph(seed);
        let nodes_va = host.alloc(soc, n * nb)?;
        let ranks_va = host.alloc(soc, 4 * n)?;
        let mut image = vec![0u8; (n * nb) as usize];
        for (u, out) in graph.iter().enumerate() {
            let rec = &mut image[u * nb as usize..(u + 1) * nb as usize];
            rec[0..4].copy_from_slice(&(u as u32).to_le_bytes());
            rec[4..8].copy_from_slice(&(out.len() as u32).to_le_bytes());
            for (k, &v) in out.iter().enumerate() {
                let at = 8 + 4 * k;
                rec[at..at + 4].copy_from_slice(&(nodes_va + v * nb).to_le_bytes());
            }
        }
        let mut mem = soc.memory();
        mem.write(nodes_va, &image)?;
        mem.write(ranks_va, &to_bytes(&vec![RANK_ONE; n as usize]))?;

        let desc = OffloadDescriptor {
            kernel: "pagerank".into(),
            args: vec![
                DataArg {
                    name: "nodes".into(),
                    va: nodes_va,
                    bytes: n * nb,
                    direction: Direction::To,
                    mode,
                    layout: Layout::Linked {
                        nodes: n,
                        node_bytes: nb,
                        pointer_offsets: (0..self.edges).map(|k| 8 + 4 * k).collect(),
                    },
                },
                DataArg::flat("ranks", ranks_va, 4 * n, Direction::ToFrom, mode),
            ],
        };
        let spec = self.clone();
        let (clusters, pes) = (cfg.platform.n_clusters, cfg.platform.pes_per_cluster);
        Ok(Prepared {
            desc,
            build: Box::new(move |addrs: &[u32]| Ok(build(&spec, &graph, clusters, pes, addrs[0], addrs[1]))),
        })
    }
}

/// One synchronous update: every node pushes rank/degree along its pointers.
fn update(ctx: &mut CallCtx<'_>, n: u32, nb: u32, nodes: u32, ranks: u32) -> Result<(), SimError> {
    let mut old = vec![0u8; 4 * n as usize];
    ctx.mem.read(ranks, &mut old)?;
    let old = super::words(&old);
    let mut acc = vec![0u64; n as usize];
    for u in 0..n {
        let rec = nodes + u * nb;
        let deg = ctx.mem.read_u32(rec + 4)?;
        if deg == 0 {
            continue;
        }
        let share = old[u as usize] as u64 / deg as u64;
        for k in 0..deg {
            let p = ctx.mem.read_u32(rec + 8 + 4 * k)?;
            let v = ctx.mem.read_u32(p)?;
            acc[v as usize] += share;
        }
    }
    let base = RANK_ONE as u64 * 15 / 100;
    let new: Vec<u32> = acc.iter().map(|&a| (base + a * 85 / 100) as u32).collect();
    ctx.mem.write(ranks, &to_bytes(&new))
}

fn build(spec: &LdsGraphSpec, graph: &[Vec<u32>], clusters: u32, pes: u32, nodes: u32, ranks: u32) -> Kernel {
    let (n, nb) = (spec.nodes, spec.node_bytes);
    let total = (clusters * pes) as usize;
    let mut kernel = Kernel::default();
    let call = kernel.add_call(Arc::new(move |ctx: &mut CallCtx<'_>| update(ctx, n, nb, nodes, ranks)));

    let mut one = vec![KernelProgram::new(); total];
    for (u, out) in graph.iter().enumerate() {
        let p = &mut one[u % total];
        p.push(Op::LoadVa(nodes + u as u32 * nb));
        p.push(Op::LoadVa(ranks + 4 * u as u32));
        for &v in out {
            p.push(Op::LoadVa(nodes + v * nb));
            p.compute(spec.cycles_per_edge);
        }
        p.push(Op::StoreVa(ranks + 4 * u as u32));
    }
    let mut progs: Vec<KernelProgram> = vec![KernelProgram::new(); total];
    for _ in 0..spec.iterations {
        for (g, p) in progs.iter_mut().enumerate() {
            for op in &one[g].ops {
                p.push(*op);
            }
            p.barrier(Scope::Global);
            if g == 0 {
                p.push(Op::Call(call));
            }
            p.barrier(Scope::Global);
        }
    }
    kernel.programs = (0..clusters as usize)
        .map(|c| {
            progs[c * pes as usize..(c + 1) * pes as usize]
                .iter()
                .cloned()
                .map(KernelProgram::end)
                .collect()
        })
        .collect();
    kernel
}
