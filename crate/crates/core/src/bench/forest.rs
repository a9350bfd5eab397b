// SPDX-License-Identifier: Apache-2.0

//! Random forest classification.
//!
//! Each tree is a complete binary tree of depth `depth` stored in BFS order;
//! a node record is (feature, threshold, left, right, class) with child
//! pointers as virtual addresses. Every (input, tree) pair walks one
//! root-to-leaf path, so only a sliver of the forest is ever touched.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{to_bytes, Prepared};
use crate::cluster::{CallCtx, Kernel, KernelProgram, Op, Soc};
use crate::config::SimConfig;
use crate::offload::{DataArg, Direction, Host, Layout, Mode, OffloadDescriptor};
use crate::SimError;

const FEATURE_RANGE: u32 = 1000;
const CLASSES: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForestSpec {
    pub trees: u32,
    pub depth: u32,
    pub node_bytes: u32,
    pub inputs: u32,
    pub features: u32,
    pub cycles_per_level: u64,
}

impl Default for ForestSpec {
    fn default() -> Self {
        Self {
            trees: 4,
            depth: 16,
            node_bytes: 32,
            inputs: 8,
            features: 16,
            cycles_per_level: 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    feature: u32,
    threshold: u32,
    class: u32,
}

struct Forest {
    /// `trees * per_tree` nodes, tree after tree, BFS order inside a tree.
    nodes: Vec<Node>,
    inputs: Vec<u32>,
}

impl ForestSpec {
    pub fn nodes_per_tree(&self) -> u32 {
        (1u32 << self.depth) - 1
    }

    fn generate(&self, seed: u64) -> Forest {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x666f_7273);
        let total = (self.trees * self.nodes_per_tree()) as usize;
        let nodes = (0..total)
            .map(|_| Node {
                feature: rng.gen_range(0..self.features),
                threshold: rng.gen_range(0..FEATURE_RANGE),
                class: rng.gen_range(0..CLASSES),
            })
            .collect();
        let inputs = (0..self.inputs * self.features)
            .map(|_| rng.gen_range(0..FEATURE_RANGE))
            .collect();
        Forest { nodes, inputs }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.trees == 0 || self.depth == 0 || self.depth > 24 || self.features == 0 || self.node_bytes < 20 {
            return Err(SimError::Program(format!("forest: invalid spec {self:?}")));
        }
        let bytes = self.trees as u64 * self.nodes_per_tree() as u64 * self.node_bytes as u64;
        if bytes > u32::MAX as u64 / 2 {
            return Err(SimError::Program(format!("forest: {bytes} bytes of trees do not fit")));
        }
        Ok(())
    }

    pub(crate) fn prepare(
        &self,
        cfg: &SimConfig,
        soc: &mut Soc,
        host: &mut Host,
        mode: Mode,
        seed: u64,
    ) -> Result<Prepared, SimError> {
        self.validate()?;
        let forest = self.generate(seed);
        let per_tree = self.nodes_per_tree();
        let nb = self.node_bytes;
        let n_nodes = self.trees * per_tree;
        let trees_va = host.alloc(soc, n_nodes * nb)?;
        let inputs_va = host.alloc(soc, 4 * self.inputs * self.features)?;
        let out_va = host.alloc(soc, 4 * self.inputs * self.trees)?;

        let leaves_from = per_tree / 2;
        let mut image = vec![0u8; (n_nodes * nb) as usize];
        for (i, node) in forest.nodes.iter().enumerate() {
            let (t, k) = (i as u32 / per_tree, i as u32 % per_tree);
            let rec = &mut image[i * nb as usize..(i + 1) * nb as usize];
            let (left, right) = if k < leaves_from {
                let addr = |c: u32| trees_va + (t * per_tree + c) * nb;
                (addr(2 * k + 1), addr(2 * k + 2))
            } else {
                (0, 0)
            };
            for (at, w) in [(0, node.feature), (4, node.threshold), (8, left), (12, right), (16, node.class)] {
                rec[at..at + 4].copy_from_slice(&w.to_le_bytes());
            }
        }
        let mut mem = soc.memory();
        mem.write(trees_va, &image)?;
        mem.write(inputs_va, &to_bytes(&forest.inputs))?;

        let desc = OffloadDescriptor {
            kernel: "forest".into(),
            args: vec![
                DataArg {
                    name: "trees".into(),
                    va: trees_va,
                    bytes: n_nodes * nb,
                    direction: Direction::To,
                    mode,
                    layout: Layout::Linked {
                        nodes: n_nodes,
                        node_bytes: nb,
                        pointer_offsets: vec![8, 12],
                    },
                },
                DataArg::flat("inputs", inputs_va, 4 * self.inputs * self.features, Direction::To, mode),
                DataArg::flat("classes", out_va, 4 * self.inputs * self.trees, Direction::From, mode),
            ],
        };
        let paths = paths_of(self, &forest);
        let spec = self.clone();
        let (clusters, pes) = (cfg.platform.n_clusters, cfg.platform.pes_per_cluster);
        Ok(Prepared {
            desc,
            build: Box::new(move |addrs: &[u32]| {
                Ok(build(&spec, &paths, clusters, pes, addrs[0], addrs[1], addrs[2]))
            }),
        })
    }
}

fn paths_of(spec: &ForestSpec, f: &Forest) -> Vec<Vec<u32>> {
    let per_tree = spec.nodes_per_tree();
    let mut out = Vec::new();
    for m in 0..spec.inputs {
        for t in 0..spec.trees {
            let mut k = 0;
            let mut path = Vec::with_capacity(spec.depth as usize);
            loop {
                let idx = t * per_tree + k;
                path.push(idx);
                if k >= per_tree / 2 {
                    break;
                }
                let node = f.nodes[idx as usize];
                let x = f.inputs[(m * spec.features + node.feature) as usize];
                k = if x < node.threshold { 2 * k + 1 } else { 2 * k + 2 };
            }
            out.push(path);
        }
    }
    out
}

/// Node indices (forest-wide) visited by every (input, tree) pair, indexed
/// `input * trees + tree`.
pub fn forest_paths(spec: &ForestSpec, seed: u64) -> Vec<Vec<u32>> {
    paths_of(spec, &spec.generate(seed))
}

fn classify(ctx: &mut CallCtx<'_>, root: u32, input: u32) -> Result<u32, SimError> {
    let mut p = root;
    loop {
        let feature = ctx.mem.read_u32(p)?;
        let left = ctx.mem.read_u32(p + 8)?;
        if left == 0 {
            return ctx.mem.read_u32(p + 16);
        }
        let threshold = ctx.mem.read_u32(p + 4)?;
        let x = ctx.mem.read_u32(input + 4 * feature)?;
        p = if x < threshold { left } else { ctx.mem.read_u32(p + 12)? };
    }
}

#[allow(clippy::too_many_arguments)]
fn build(
    spec: &ForestSpec,
    paths: &[Vec<u32>],
    clusters: u32,
    pes: u32,
    trees: u32,
    inputs: u32,
    out: u32,
) -> Kernel {
    let total = clusters * pes;
    let (nb, per_tree, nt, nf) = (spec.node_bytes, spec.nodes_per_tree(), spec.trees, spec.features);
    let pairs = paths.len() as u32;
    let mut kernel = Kernel::default();
    let call = kernel.add_call(Arc::new(move |ctx: &mut CallCtx<'_>| {
        let g = ctx.cluster as u32 * pes + ctx.pe as u32;
        for q in (g..pairs).step_by(total as usize) {
            let (m, t) = (q / nt, q % nt);
            let class = classify(ctx, trees + t * per_tree * nb, inputs + 4 * m * nf)?;
            ctx.mem.write_u32(out + 4 * q, class)?;
        }
        Ok(())
    }));

    let mut progs = vec![KernelProgram::new(); total as usize];
    for (q, path) in paths.iter().enumerate() {
        let p = &mut progs[q % total as usize];
        let m = q as u32 / nt;
        for &idx in path {
            p.push(Op::LoadVa(trees + idx * nb));
            p.push(Op::LoadVa(inputs + 4 * m * nf));
            p.compute(spec.cycles_per_level);
        }
        p.push(Op::StoreVa(out + 4 * q as u32));
    }
    for p in progs.iter_mut().filter(|p| !p.ops.is_empty()) {
        p.push(Op::Call(call));
    }
    kernel.programs = progs
        .chunks(pes as usize)
        .map(|c| c.iter().cloned().map(KernelProgram::end).collect())
        .collect();
    kernel
}
