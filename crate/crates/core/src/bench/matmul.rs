// SPDX-License-Identifier: Apache-2.0

//! Dense u32 matrix multiplication C = A x B.
//!
//! Work is split into (row of C, 16-column panel) units, handed out to the
//! clusters in contiguous chunks. A is stored row-major, B column-major so a
//! panel is one contiguous block, C row-major. PE 0 of each cluster runs a
//! double-buffered DMA loop; all PEs share the compute of a unit between two
//! cluster barriers.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{chunk, to_bytes, words, Prepared};
use crate::cluster::{Addr, CallCtx, Kernel, KernelProgram, Op, Scope, Soc, Tag};
use crate::config::SimConfig;
use crate::offload::{DataArg, Direction, Host, Mode, OffloadDescriptor};
use crate::SimError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatmulSpec {
    pub n: u32,
    /// Columns of C produced per unit.
    pub panel: u32,
    pub cycles_per_mac: u64,
    /// Clusters used; `None` means all of them.
    pub clusters: Option<u32>,
}

impl Default for MatmulSpec {
    fn default() -> Self {
        Self {
            n: 64,
            panel: 16,
            cycles_per_mac: 1,
            clusters: None,
        }
    }
}

/// Inputs for a seed: A and B, both row-major.
pub fn matmul_inputs(spec: &MatmulSpec, seed: u64) -> (Vec<u32>, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61_746d);
    let nn = (spec.n * spec.n) as usize;
    let a = (0..nn).map(|_| rng.gen::<u32>() & 0xffff).collect();
    let b = (0..nn).map(|_| rng.gen::<u32>() & 0xffff).collect();
    (a, b)
}

/// Naive row-major product with wrapping arithmetic.
pub fn reference_matmul(a: &[u32], b: &[u32], n: usize) -> Vec<u32> {
    let mut c = vec![0u32; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0u32;
            for k in 0..n {
                acc = acc.wrapping_add(a[i * n + k].wrapping_mul(b[k * n + j]));
            }
            c[i * n + j] = acc;
        }
    }
    c
}

struct SpmLayout {
    a: [u32; 2],
    b: [u32; 2],
    c: [u32; 2],
    end: u32,
}

impl SpmLayout {
    fn new(n: u32, panel: u32) -> Self {
        let (ra, rb, rc) = (4 * n, 4 * n * panel, 4 * panel);
        let a = [0, ra];
        let b = [2 * ra, 2 * ra + rb];
        let c = [2 * ra + 2 * rb, 2 * ra + 2 * rb + rc];
        Self {
            a,
            b,
            c,
            end: 2 * (ra + rb + rc),
        }
    }
}

impl MatmulSpec {
    pub(crate) fn prepare(
        &self,
        cfg: &SimConfig,
        soc: &mut Soc,
        host: &mut Host,
        mode: Mode,
        seed: u64,
    ) -> Result<Prepared, SimError> {
        let (n, panel) = (self.n, self.panel);
        if n == 0 || panel == 0 || n % panel != 0 {
            return Err(SimError::Program(format!(
                "matmul: n={n} must be a positive multiple of the panel width {panel}"
            )));
        }
        let clusters = self.clusters.unwrap_or(cfg.platform.n_clusters);
        if clusters == 0 || clusters > cfg.platform.n_clusters {
            return Err(SimError::Program(format!(
                "matmul: {clusters} clusters requested, platform has {}",
                cfg.platform.n_clusters
            )));
        }
        let spm = SpmLayout::new(n, panel);
        if spm.end > cfg.platform.l1_spm_bytes() {
            return Err(SimError::Program(format!(
                "matmul: tile of {} bytes does not fit in {} bytes of L1 SPM",
                spm.end,
                cfg.platform.l1_spm_bytes()
            )));
        }

        let (a, b) = matmul_inputs(self, seed);
        let nu = n as usize;
        let mut b_cm = vec![0u32; nu * nu];
        for k in 0..nu {
            for j in 0..nu {
                b_cm[j * nu + k] = b[k * nu + j];
            }
        }
        let bytes = 4 * n * n;
        let va_a = host.alloc(soc, bytes)?;
        let va_b = host.alloc(soc, bytes)?;
        let va_c = host.alloc(soc, bytes)?;
        let mut mem = soc.memory();
        mem.write(va_a, &to_bytes(&a))?;
        mem.write(va_b, &to_bytes(&b_cm))?;

        let desc = OffloadDescriptor {
            kernel: "matmul".into(),
            args: vec![
                DataArg::flat("A", va_a, bytes, Direction::To, mode),
                DataArg::flat("B", va_b, bytes, Direction::To, mode),
                DataArg::flat("C", va_c, bytes, Direction::From, mode),
            ],
        };
        let spec = self.clone();
        let pes = cfg.platform.pes_per_cluster;
        let total = cfg.platform.n_clusters;
        Ok(Prepared {
            desc,
            build: Box::new(move |addrs: &[u32]| {
                Ok(build(&spec, &spm, clusters, total, pes, addrs[0], addrs[1], addrs[2]))
            }),
        })
    }
}

/// DMA tags and the A row held by each of the two buffer slots.
struct Buffers {
    row: [u32; 2],
    a: [Option<Tag>; 2],
    b: [Tag; 2],
    c: [Option<Tag>; 2],
}

impl Buffers {
    fn issue(&mut self, p: &mut KernelProgram, spm: &SpmLayout, (a, b, row): (u32, u32, u32), s: usize, n: u32, panel: u32) {
        self.a[s] = if self.row[s] != row {
            self.row[s] = row;
            Some(p.dma_get(Addr::Va(a), spm.a[s], 4 * n, 0))
        } else {
            None
        };
        self.b[s] = p.dma_get(Addr::Va(b), spm.b[s], 4 * n * panel, 0);
    }
}

#[allow(clippy::too_many_arguments)]
fn build(
    spec: &MatmulSpec,
    spm: &SpmLayout,
    clusters: u32,
    total_clusters: u32,
    pes: u32,
    a: u32,
    b: u32,
    c: u32,
) -> Kernel {
    let (n, panel) = (spec.n, spec.panel);
    let panels = n / panel;
    let units = (n * panels) as usize;
    let share = (n as u64 * panel as u64 * spec.cycles_per_mac).div_ceil(pes as u64);

    let mut kernel = Kernel::default();
    for slot in 0..2 {
        let (oa, ob, oc) = (spm.a[slot] as usize, spm.b[slot] as usize, spm.c[slot] as usize);
        let (nu, pu) = (n as usize, panel as usize);
        kernel.add_call(Arc::new(move |ctx: &mut CallCtx<'_>| {
            let row = words(&ctx.spm[oa..oa + 4 * nu]);
            let cols = words(&ctx.spm[ob..ob + 4 * nu * pu]);
            for j in 0..pu {
                let acc = (0..nu).fold(0u32, |acc, k| {
                    acc.wrapping_add(row[k].wrapping_mul(cols[j * nu + k]))
                });
                let at = oc + 4 * j;
                ctx.spm[at..at + 4].copy_from_slice(&acc.to_le_bytes());
            }
            Ok(())
        }));
    }

    for cl in 0..total_clusters {
        let mut progs = Vec::with_capacity(pes as usize);
        let mine: Vec<(u32, u32)> = if cl < clusters {
            chunk(units, clusters as usize, cl as usize)
                .map(|u| (u as u32 / panels, u as u32 % panels))
                .collect()
        } else {
            Vec::new()
        };
        if mine.is_empty() {
            progs.resize(pes as usize, KernelProgram::empty());
            kernel.programs.push(progs);
            continue;
        }

        let mut p0 = KernelProgram::new();
        let mut bufs = Buffers {
            row: [u32::MAX; 2],
            a: [None; 2],
            b: [0; 2],
            c: [None; 2],
        };
        let src = |(i, jp): (u32, u32)| (a + 4 * n * i, b + 4 * n * panel * jp, i);
        bufs.issue(&mut p0, spm, src(mine[0]), 0, n, panel);
        for (idx, &(i, jp)) in mine.iter().enumerate() {
            let s = idx % 2;
            if let Some(t) = bufs.a[s] {
                p0.wait(t);
            }
            p0.wait(bufs.b[s]);
            if let Some(&next) = mine.get(idx + 1) {
                bufs.issue(&mut p0, spm, src(next), 1 - s, n, panel);
            }
            p0.barrier(Scope::Cluster);
            p0.compute(share);
            if let Some(t) = bufs.c[s].take() {
                p0.wait(t);
            }
            p0.push(Op::Call(s));
            p0.barrier(Scope::Cluster);
            let dst = Addr::Va(c + 4 * (n * i + panel * jp));
            bufs.c[s] = Some(p0.dma_put(spm.c[s], dst, 4 * panel, 0));
        }
        for t in bufs.c.into_iter().flatten() {
            p0.wait(t);
        }
        progs.push(p0.end());

        for _ in 1..pes {
            let mut p = KernelProgram::new();
            for _ in 0..mine.len() {
                p.barrier(Scope::Cluster);
                p.compute(share);
                p.barrier(Scope::Cluster);
            }
            progs.push(p.end());
        }
        kernel.programs.push(progs);
    }
    kernel
}
