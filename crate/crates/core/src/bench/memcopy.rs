// SPDX-License-Identifier: Apache-2.0

//! Copy a large array into the accelerator and back out.
//!
//! The array is cut into chunks spread contiguously over the clusters; PE 0
//! of each cluster streams its chunks through two SPM buffers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{chunk, Prepared};
use crate::cluster::{Addr, Kernel, KernelProgram, Soc, Tag};
use crate::config::SimConfig;
use crate::offload::{DataArg, Direction, Host, Mode, OffloadDescriptor};
use crate::SimError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemcopySpec {
    pub bytes: u32,
    /// Bytes moved per DMA transfer.
    pub chunk_bytes: u32,
}

impl Default for MemcopySpec {
    fn default() -> Self {
        Self {
            bytes: 1 << 20,
            chunk_bytes: 8 << 10,
        }
    }
}

/// Source contents for a seed.
pub fn memcopy_input(spec: &MemcopySpec, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d63_7079);
    let mut v = vec![0u8; spec.bytes as usize];
    rng.fill_bytes(&mut v);
    v
}

impl MemcopySpec {
    pub(crate) fn prepare(
        &self,
        cfg: &SimConfig,
        soc: &mut Soc,
        host: &mut Host,
        mode: Mode,
        seed: u64,
    ) -> Result<Prepared, SimError> {
        let cb = self.chunk_bytes;
        if cb == 0 || 2 * cb > cfg.platform.l1_spm_bytes() {
            return Err(SimError::Program(format!(
                "memcopy: two {cb}-byte buffers do not fit in L1 SPM"
            )));
        }
        let src = host.alloc(soc, self.bytes)?;
        let dst = host.alloc(soc, self.bytes)?;
        soc.memory().write(src, &memcopy_input(self, seed))?;
        let desc = OffloadDescriptor {
            kernel: "memcopy".into(),
            args: vec![
                DataArg::flat("src", src, self.bytes, Direction::To, mode),
                DataArg::flat("dst", dst, self.bytes, Direction::From, mode),
            ],
        };
        let (bytes, clusters, pes) = (self.bytes, cfg.platform.n_clusters, cfg.platform.pes_per_cluster);
        Ok(Prepared {
            desc,
            build: Box::new(move |addrs: &[u32]| Ok(build(bytes, cb, clusters, pes, addrs[0], addrs[1]))),
        })
    }
}

fn build(bytes: u32, cb: u32, clusters: u32, pes: u32, src: u32, dst: u32) -> Kernel {
    let chunks = bytes.div_ceil(cb) as usize;
    let len = |i: usize| (bytes - i as u32 * cb).min(cb);
    let mut kernel = Kernel::default();
    for cl in 0..clusters as usize {
        let mut progs = vec![KernelProgram::empty(); pes as usize];
        let mine: Vec<usize> = chunk(chunks, clusters as usize, cl).collect();
        if !mine.is_empty() {
            let mut p = KernelProgram::new();
            let buf = |k: usize| (k % 2) as u32 * cb;
            let mut get: Tag = p.dma_get(Addr::Va(src + mine[0] as u32 * cb), buf(0), len(mine[0]), 0);
            let mut put: [Option<Tag>; 2] = [None; 2];
            for (k, &i) in mine.iter().enumerate() {
                p.wait(get);
                if let Some(&next) = mine.get(k + 1) {
                    if let Some(t) = put[(k + 1) % 2].take() {
                        p.wait(t);
                    }
                    get = p.dma_get(Addr::Va(src + next as u32 * cb), buf(k + 1), len(next), 0);
                }
                put[k % 2] = Some(p.dma_put(buf(k), Addr::Va(dst + i as u32 * cb), len(i), 0));
            }
            for t in put.into_iter().flatten() {
                p.wait(t);
            }
            progs[0] = p.end();
        }
        kernel.programs.push(progs);
    }
    kernel
}
