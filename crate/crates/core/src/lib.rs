// SPDX-License-Identifier: Apache-2.0

//! Deterministic model of a heterogeneous SoC: a host plus a clustered
//! manycore accelerator sharing virtual memory through a software-managed
//! IOMMU, with clock-gated event tracing and a trace analysis pipeline.

pub mod analysis;
pub mod bench;
pub mod cluster;
pub mod config;
pub mod engine;
pub mod interconnect;
pub mod memory;
pub mod offload;
pub mod rab;
pub mod trace;
pub mod vmm;

use thiserror::Error;

use crate::memory::{MemoryError, VirtualAddress};
use crate::rab::{MasterId, RabError};

/// Errors raised while simulating.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("page fault: {va} accessed by {master} is not mapped")]
    PageFault { va: VirtualAddress, master: MasterId },
    #[error("permission fault: {master} may not {access} {va}")]
    PermissionFault {
        va: VirtualAddress,
        master: MasterId,
        access: &'static str,
    },
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Rab(#[from] RabError),
    #[error(transparent)]
    Engine(#[from] engine::EngineError),
    #[error("malformed program: {0}")]
    Program(String),
    #[error("deadlock: {0}")]
    Deadlock(String),
    #[error("offload rejected: {0}")]
    Offload(String),
}
