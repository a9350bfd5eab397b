// SPDX-License-Identifier: Apache-2.0

//! System-level interconnect between the cluster DMA engines and main memory.
//!
//! A bus is one shared server: grants rotate round-robin over the clusters
//! that have a burst waiting, and within a cluster bursts are served in
//! request order. A NoC gives every cluster its own link server, so clusters
//! never contend with each other.

use std::collections::VecDeque;

use crate::config::{CalibrationConfig, Interconnect};
use crate::engine::Cycle;

/// Largest transfer granted in one arbitration round.
pub const BURST_BYTES: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Burst {
    pub cluster: u16,
    pub channel: u16,
    pub bytes: u32,
    /// Physical address of the first byte.
    pub addr: u32,
    pub is_write: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grant {
    pub server: usize,
    pub burst: Burst,
    pub start: Cycle,
    pub done: Cycle,
}

#[derive(Debug, Clone)]
struct Server {
    /// Pending bursts per cluster (only index 0 is used by NoC links).
    pending: Vec<VecDeque<Burst>>,
    waiting: usize,
    in_flight: Option<Grant>,
    rr: usize,
    busy_cycles: u64,
    bytes: u64,
}

impl Server {
    fn new(clients: usize) -> Self {
        Self {
            pending: vec![VecDeque::new(); clients],
            waiting: 0,
            in_flight: None,
            rr: 0,
            busy_cycles: 0,
            bytes: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SystemInterconnect {
    kind: Interconnect,
    bandwidth: u64,
    servers: Vec<Server>,
}

impl SystemInterconnect {
    pub fn new(kind: Interconnect, clusters: usize, cal: &CalibrationConfig) -> Self {
        let (bandwidth, servers) = match kind {
            Interconnect::Bus => (cal.bus_bandwidth, vec![Server::new(clusters)]),
            Interconnect::Noc => (
                cal.noc_link_bandwidth,
                (0..clusters).map(|_| Server::new(1)).collect(),
            ),
        };
        Self {
            kind,
            bandwidth: bandwidth.max(1),
            servers,
        }
    }

    pub fn kind(&self) -> Interconnect {
        self.kind
    }

    /// Bytes per cycle of one server.
    pub fn bandwidth(&self) -> u64 {
        self.bandwidth
    }

    pub fn servers(&self) -> usize {
        self.servers.len()
    }

    pub fn server_of(&self, cluster: u16) -> usize {
        match self.kind {
            Interconnect::Bus => 0,
            Interconnect::Noc => cluster as usize,
        }
    }

    fn client_of(&self, cluster: u16) -> usize {
        match self.kind {
            Interconnect::Bus => cluster as usize,
            Interconnect::Noc => 0,
        }
    }

    pub fn occupancy(&self, bytes: u32) -> Cycle {
        (bytes as u64).div_ceil(self.bandwidth)
    }

    /// Queue a burst. Returns the server index.
    pub fn request(&mut self, burst: Burst) -> usize {
        let server = self.server_of(burst.cluster);
        let client = self.client_of(burst.cluster);
        let s = &mut self.servers[server];
        s.pending[client].push_back(burst);
        s.waiting += 1;
        server
    }

    pub fn is_idle(&self, server: usize) -> bool {
        self.servers[server].in_flight.is_none()
    }

    pub fn waiting(&self, server: usize) -> usize {
        self.servers[server].waiting
    }

    /// Start the next burst on an idle server at `now`, if any is waiting.
    pub fn try_grant(&mut self, server: usize, now: Cycle) -> Option<Grant> {
        let bandwidth = self.bandwidth;
        let s = &mut self.servers[server];
        if s.in_flight.is_some() || s.waiting == 0 {
            return None;
        }
        let n = s.pending.len();
        let client = (0..n)
            .map(|i| (s.rr + i) % n)
            .find(|&c| !s.pending[c].is_empty())?;
        let burst = s.pending[client].pop_front().expect("non-empty queue");
        s.waiting -= 1;
        s.rr = (client + 1) % n;
        let dur = (burst.bytes as u64).div_ceil(bandwidth).max(1);
        let grant = Grant {
            server,
            burst,
            start: now,
            done: now + dur,
        };
        s.busy_cycles += dur;
        s.bytes += burst.bytes as u64;
        s.in_flight = Some(grant);
        Some(grant)
    }

    /// Retire the burst in flight on `server`.
    pub fn complete(&mut self, server: usize) -> Option<Grant> {
        self.servers[server].in_flight.take()
    }

    pub fn bytes_transferred(&self) -> u64 {
        self.servers.iter().map(|s| s.bytes).sum()
    }

    pub fn busy_cycles(&self, server: usize) -> u64 {
        self.servers[server].busy_cycles
    }
}
