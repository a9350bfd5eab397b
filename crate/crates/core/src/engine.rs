// SPDX-License-Identifier: Apache-2.0

//! Deterministic discrete-event core with gateable clock domains.
//!
//! All domains tick at the same rate as global time while running. A gated
//! domain's local clock is frozen, and its pending events are held back until
//! the domain is ungated, so gating stretches global time without changing any
//! domain-local timestamp.

use std::collections::BTreeMap;

use thiserror::Error;

pub type Cycle = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DomainId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle(pub u64);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("unknown clock domain {0:?}")]
    UnknownDomain(DomainId),
    #[error("clock domain `{0}` is already gated")]
    AlreadyGated(String),
    #[error("clock domain `{0}` is not gated")]
    NotGated(String),
    #[error("event limit of {0} exceeded (livelock guard)")]
    EventLimit(u64),
}

#[derive(Debug, Clone)]
pub struct ClockDomain {
    pub name: String,
    gated_since: Option<Cycle>,
    /// Global time spent gated so far.
    offset: Cycle,
}

impl ClockDomain {
    pub fn is_gated(&self) -> bool {
        self.gated_since.is_some()
    }
}

/// An event handed back to the caller when it fires.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fired<A> {
    pub global: Cycle,
    pub domain: DomainId,
    pub local: Cycle,
    pub seq: u64,
    pub action: A,
}

pub struct Engine<A> {
    domains: Vec<ClockDomain>,
    /// Pending events per domain keyed by (local due cycle, sequence).
    queues: Vec<BTreeMap<(Cycle, u64), A>>,
    now: Cycle,
    next_seq: u64,
    fired: u64,
    max_events: u64,
}

impl<A> Default for Engine<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A> Engine<A> {
    pub fn new() -> Self {
        Self {
            domains: Vec::new(),
            queues: Vec::new(),
            now: 0,
            next_seq: 0,
            fired: 0,
            max_events: u64::MAX,
        }
    }

    pub fn with_event_limit(mut self, max_events: u64) -> Self {
        self.max_events = max_events;
        self
    }

    pub fn add_domain(&mut self, name: impl Into<String>) -> DomainId {
        let id = DomainId(self.domains.len() as u16);
        self.domains.push(ClockDomain {
            name: name.into(),
            gated_since: None,
            offset: 0,
        });
        self.queues.push(BTreeMap::new());
        id
    }

    fn domain(&self, id: DomainId) -> Result<&ClockDomain, EngineError> {
        self.domains
            .get(id.0 as usize)
            .ok_or(EngineError::UnknownDomain(id))
    }

    pub fn now(&self) -> Cycle {
        self.now
    }

    pub fn events_fired(&self) -> u64 {
        self.fired
    }

    pub fn is_gated(&self, id: DomainId) -> Result<bool, EngineError> {
        Ok(self.domain(id)?.is_gated())
    }

    /// Current local cycle of a domain.
    pub fn local_cycle(&self, id: DomainId) -> Result<Cycle, EngineError> {
        let d = self.domain(id)?;
        let reference = d.gated_since.unwrap_or(self.now);
        Ok(reference - d.offset)
    }

    /// Schedule `action` to fire `delay` local cycles from now in `domain`.
    pub fn schedule(
        &mut self,
        domain: DomainId,
        delay: Cycle,
        action: A,
    ) -> Result<EventHandle, EngineError> {
        let local = self.local_cycle(domain)? + delay;
        self.schedule_at(domain, local, action)
    }

    /// Schedule at an absolute local cycle, clamped to the domain's present.
    pub fn schedule_at(
        &mut self,
        domain: DomainId,
        local: Cycle,
        action: A,
    ) -> Result<EventHandle, EngineError> {
        let local = local.max(self.local_cycle(domain)?);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queues[domain.0 as usize].insert((local, seq), action);
        Ok(EventHandle(seq))
    }

    pub fn gate(&mut self, id: DomainId) -> Result<(), EngineError> {
        let now = self.now;
        let d = self
            .domains
            .get_mut(id.0 as usize)
            .ok_or(EngineError::UnknownDomain(id))?;
        if d.gated_since.is_some() {
            return Err(EngineError::AlreadyGated(d.name.clone()));
        }
        d.gated_since = Some(now);
        Ok(())
    }

    pub fn ungate(&mut self, id: DomainId) -> Result<(), EngineError> {
        let now = self.now;
        let d = self
            .domains
            .get_mut(id.0 as usize)
            .ok_or(EngineError::UnknownDomain(id))?;
        let since = d
            .gated_since
            .take()
            .ok_or_else(|| EngineError::NotGated(d.name.clone()))?;
        d.offset += now - since;
        Ok(())
    }

    pub fn pending(&self) -> usize {
        self.queues.iter().map(BTreeMap::len).sum()
    }

    /// Pending events in gated domains.
    pub fn held(&self) -> usize {
        self.domains
            .iter()
            .zip(&self.queues)
            .filter(|(d, _)| d.is_gated())
            .map(|(_, q)| q.len())
            .sum()
    }

    /// Pop the next event in (global time, domain id, sequence) order.
    /// Events in gated domains are held back.
    pub fn next_event(&mut self) -> Result<Option<Fired<A>>, EngineError> {
        let mut best: Option<(Cycle, usize, u64)> = None;
        for (i, (d, q)) in self.domains.iter().zip(&self.queues).enumerate() {
            if d.is_gated() {
                continue;
            }
            if let Some((&(local, seq), _)) = q.first_key_value() {
                let global = local + d.offset;
                if best.is_none_or(|(g, bi, bs)| (global, i, seq) < (g, bi, bs)) {
                    best = Some((global, i, seq));
                }
            }
        }
        let Some((global, idx, _)) = best else {
            return Ok(None);
        };
        if self.fired >= self.max_events {
            return Err(EngineError::EventLimit(self.max_events));
        }
        let ((local, seq), action) = self.queues[idx].pop_first().expect("nonempty queue");
        self.now = self.now.max(global);
        self.fired += 1;
        Ok(Some(Fired {
            global,
            domain: DomainId(idx as u16),
            local,
            seq,
            action,
        }))
    }

    /// Fire events until none remain runnable; returns the last fired global time.
    pub fn run_until_idle<F>(&mut self, mut handler: F) -> Result<Cycle, EngineError>
    where
        F: FnMut(&mut Self, Fired<A>),
    {
        let mut last = 0;
        while let Some(ev) = self.next_event()? {
            last = ev.global;
            handler(self, ev);
        }
        Ok(last)
    }
}
