// SPDX-License-Identifier: Apache-2.0

use hero_sim::engine::{Cycle, Engine, Fired};
use proptest::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Act {
    /// PMCA work item; fires a follow-up `then` cycles later if any.
    Work { id: usize, then: Option<Cycle> },
    Gate,
    Ungate,
}

/// Runs the PMCA schedule with the given host gate windows (start, length).
fn simulate(work: &[(Cycle, Option<Cycle>)], windows: &[(Cycle, Cycle)]) -> Vec<Fired<Act>> {
    let mut e = Engine::new();
    let host = e.add_domain("host");
    let pmca = e.add_domain("pmca");
    for (id, &(at, then)) in work.iter().enumerate() {
        e.schedule(pmca, at, Act::Work { id, then }).unwrap();
    }
    for &(start, len) in windows {
        e.schedule(host, start, Act::Gate).unwrap();
        e.schedule(host, start + len, Act::Ungate).unwrap();
    }
    let mut log = Vec::new();
    let n = work.len();
    e.run_until_idle(|e, ev| {
        match ev.action {
            Act::Work { id, then: Some(d) } => {
                e.schedule(pmca, d, Act::Work { id: id + n, then: None }).unwrap();
            }
            Act::Gate => e.gate(pmca).unwrap(),
            Act::Ungate => e.ungate(pmca).unwrap(),
            Act::Work { .. } => {}
        }
        log.push(ev);
    })
    .unwrap();
    log
}

fn pmca_view(log: &[Fired<Act>]) -> Vec<(Cycle, Act)> {
    log.iter()
        .filter(|f| matches!(f.action, Act::Work { .. }))
        .map(|f| (f.local, f.action))
        .collect()
}

fn work() -> impl Strategy<Value = Vec<(Cycle, Option<Cycle>)>> {
    prop::collection::vec((0u64..200, prop::option::of(0u64..50)), 0..40)
}

/// Non-overlapping host windows in increasing order.
fn windows() -> impl Strategy<Value = Vec<(Cycle, Cycle)>> {
    prop::collection::vec((0u64..60, 0u64..60), 0..6).prop_map(|gaps| {
        let mut t = 0;
        gaps.into_iter()
            .map(|(gap, len)| {
                t += gap + 1;
                let w = (t, len);
                t += len;
                w
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn gating_leaves_pmca_local_sequence_unchanged(w in work(), g in windows()) {
        let free = simulate(&w, &[]);
        let gated = simulate(&w, &g);
        prop_assert_eq!(pmca_view(&free), pmca_view(&gated));
        // global time only ever stretches
        let gf: Vec<Cycle> = free.iter().map(|f| f.global).collect();
        let gg: Vec<Cycle> = gated
            .iter()
            .filter(|f| matches!(f.action, Act::Work { .. }))
            .map(|f| f.global)
            .collect();
        for (a, b) in gf.iter().zip(&gg) {
            prop_assert!(b >= a);
        }
    }

    #[test]
    fn replay_is_identical(w in work(), g in windows()) {
        prop_assert_eq!(simulate(&w, &g), simulate(&w, &g));
    }

    #[test]
    fn firing_order_is_total(w in work(), g in windows()) {
        let log = simulate(&w, &g);
        for p in log.windows(2) {
            let a = (p[0].global, p[0].domain.0, p[0].seq);
            let b = (p[1].global, p[1].domain.0, p[1].seq);
            prop_assert!(a.0 <= b.0);
            prop_assert_ne!(a, b);
        }
    }
}
