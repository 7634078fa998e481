use std::collections::HashMap;
use std::fmt;

use crate::fabric::{check_inflight, InflightViolationKind};
use crate::store::assert_staleness_invariants;
use crate::trace::{EventKind, SimTrace};

/// Properties `replay` can re-check on a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Invariant {
    /// Ticks never decrease; compute and block spans open and close in turn.
    Ordering,
    /// The four bounded-staleness conditions.
    Staleness,
    /// In-flight bytes per managed link stay within the window.
    RateLimit,
    /// Every send is delivered exactly once.
    Delivery,
    /// Delivered sizes equal sent sizes and add up to the recorded total.
    ByteAccounting,
}

impl Invariant {
    pub const ALL: [Invariant; 5] = [
        Invariant::Ordering,
        Invariant::Staleness,
        Invariant::RateLimit,
        Invariant::Delivery,
        Invariant::ByteAccounting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Invariant::Ordering => "ordering",
            Invariant::Staleness => "staleness",
            Invariant::RateLimit => "rate_limit",
            Invariant::Delivery => "delivery",
            Invariant::ByteAccounting => "byte_accounting",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantResult {
    pub invariant: Invariant,
    pub violations: usize,
    /// Index into `trace.events` of the first offending event.
    pub first_violation: Option<usize>,
    pub detail: String,
}

impl InvariantResult {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    fn from_list(invariant: Invariant, found: Vec<(usize, String)>) -> Self {
        let first = found.iter().min_by_key(|(i, _)| *i);
        Self {
            invariant,
            violations: found.len(),
            first_violation: first.map(|(i, _)| *i),
            detail: first.map(|(_, m)| m.clone()).unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayReport {
    pub results: Vec<InvariantResult>,
}

impl ReplayReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed())
    }

    pub fn get(&self, invariant: Invariant) -> Option<&InvariantResult> {
        self.results.iter().find(|r| r.invariant == invariant)
    }
}

impl fmt::Display for ReplayReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            match r.first_violation {
                None => writeln!(f, "PASS {}", r.invariant.name())?,
                Some(i) => writeln!(
                    f,
                    "FAIL {} ({} violations; first at event {i}: {})",
                    r.invariant.name(),
                    r.violations,
                    r.detail
                )?,
            }
        }
        Ok(())
    }
}

/// Re-checks `invariants` against a recorded trace.
pub fn replay(trace: &SimTrace, invariants: &[Invariant]) -> ReplayReport {
    ReplayReport {
        results: invariants.iter().map(|&inv| check(trace, inv)).collect(),
    }
}

pub fn replay_all(trace: &SimTrace) -> ReplayReport {
    replay(trace, &Invariant::ALL)
}

fn check(trace: &SimTrace, inv: Invariant) -> InvariantResult {
    let found = match inv {
        Invariant::Ordering => ordering(trace),
        Invariant::Staleness => assert_staleness_invariants(trace)
            .violations
            .into_iter()
            .map(|v| (v.event, format!("{}: {}", v.kind, v.message)))
            .collect(),
        Invariant::RateLimit | Invariant::Delivery => {
            let want_budget = inv == Invariant::RateLimit;
            check_inflight(trace)
                .violations
                .into_iter()
                .filter(|v| (v.kind == InflightViolationKind::OverBudget) == want_budget)
                .map(|v| {
                    (
                        v.event,
                        format!(
                            "{:?} on link {}->{} with {} bytes in flight",
                            v.kind, v.link.0, v.link.1, v.in_flight
                        ),
                    )
                })
                .collect()
        }
        Invariant::ByteAccounting => bytes(trace),
    };
    InvariantResult::from_list(inv, found)
}

fn ordering(trace: &SimTrace) -> Vec<(usize, String)> {
    let mut found = Vec::new();
    let mut last_tick = 0;
    let mut computing: HashMap<usize, bool> = HashMap::new();
    let mut blocked: HashMap<usize, bool> = HashMap::new();
    for (i, e) in trace.events.iter().enumerate() {
        if e.tick < last_tick {
            found.push((i, format!("tick {} after tick {last_tick}", e.tick)));
        }
        last_tick = last_tick.max(e.tick);
        let Some(w) = e.worker else { continue };
        let mut toggle = |map: &mut HashMap<usize, bool>, open: bool, what: &str| {
            let state = map.entry(w).or_insert(false);
            if *state == open {
                found.push((
                    i,
                    format!(
                        "worker {w}: {} while {}",
                        e.kind,
                        if open { what } else { "not in that state" }
                    ),
                ));
            }
            *state = open;
        };
        match e.kind {
            EventKind::ComputeStart | EventKind::ExtraPass => toggle(&mut computing, true, "computing"),
            EventKind::ComputeEnd => toggle(&mut computing, false, ""),
            EventKind::Block => toggle(&mut blocked, true, "blocked"),
            EventKind::Unblock => toggle(&mut blocked, false, ""),
            _ => {}
        }
    }
    found
}

fn bytes(trace: &SimTrace) -> Vec<(usize, String)> {
    let mut found = Vec::new();
    let mut sent: HashMap<u64, u64> = HashMap::new();
    let mut total = 0u64;
    for (i, e) in trace.events.iter().enumerate() {
        let (Some(id), Some(b)) = (e.id, e.bytes) else { continue };
        match e.kind {
            EventKind::MsgSend => {
                total += b;
                sent.insert(id, b);
            }
            EventKind::MsgDeliver => {
                if let Some(&s) = sent.get(&id) {
                    if s != b {
                        found.push((i, format!("message {id} sent with {s} bytes, delivered with {b}")));
                    }
                }
            }
            _ => {}
        }
    }
    if let Some(recorded) = trace.meta_u64("bytes_sent") {
        if recorded != total {
            found.push((
                trace.events.len().saturating_sub(1),
                format!("sends add up to {total} bytes, run recorded {recorded}"),
            ));
        }
    }
    found
}
