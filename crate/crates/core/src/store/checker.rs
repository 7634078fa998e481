use std::collections::HashSet;
use std::fmt;

use super::Frontier;
use crate::trace::{EventKind, SimTrace, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    BoundedClockDifference,
    TimestampedUpdates,
    ModelStateGuarantee,
    ReadMyWrites,
    /// The trace itself is inconsistent (unknown worker, missing metadata).
    Malformed,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::BoundedClockDifference => "bounded clock difference",
            ViolationKind::TimestampedUpdates => "timestamped updates",
            ViolationKind::ModelStateGuarantee => "model state guarantee",
            ViolationKind::ReadMyWrites => "read-my-writes",
            ViolationKind::Malformed => "malformed trace",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Index of the offending event in `trace.events`.
    pub event: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StalenessReport {
    pub violations: Vec<Violation>,
    pub reads: usize,
    pub commits: usize,
    pub clocks: usize,
}

impl StalenessReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    pub fn first(&self, kind: ViolationKind) -> Option<&Violation> {
        self.violations.iter().find(|v| v.kind == kind)
    }
}

struct State {
    s: u64,
    clocks: Vec<u64>,
    committed: Vec<bool>,
    views: Vec<Vec<Frontier>>,
    commits: HashSet<(usize, u64)>,
    reported_missing: HashSet<(usize, usize, u64)>,
}

impl State {
    fn min_clock(&self) -> u64 {
        *self.clocks.iter().min().unwrap()
    }
}

/// Checks the four bounded-staleness conditions over a trace.
///
/// Worker count and `s` come from the `workers` and `staleness` metadata.
/// Each missing required update is reported once, at the first read that
/// needed it.
pub fn assert_staleness_invariants(trace: &SimTrace) -> StalenessReport {
    let mut report = StalenessReport::default();
    if trace.events.is_empty() {
        return report;
    }
    let (Some(p), Some(s)) = (trace.meta_u64("workers"), trace.meta_u64("staleness")) else {
        report.violations.push(Violation {
            kind: ViolationKind::Malformed,
            event: 0,
            message: "trace lacks `workers`/`staleness` metadata".into(),
        });
        return report;
    };
    let p = p as usize;
    if p == 0 {
        report.violations.push(Violation {
            kind: ViolationKind::Malformed,
            event: 0,
            message: "zero workers".into(),
        });
        return report;
    }
    let mut st = State {
        s,
        clocks: vec![0; p],
        committed: vec![false; p],
        views: vec![vec![Frontier::default(); p]; p],
        commits: HashSet::new(),
        reported_missing: HashSet::new(),
    };

    let (mut reads, mut commits, mut clocks) = (0, 0, 0);
    let mut found = Vec::new();
    for (i, e) in trace.events.iter().enumerate() {
        let mut bad = |kind, message: String| {
            found.push(Violation {
                kind,
                event: i,
                message,
            })
        };
        let worker = match e.kind {
            EventKind::Commit | EventKind::Clock | EventKind::Read | EventKind::Apply | EventKind::Fetch => {
                match e.worker {
                    Some(w) if w < p => w,
                    _ => {
                        bad(ViolationKind::Malformed, format!("{} without a valid worker", e.kind));
                        continue;
                    }
                }
            }
            _ => continue,
        };
        match e.kind {
            EventKind::Commit => {
                commits += 1;
                on_commit(&mut st, worker, e, &mut bad);
            }
            EventKind::Clock => {
                clocks += 1;
                if !st.committed[worker] {
                    bad(
                        ViolationKind::TimestampedUpdates,
                        format!("worker {worker} clocked at {} without committing", st.clocks[worker]),
                    );
                }
                st.committed[worker] = false;
                st.clocks[worker] += 1;
                if let Some(c) = e.clock {
                    if c != st.clocks[worker] {
                        bad(
                            ViolationKind::Malformed,
                            format!("clock event says {c}, expected {}", st.clocks[worker]),
                        );
                        st.clocks[worker] = c;
                    }
                }
            }
            EventKind::Apply | EventKind::Fetch => {
                let (Some(origin), Some(ts)) = (e.peer, e.timestamp) else {
                    bad(ViolationKind::Malformed, "apply without origin/timestamp".into());
                    continue;
                };
                if origin >= p {
                    bad(ViolationKind::Malformed, format!("unknown origin {origin}"));
                    continue;
                }
                if !st.commits.contains(&(origin, ts)) {
                    bad(
                        ViolationKind::TimestampedUpdates,
                        format!("worker {worker} applied ({origin}, {ts}) before it was committed"),
                    );
                }
                let t = st.clocks[worker];
                if origin != worker && ts + 1 > t + st.s {
                    bad(
                        ViolationKind::ModelStateGuarantee,
                        format!(
                            "worker {worker} at clock {t} applied update ({origin}, {ts}) beyond t + s - 1"
                        ),
                    );
                }
                st.views[worker][origin].insert(ts);
            }
            EventKind::Read => {
                reads += 1;
                on_read(&mut st, worker, e, &mut bad);
            }
            _ => unreachable!(),
        }
    }
    StalenessReport {
        violations: found,
        reads,
        commits,
        clocks,
    }
}

fn check_gap(st: &State, worker: usize, what: &str, bad: &mut impl FnMut(ViolationKind, String)) {
    let t = st.clocks[worker];
    let min = st.min_clock();
    if t - min > st.s {
        bad(
            ViolationKind::BoundedClockDifference,
            format!(
                "worker {worker} {what} at clock {t} while the slowest is at {min} (s = {})",
                st.s
            ),
        );
    }
}

fn on_commit(
    st: &mut State,
    worker: usize,
    e: &TraceEvent,
    bad: &mut impl FnMut(ViolationKind, String),
) {
    let t = st.clocks[worker];
    check_gap(st, worker, "committed", bad);
    match e.timestamp {
        Some(ts) if ts == t => {}
        other => bad(
            ViolationKind::TimestampedUpdates,
            format!("worker {worker} at clock {t} committed timestamp {other:?}"),
        ),
    }
    if st.committed[worker] {
        bad(
            ViolationKind::TimestampedUpdates,
            format!("worker {worker} committed twice at clock {t}"),
        );
    }
    st.committed[worker] = true;
    st.commits.insert((worker, e.timestamp.unwrap_or(t)));
}

fn on_read(
    st: &mut State,
    worker: usize,
    e: &TraceEvent,
    bad: &mut impl FnMut(ViolationKind, String),
) {
    let t = st.clocks[worker];
    if let Some(c) = e.clock {
        if c != t {
            bad(
                ViolationKind::Malformed,
                format!("read event says clock {c}, tracked clock is {t}"),
            );
        }
    }
    check_gap(st, worker, "read", bad);

    let own = &st.views[worker][worker];
    if own.contiguous() < t {
        bad(
            ViolationKind::ReadMyWrites,
            format!(
                "worker {worker} at clock {t} is missing its own update {}",
                own.contiguous()
            ),
        );
        let missing: Vec<u64> = (own.contiguous()..t).collect();
        for ts in missing {
            st.views[worker][worker].insert(ts);
        }
    }

    if t > st.s {
        let required = t - st.s - 1;
        for origin in 0..st.clocks.len() {
            let missing: Vec<u64> = (st.views[worker][origin].contiguous()..=required)
                .filter(|&ts| !st.views[worker][origin].contains(ts))
                .collect();
            for ts in missing {
                if st.reported_missing.insert((worker, origin, ts)) {
                    bad(
                        ViolationKind::ModelStateGuarantee,
                        format!(
                            "worker {worker} read at clock {t} without update ({origin}, {ts})"
                        ),
                    );
                }
                st.views[worker][origin].insert(ts);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceEvent as E;

    fn meta(p: usize, s: u64) -> SimTrace {
        let mut t = SimTrace::new();
        t.set_meta("workers", p);
        t.set_meta("staleness", s);
        t
    }

    #[test]
    fn empty_trace_is_clean() {
        assert!(assert_staleness_invariants(&SimTrace::new()).is_clean());
    }

    #[test]
    fn bsp_trace_is_clean() {
        let mut t = meta(2, 0);
        for c in 0..3u64 {
            for w in 0..2 {
                t.push(E::new(EventKind::Read, 0).worker(w).clock(c));
                t.push(E::new(EventKind::Commit, 0).worker(w).clock(c).timestamp(c));
                t.push(E::new(EventKind::Apply, 0).worker(w).peer(w).timestamp(c).clock(c));
            }
            for w in 0..2 {
                t.push(E::new(EventKind::Clock, 0).worker(w).clock(c + 1));
            }
            for w in 0..2 {
                t.push(E::new(EventKind::Apply, 0).worker(w).peer(1 - w).timestamp(c).clock(c + 1));
            }
        }
        let r = assert_staleness_invariants(&t);
        assert!(r.is_clean(), "{:?}", r.violations);
        assert_eq!(r.reads, 6);
    }

    #[test]
    fn missing_other_update_flagged_once() {
        let mut t = meta(2, 0);
        for c in 0..3u64 {
            for w in 0..2 {
                t.push(E::new(EventKind::Read, 0).worker(w).clock(c));
                t.push(E::new(EventKind::Commit, 0).worker(w).clock(c).timestamp(c));
                t.push(E::new(EventKind::Apply, 0).worker(w).peer(w).timestamp(c).clock(c));
            }
            for w in 0..2 {
                t.push(E::new(EventKind::Clock, 0).worker(w).clock(c + 1));
            }
            if c > 0 {
                t.push(E::new(EventKind::Apply, 0).worker(0).peer(1).timestamp(c).clock(c + 1));
            }
            t.push(E::new(EventKind::Apply, 0).worker(1).peer(0).timestamp(c).clock(c + 1));
        }
        let r = assert_staleness_invariants(&t);
        assert_eq!(r.count(ViolationKind::ModelStateGuarantee), 1);
        assert_eq!(r.violations.len(), 1);
    }

    #[test]
    fn gap_violation_at_read() {
        let mut t = meta(2, 0);
        t.push(E::new(EventKind::Commit, 0).worker(0).clock(0).timestamp(0));
        t.push(E::new(EventKind::Apply, 0).worker(0).peer(0).timestamp(0));
        t.push(E::new(EventKind::Clock, 0).worker(0).clock(1));
        t.push(E::new(EventKind::Read, 0).worker(0).clock(1));
        let r = assert_staleness_invariants(&t);
        let v = r.first(ViolationKind::BoundedClockDifference).unwrap();
        assert_eq!(v.event, 3);
    }
}
