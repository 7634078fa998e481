//! Bounded-staleness (SSP) parameter store.
//!
//! [`SspTable`] is the single-threaded state machine the simulator drives;
//! [`SharedStore`] wraps it for real threads. Both keep a master copy of the
//! parameters, one view per worker and the worker clocks.

mod checker;
mod shared;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

pub use checker::{assert_staleness_invariants, StalenessReport, Violation, ViolationKind};
pub use shared::SharedStore;

use crate::engine::{Payload, UpdateDelta};

#[derive(Debug, Error, PartialEq)]
pub enum StoreError {
    #[error("staleness must be non-negative, got {0}")]
    NegativeStaleness(i64),
    #[error("unknown worker {0}")]
    UnknownWorker(usize),
    #[error("unknown key {key} (table has {len} keys)")]
    UnknownKey { key: usize, len: usize },
    #[error("worker {worker} committed timestamp {got} at clock {expected}")]
    TimestampMismatch {
        worker: usize,
        expected: u64,
        got: u64,
    },
    #[error("worker {worker} committed an update with origin {origin}")]
    OriginMismatch { worker: usize, origin: usize },
    #[error("worker {worker} already committed at clock {clock}")]
    DuplicateCommit { worker: usize, clock: u64 },
    #[error("worker {worker} called clock() at {clock} without committing")]
    ClockWithoutCommit { worker: usize, clock: u64 },
    #[error("worker {worker} read at clock {clock} while {ahead} clocks ahead of the slowest (s = {s})")]
    ReadWhileBlocked {
        worker: usize,
        clock: u64,
        ahead: u64,
        s: u64,
    },
    #[error("update (origin {origin}, timestamp {timestamp}) required by worker {worker} is not available")]
    Unavailable {
        worker: usize,
        origin: usize,
        timestamp: u64,
    },
    #[error("update touches key {extent} beyond table size {len}")]
    ShapeMismatch { extent: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StalenessConfig {
    pub s: u64,
}

impl StalenessConfig {
    pub fn new(s: i64) -> Result<Self, StoreError> {
        if s < 0 {
            return Err(StoreError::NegativeStaleness(s));
        }
        Ok(Self { s: s as u64 })
    }

    pub fn bsp() -> Self {
        Self { s: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockDecision {
    Proceed,
    Block,
}

/// Timestamps from one origin included in a view: everything below `contig`
/// plus the sparse set `extra`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frontier {
    contig: u64,
    extra: BTreeSet<u64>,
}

impl Frontier {
    pub fn contains(&self, ts: u64) -> bool {
        ts < self.contig || self.extra.contains(&ts)
    }

    pub fn insert(&mut self, ts: u64) -> bool {
        if self.contains(ts) {
            return false;
        }
        self.extra.insert(ts);
        while self.extra.remove(&self.contig) {
            self.contig += 1;
        }
        true
    }

    /// Number of leading timestamps `0..contig` all included.
    pub fn contiguous(&self) -> u64 {
        self.contig
    }
}

/// What a read did to bring the view up to date.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReadReport {
    pub clock: u64,
    /// `(timestamp, origin)` pulled from the store because the fabric had not
    /// delivered them yet.
    pub fetched: Vec<(u64, usize)>,
    /// Every `(timestamp, origin)` folded into the view by this read, in order
    /// (includes the fetched ones).
    pub applied: Vec<(u64, usize)>,
    /// Clocks between the reader's latest complete frontier and `t − 1`.
    pub staleness: u64,
}

#[derive(Debug, Clone)]
struct WorkerView {
    values: Vec<f64>,
    included: Vec<Frontier>,
    inbox: BTreeMap<(u64, usize), Arc<UpdateDelta>>,
}

pub type MergeFn = Arc<dyn Fn(&mut [f64], &Payload) + Send + Sync>;

/// The SSP table.
pub struct SspTable {
    s: u64,
    clocks: Vec<u64>,
    committed: Vec<bool>,
    master: Vec<f64>,
    log: BTreeMap<(u64, usize), Arc<UpdateDelta>>,
    commit_counts: BTreeMap<u64, usize>,
    snapshot: Vec<f64>,
    snapshot_clock: u64,
    views: Vec<WorkerView>,
    merge: MergeFn,
}

impl std::fmt::Debug for SspTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SspTable")
            .field("s", &self.s)
            .field("clocks", &self.clocks)
            .field("snapshot_clock", &self.snapshot_clock)
            .field("log_len", &self.log.len())
            .finish()
    }
}

impl SspTable {
    pub fn new(workers: usize, staleness: StalenessConfig, initial: Vec<f64>) -> Self {
        Self::with_merge(workers, staleness, initial, Arc::new(|v, d| d.add_to(v)))
    }

    /// `merge` applies one committed increment; it must be the same callable
    /// for every view so that all copies evolve identically.
    pub fn with_merge(
        workers: usize,
        staleness: StalenessConfig,
        initial: Vec<f64>,
        merge: MergeFn,
    ) -> Self {
        assert!(workers >= 1, "SSP table needs at least one worker");
        let view = WorkerView {
            values: initial.clone(),
            included: vec![Frontier::default(); workers],
            inbox: BTreeMap::new(),
        };
        Self {
            s: staleness.s,
            clocks: vec![0; workers],
            committed: vec![false; workers],
            snapshot: initial.clone(),
            master: initial,
            log: BTreeMap::new(),
            commit_counts: BTreeMap::new(),
            snapshot_clock: 0,
            views: vec![view; workers],
            merge,
        }
    }

    pub fn workers(&self) -> usize {
        self.clocks.len()
    }

    pub fn staleness(&self) -> u64 {
        self.s
    }

    pub fn len(&self) -> usize {
        self.master.len()
    }

    pub fn is_empty(&self) -> bool {
        self.master.is_empty()
    }

    pub fn clocks(&self) -> &[u64] {
        &self.clocks
    }

    pub fn clock_of(&self, worker: usize) -> u64 {
        self.clocks[worker]
    }

    pub fn min_clock(&self) -> u64 {
        *self.clocks.iter().min().unwrap()
    }

    pub fn max_clock(&self) -> u64 {
        *self.clocks.iter().max().unwrap()
    }

    pub fn has_committed(&self, worker: usize) -> bool {
        self.committed[worker]
    }

    /// Global value: initial plus every commit, in commit order.
    pub fn master(&self) -> &[f64] {
        &self.master
    }

    /// Initial plus all updates with timestamp `< snapshot_clock()`, folded
    /// per timestamp in origin order. Under `s = 0` this is the BSP state.
    pub fn snapshot(&self) -> &[f64] {
        &self.snapshot
    }

    pub fn snapshot_clock(&self) -> u64 {
        self.snapshot_clock
    }

    pub fn view(&self, worker: usize) -> &[f64] {
        &self.views[worker].values
    }

    pub fn included(&self, worker: usize, origin: usize, ts: u64) -> bool {
        self.views[worker].included[origin].contains(ts)
    }

    fn check_worker(&self, worker: usize) -> Result<(), StoreError> {
        if worker >= self.workers() {
            return Err(StoreError::UnknownWorker(worker));
        }
        Ok(())
    }

    /// Whether `worker` may run at its current clock.
    pub fn can_proceed(&self, worker: usize) -> bool {
        self.clocks[worker] - self.min_clock() <= self.s
    }

    pub fn commit(
        &mut self,
        worker: usize,
        delta: UpdateDelta,
    ) -> Result<Arc<UpdateDelta>, StoreError> {
        self.check_worker(worker)?;
        let clock = self.clocks[worker];
        if delta.timestamp != clock {
            return Err(StoreError::TimestampMismatch {
                worker,
                expected: clock,
                got: delta.timestamp,
            });
        }
        if delta.origin != worker {
            return Err(StoreError::OriginMismatch {
                worker,
                origin: delta.origin,
            });
        }
        if self.committed[worker] {
            return Err(StoreError::DuplicateCommit { worker, clock });
        }
        let extent = delta.payload.extent();
        if extent > self.master.len() {
            return Err(StoreError::ShapeMismatch {
                extent,
                len: self.master.len(),
            });
        }
        self.committed[worker] = true;
        (self.merge)(&mut self.master, &delta.payload);

        let view = &mut self.views[worker];
        (self.merge)(&mut view.values, &delta.payload);
        view.included[worker].insert(clock);

        let delta = Arc::new(delta);
        self.log.insert((clock, worker), Arc::clone(&delta));
        *self.commit_counts.entry(clock).or_insert(0) += 1;
        self.fold_snapshot();
        Ok(delta)
    }

    fn fold_snapshot(&mut self) {
        let p = self.workers();
        while self.commit_counts.get(&self.snapshot_clock) == Some(&p) {
            let ts = self.snapshot_clock;
            for origin in 0..p {
                let d = &self.log[&(ts, origin)];
                (self.merge)(&mut self.snapshot, &d.payload);
            }
            self.commit_counts.remove(&ts);
            self.snapshot_clock += 1;
        }
    }

    /// Advances the worker's clock. `Block` means the worker is now more than
    /// `s` clocks ahead of the slowest and must wait until `can_proceed`.
    pub fn clock(&mut self, worker: usize) -> Result<ClockDecision, StoreError> {
        self.check_worker(worker)?;
        if !self.committed[worker] {
            return Err(StoreError::ClockWithoutCommit {
                worker,
                clock: self.clocks[worker],
            });
        }
        self.committed[worker] = false;
        self.clocks[worker] += 1;
        self.prune();
        Ok(if self.can_proceed(worker) {
            ClockDecision::Proceed
        } else {
            ClockDecision::Block
        })
    }

    fn prune(&mut self) {
        let mut keep_from = self.snapshot_clock;
        for v in &self.views {
            for f in &v.included {
                keep_from = keep_from.min(f.contiguous());
            }
        }
        while let Some((&(ts, _), _)) = self.log.first_key_value() {
            if ts >= keep_from {
                break;
            }
            self.log.pop_first();
        }
    }

    /// Hands a committed update to a worker's inbox (fabric delivery). Returns
    /// false if the view already has it.
    pub fn deliver(&mut self, worker: usize, delta: &Arc<UpdateDelta>) -> bool {
        let view = &mut self.views[worker];
        if view.included[delta.origin].contains(delta.timestamp) {
            return false;
        }
        view.inbox
            .insert((delta.timestamp, delta.origin), Arc::clone(delta))
            .is_none()
    }

    /// Brings `worker`'s view up to date for its current clock `t`: fetches any
    /// update with timestamp `≤ t − s − 1` still missing, then applies every
    /// pending update with timestamp `≤ t + s − 1` in (timestamp, origin) order.
    pub fn read(&mut self, worker: usize) -> Result<ReadReport, StoreError> {
        self.check_worker(worker)?;
        let t = self.clocks[worker];
        let ahead = t - self.min_clock();
        if ahead > self.s {
            return Err(StoreError::ReadWhileBlocked {
                worker,
                clock: t,
                ahead,
                s: self.s,
            });
        }
        let mut report = ReadReport {
            clock: t,
            ..Default::default()
        };
        let p = self.workers();
        let view = &mut self.views[worker];

        if t > self.s {
            let required = t - self.s - 1;
            for origin in 0..p {
                for ts in view.included[origin].contiguous()..=required {
                    if view.included[origin].contains(ts) || view.inbox.contains_key(&(ts, origin)) {
                        continue;
                    }
                    let d = self.log.get(&(ts, origin)).ok_or(StoreError::Unavailable {
                        worker,
                        origin,
                        timestamp: ts,
                    })?;
                    view.inbox.insert((ts, origin), Arc::clone(d));
                    report.fetched.push((ts, origin));
                }
            }
        }
        report.fetched.sort_unstable();

        if t + self.s >= 1 {
            let limit = t + self.s - 1;
            let later = view.inbox.split_off(&(limit + 1, 0));
            let ready = std::mem::replace(&mut view.inbox, later);
            for ((ts, origin), d) in ready {
                (self.merge)(&mut view.values, &d.payload);
                view.included[origin].insert(ts);
                report.applied.push((ts, origin));
            }
        }

        let complete = view.included.iter().map(|f| f.contiguous()).min().unwrap();
        report.staleness = t.saturating_sub(complete);
        Ok(report)
    }

    /// One key of `worker`'s view as of its last `read`.
    pub fn read_key(&self, worker: usize, key: usize) -> Result<f64, StoreError> {
        self.check_worker(worker)?;
        self.views[worker]
            .values
            .get(key)
            .copied()
            .ok_or(StoreError::UnknownKey {
                key,
                len: self.master.len(),
            })
    }

    /// Pending inbox entries per worker, for diagnostics.
    pub fn inbox_len(&self, worker: usize) -> usize {
        self.views[worker].inbox.len()
    }
}
