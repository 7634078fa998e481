//! Structure-aware parallelization (SAP).
//!
//! `schedule()` picks a few prioritized parameters, runs dependency checks on
//! them, groups them into independent subsets and bin-packs the subsets onto
//! workers. Workers then run Δ (`push`) on their subsets and the results are
//! merged (`pull`). LDA uses a fixed block rotation instead of dependency
//! checks, since its dependencies are known from the data layout.

mod balance;
mod dependency;
mod priority;
mod rotation;
mod sources;

use thiserror::Error;

pub use balance::{balance_load, slow_worker_extra_updates, Assignment};
pub use dependency::{
    build_independent_subsets, default_subset_cap, dependency_check, dump_round, verify_round,
    DependencyOracle, SubsetRound,
};
pub use priority::{prioritize_sample, PriorityState};
pub use rotation::{build_rotation_plan, RotationBlock, RotationPlan};
pub use sources::{
    FixedBlocks, RandomParallel, RotationSchedule, RoundRecord, RoundRobin, SapConfig,
    SapScheduler, ShardSchedule,
};

use crate::engine::Payload;

#[derive(Debug, Error, PartialEq)]
pub enum SchedError {
    #[error("dependency check of parameter {0} against itself")]
    SelfDependency(usize),
    #[error("parameter index {index} out of range (m = {len})")]
    OutOfRange { index: usize, len: usize },
    #[error("sample count must be positive")]
    EmptySample,
    #[error("cannot sample {count} distinct parameters out of {len}")]
    SampleTooLarge { count: usize, len: usize },
    #[error("worker count must be positive")]
    NoWorkers,
    #[error("subset cost must be positive and finite, got {0}")]
    BadCost(f64),
    #[error("cannot partition {items} {what} over {workers} workers")]
    TooFewItems {
        items: usize,
        workers: usize,
        what: &'static str,
    },
}

/// Supplies per-worker work units for each clock (one `round` per clock, in
/// increasing clock order).
pub trait ScheduleSource<W> {
    fn round(&mut self, clock: u64, model: &[f64]) -> Result<Vec<W>, SchedError>;

    /// Called with every committed increment, in commit order.
    fn observe(&mut self, _delta: &Payload) {}
}

impl<W, T: ScheduleSource<W> + ?Sized> ScheduleSource<W> for Box<T> {
    fn round(&mut self, clock: u64, model: &[f64]) -> Result<Vec<W>, SchedError> {
        (**self).round(clock, model)
    }

    fn observe(&mut self, delta: &Payload) {
        (**self).observe(delta)
    }
}
