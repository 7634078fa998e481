//! Iterative-convergent programs and the reference execution loops.
//!
//! A program supplies an update function Δ, an aggregation F and an objective.
//! The loops here are in-process and bulk-synchronous; bounded-staleness
//! execution over a simulated network lives in [`crate::sim`].

mod delta;

use std::collections::HashSet;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

pub use delta::{FactorList, Payload, SparseVec, UpdateDelta};

use crate::rng::{self, Rng};
use crate::sched::{ScheduleSource, SchedError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("objective became non-finite ({value}) at iteration {iteration}")]
    NonFinite { iteration: u64, value: f64 },
    #[error("invalid stopping criterion: {0}")]
    InvalidStopping(String),
    #[error("expected {expected} shards, got {got}")]
    ShardCount { expected: usize, got: usize },
    #[error("scheduler returned {got} work units for {expected} workers")]
    WorkerCount { expected: usize, got: usize },
    #[error("round {round}: index {index} assigned to more than one worker")]
    ScheduleOverlap { round: u64, index: usize },
    #[error("state has {got} parameters, program expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Schedule(#[from] SchedError),
}

/// Parameters `A` plus the iteration clock `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub values: Vec<f64>,
    pub clock: u64,
}

impl ModelState {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, clock: 0 }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Stop when the relative objective change over `window` iterations drops
/// below `objective_tolerance`, or after `max_iterations`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingCriterion {
    max_iterations: u64,
    objective_tolerance: f64,
    window: u64,
}

impl StoppingCriterion {
    pub fn new(
        max_iterations: u64,
        objective_tolerance: f64,
        window: u64,
    ) -> Result<Self, EngineError> {
        if max_iterations < 1 {
            return Err(EngineError::InvalidStopping(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(objective_tolerance > 0.0) {
            return Err(EngineError::InvalidStopping(format!(
                "objective_tolerance must be > 0, got {objective_tolerance}"
            )));
        }
        if window < 1 {
            return Err(EngineError::InvalidStopping(
                "window must be at least 1".into(),
            ));
        }
        Ok(Self {
            max_iterations,
            objective_tolerance,
            window,
        })
    }

    /// Runs exactly `max_iterations`, whatever the objective does.
    pub fn iterations(max_iterations: u64) -> Result<Self, EngineError> {
        let mut c = Self::new(max_iterations, f64::MIN_POSITIVE, 1)?;
        // `rel < 0` never holds
        c.objective_tolerance = 0.0;
        Ok(c)
    }

    pub fn max_iterations(&self) -> u64 {
        self.max_iterations
    }

    pub fn objective_tolerance(&self) -> f64 {
        self.objective_tolerance
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    /// `objectives[t]` is the objective after iteration `t` (index 0 = initial).
    pub fn should_stop(&self, objectives: &[f64]) -> bool {
        let t = objectives.len().saturating_sub(1) as u64;
        if t >= self.max_iterations {
            return true;
        }
        if t < self.window {
            return false;
        }
        let prev = objectives[(t - self.window) as usize];
        let cur = objectives[t as usize];
        let rel = (prev - cur).abs() / prev.abs().max(f64::MIN_POSITIVE);
        rel < self.objective_tolerance
    }
}

/// Data that can be partitioned into disjoint shards (every sample in exactly one).
pub trait Shardable: Sized {
    fn sample_count(&self) -> usize;
    fn split(&self, parts: usize) -> Vec<Self>;
}

/// Contiguous balanced split of `0..n` into `parts` ranges.
pub fn split_ranges(n: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let parts = parts.max(1);
    let base = n / parts;
    let extra = n % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

/// An iterative-convergent program: `A(t) = F(A(t-1), Δ(A(t-1), x))`.
///
/// Parameters live in one flat `f64` vector whose layout the program owns.
/// Two update paths are exposed:
///
/// - `delta` + `aggregate`: the data-parallel form. Each step's Δ is computed
///   per shard against `A(t-1)`, the shard results are summed, and F is applied.
///   Sequential execution is the single-shard case.
/// - `delta_on`: the model-parallel form. A worker updates only its assigned
///   work unit, sequentially, against its (possibly stale) view, and returns
///   an additive increment.
pub trait IcProgram: Sync {
    type Data: Shardable + Sync;
    type Work: Clone + fmt::Debug + Send + Sync;

    fn name(&self) -> &'static str;

    fn param_len(&self) -> usize;

    fn initial_state(&self, data: &Self::Data, seed: u64) -> ModelState;

    fn objective(&self, values: &[f64], data: &Self::Data) -> Result<f64, EngineError>;

    fn steps_per_iteration(&self) -> usize {
        1
    }

    fn delta(
        &self,
        values: &[f64],
        shard: &Self::Data,
        step: usize,
        clock: u64,
        rng: &mut Rng,
    ) -> Payload;

    fn aggregate(&self, values: &mut [f64], step: usize, delta: &Payload);

    fn delta_on(
        &self,
        view: &[f64],
        data: &Self::Data,
        work: &Self::Work,
        clock: u64,
        rng: &mut Rng,
    ) -> Payload;

    /// Model indices written exclusively by whoever holds `work`.
    fn owned_indices(&self, work: &Self::Work) -> Vec<usize>;

    /// Cost estimate in abstract units (drives load balancing and simulated time).
    fn work_cost(&self, data: &Self::Data, work: &Self::Work) -> f64;

    /// Δ evaluations performed by one `delta_on` call.
    fn evaluations(&self, _data: &Self::Data, _work: &Self::Work) -> u64 {
        1
    }

    /// Δ evaluations performed by one data-parallel step on one shard.
    fn step_evaluations(&self, _shard: &Self::Data) -> u64 {
        1
    }

    /// Store-side merge of a committed increment.
    fn merge(&self, values: &mut [f64], delta: &Payload) {
        delta.add_to(values);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: u64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: ModelState,
    pub metrics: Vec<IterationRecord>,
    /// `A(t)` after every iteration, starting with `A(0)`.
    pub trajectory: Vec<Vec<f64>>,
    /// Aggregated Δ of every data-parallel step, in order.
    pub step_deltas: Vec<Payload>,
    pub evaluations: u64,
}

impl RunOutput {
    pub fn final_objective(&self) -> f64 {
        self.metrics.last().map_or(f64::NAN, |m| m.objective)
    }
}

/// `L(x, A)` for the given state.
pub fn evaluate_objective<P: IcProgram>(
    program: &P,
    state: &ModelState,
    data: &P::Data,
) -> Result<f64, EngineError> {
    if state.len() != program.param_len() {
        return Err(EngineError::ShapeMismatch {
            expected: program.param_len(),
            got: state.len(),
        });
    }
    program.objective(&state.values, data)
}

fn checked_objective<P: IcProgram>(
    program: &P,
    values: &[f64],
    data: &P::Data,
    iteration: u64,
) -> Result<f64, EngineError> {
    let value = program.objective(values, data)?;
    if !value.is_finite() {
        return Err(EngineError::NonFinite { iteration, value });
    }
    Ok(value)
}

/// Runs `program` on a single machine.
pub fn run_sequential<P: IcProgram>(
    program: &P,
    data: &P::Data,
    stop: &StoppingCriterion,
    seed: u64,
) -> Result<RunOutput, EngineError> {
    run_shards(program, data, std::slice::from_ref(data), stop, seed)
}

/// Runs `program` data-parallel over `shards`: every step computes Δ on each
/// shard against `A(t-1)` and applies `F(A(t-1), Σ_p Δ_p)`.
pub fn run_data_parallel<P: IcProgram>(
    program: &P,
    full: &P::Data,
    shards: &[P::Data],
    workers: usize,
    stop: &StoppingCriterion,
    seed: u64,
) -> Result<RunOutput, EngineError> {
    if shards.len() != workers {
        return Err(EngineError::ShardCount {
            expected: workers,
            got: shards.len(),
        });
    }
    run_shards(program, full, shards, stop, seed)
}

fn run_shards<P: IcProgram>(
    program: &P,
    full: &P::Data,
    shards: &[P::Data],
    stop: &StoppingCriterion,
    seed: u64,
) -> Result<RunOutput, EngineError> {
    let mut state = program.initial_state(full, seed);
    let mut rngs: Vec<Rng> = (0..shards.len()).map(|p| rng::stream(seed, p)).collect();
    let mut objectives = vec![checked_objective(program, &state.values, full, 0)?];
    let mut trajectory = vec![state.values.clone()];
    let mut step_deltas = Vec::new();
    let mut evaluations = 0u64;

    while !stop.should_stop(&objectives) {
        let clock = state.clock;
        for step in 0..program.steps_per_iteration() {
            let values = &state.values;
            let partials: Vec<Payload> = shards
                .par_iter()
                .zip(rngs.par_iter_mut())
                .map(|(shard, rng)| program.delta(values, shard, step, clock, rng))
                .collect();
            evaluations += shards.iter().map(|s| program.step_evaluations(s)).sum::<u64>();
            let mut merged = Payload::empty();
            for p in &partials {
                merged.merge(p);
            }
            program.aggregate(&mut state.values, step, &merged);
            step_deltas.push(merged);
        }
        state.clock += 1;
        objectives.push(checked_objective(
            program,
            &state.values,
            full,
            state.clock,
        )?);
        trajectory.push(state.values.clone());
    }

    Ok(RunOutput {
        metrics: records(&objectives),
        state,
        trajectory,
        step_deltas,
        evaluations,
    })
}

/// Runs `program` model-parallel: each round the scheduler hands every worker a
/// work unit; workers compute against `A(t-1)` and their increments are merged
/// in worker order.
pub fn run_model_parallel<P, S>(
    program: &P,
    data: &P::Data,
    workers: usize,
    scheduler: &mut S,
    stop: &StoppingCriterion,
    seed: u64,
) -> Result<RunOutput, EngineError>
where
    P: IcProgram,
    S: ScheduleSource<P::Work> + ?Sized,
{
    let mut state = program.initial_state(data, seed);
    let mut rngs: Vec<Rng> = (0..workers).map(|p| rng::stream(seed, p)).collect();
    let mut objectives = vec![checked_objective(program, &state.values, data, 0)?];
    let mut trajectory = vec![state.values.clone()];
    let mut evaluations = 0u64;

    while !stop.should_stop(&objectives) {
        let round = state.clock;
        let works = scheduler.round(round, &state.values)?;
        if works.len() != workers {
            return Err(EngineError::WorkerCount {
                expected: workers,
                got: works.len(),
            });
        }
        check_disjoint(program, &works, round)?;

        let values = &state.values;
        let deltas: Vec<Payload> = works
            .par_iter()
            .zip(rngs.par_iter_mut())
            .map(|(work, rng)| program.delta_on(values, data, work, round, rng))
            .collect();
        evaluations += works.iter().map(|w| program.evaluations(data, w)).sum::<u64>();
        for d in &deltas {
            program.merge(&mut state.values, d);
            scheduler.observe(d);
        }
        state.clock += 1;
        objectives.push(checked_objective(
            program,
            &state.values,
            data,
            state.clock,
        )?);
        trajectory.push(state.values.clone());
    }

    Ok(RunOutput {
        metrics: records(&objectives),
        state,
        trajectory,
        step_deltas: Vec::new(),
        evaluations,
    })
}

/// Fails if two work units in one round own the same model index.
pub fn check_disjoint<P: IcProgram>(
    program: &P,
    works: &[P::Work],
    round: u64,
) -> Result<(), EngineError> {
    let mut seen = HashSet::new();
    for w in works {
        for idx in program.owned_indices(w) {
            if !seen.insert(idx) {
                return Err(EngineError::ScheduleOverlap { round, index: idx });
            }
        }
    }
    Ok(())
}

fn records(objectives: &[f64]) -> Vec<IterationRecord> {
    objectives
        .iter()
        .enumerate()
        .map(|(i, &objective)| IterationRecord {
            iteration: i as u64,
            objective,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopping_rejects_bad_parameters() {
        assert!(StoppingCriterion::new(0, 1e-6, 1).is_err());
        assert!(StoppingCriterion::new(10, 0.0, 1).is_err());
        assert!(StoppingCriterion::new(10, f64::NAN, 1).is_err());
        assert!(StoppingCriterion::new(10, 1e-6, 0).is_err());
        assert!(StoppingCriterion::new(1, 1e-6, 1).is_ok());
    }

    #[test]
    fn stopping_uses_window() {
        let stop = StoppingCriterion::new(100, 1e-3, 2).unwrap();
        assert!(!stop.should_stop(&[10.0]));
        assert!(!stop.should_stop(&[10.0, 5.0]));
        assert!(!stop.should_stop(&[10.0, 5.0, 4.0]));
        assert!(stop.should_stop(&[10.0, 5.0, 4.0, 4.0, 3.9999]));
        let cap = StoppingCriterion::iterations(3).unwrap();
        assert!(cap.should_stop(&[4.0, 3.0, 2.0, 1.0]));
    }

    #[test]
    fn ranges_partition() {
        let r = split_ranges(10, 3);
        assert_eq!(r, vec![0..4, 4..7, 7..10]);
        assert_eq!(split_ranges(2, 4).iter().map(|r| r.len()).sum::<usize>(), 2);
    }
}
