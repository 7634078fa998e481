use std::ops::Range;

use rand::Rng as _;

use super::SimError;
use crate::engine::StoppingCriterion;
use crate::fabric::{Codec, PriorityMode, Shape};
use crate::rng;

/// A worker running `factor`× slower during `[start, start + duration)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Straggler {
    pub worker: usize,
    pub factor: f64,
    pub start: u64,
    pub duration: u64,
}

impl Straggler {
    /// Slow for the whole run.
    pub fn always(worker: usize, factor: f64) -> Self {
        Self {
            worker,
            factor,
            start: 0,
            duration: u64::MAX,
        }
    }

    pub fn active_at(&self, tick: u64) -> bool {
        tick >= self.start && tick - self.start < self.duration
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub workers: usize,
    pub seed: u64,
    /// Bytes per tick on every link.
    pub bandwidth: u64,
    /// Ticks of propagation delay on every link.
    pub latency: u64,
    pub stragglers: Vec<Straggler>,
    /// Compute ticks per unit of `IcProgram::work_cost`.
    pub ticks_per_unit: f64,
    pub codec: Codec,
    pub priority: PriorityMode,
    /// Rate-limited, in-flight-bounded links (`false`: every message goes on
    /// the wire at once and shares bandwidth).
    pub managed: bool,
    /// In-flight budget per link; `None` derives one from bandwidth, latency
    /// and the largest possible message.
    pub window: Option<u64>,
    /// Matrix shape of the parameters for codecs and server sharding;
    /// `None` treats them as a vector.
    pub shape: Option<Shape>,
    pub stop: StoppingCriterion,
    /// Workers that would block run extra passes over their assignment
    /// instead of idling.
    pub slow_worker_passes: bool,
    pub record_trajectory: bool,
    /// Hard cap on simulated time.
    pub max_ticks: u64,
}

impl SimConfig {
    pub fn new(workers: usize, seed: u64) -> Self {
        Self {
            workers,
            seed,
            bandwidth: 4096,
            latency: 2,
            stragglers: Vec::new(),
            ticks_per_unit: 0.01,
            codec: Codec::Full,
            priority: PriorityMode::Fifo,
            managed: true,
            window: None,
            shape: None,
            stop: StoppingCriterion::iterations(50).expect("valid"),
            slow_worker_passes: false,
            record_trajectory: false,
            max_ticks: 100_000_000,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.workers == 0 {
            return Err(SimError::Config("need at least one worker".into()));
        }
        if self.bandwidth == 0 {
            return Err(SimError::Config("bandwidth must be positive".into()));
        }
        if !(self.ticks_per_unit > 0.0) || !self.ticks_per_unit.is_finite() {
            return Err(SimError::Config(format!(
                "ticks_per_unit must be positive, got {}",
                self.ticks_per_unit
            )));
        }
        for s in &self.stragglers {
            check_straggler(self.workers, s.worker, s.factor)?;
        }
        Ok(())
    }

    /// Product of the slowdowns active for `worker` at `tick`.
    pub fn slowdown(&self, worker: usize, tick: u64) -> f64 {
        self.stragglers
            .iter()
            .filter(|s| s.worker == worker && s.active_at(tick))
            .map(|s| s.factor)
            .product()
    }

    /// Ticks for a compute step of `cost` units started at `tick`.
    pub fn compute_ticks(&self, worker: usize, cost: f64, tick: u64) -> u64 {
        let t = (cost * self.ticks_per_unit * self.slowdown(worker, tick)).ceil();
        if t.is_finite() && t >= 1.0 {
            t as u64
        } else {
            1
        }
    }
}

fn check_straggler(workers: usize, worker: usize, factor: f64) -> Result<(), SimError> {
    if worker >= workers {
        return Err(SimError::Config(format!(
            "straggler names worker {worker} but there are {workers}"
        )));
    }
    if !(factor >= 1.0) || !factor.is_finite() {
        return Err(SimError::Config(format!(
            "straggler factor must be >= 1, got {factor}"
        )));
    }
    Ok(())
}

/// Adds a slowdown of `factor` for `worker` over the tick `window`.
pub fn inject_straggler(
    config: &SimConfig,
    worker: usize,
    factor: f64,
    window: Range<u64>,
) -> Result<SimConfig, SimError> {
    check_straggler(config.workers, worker, factor)?;
    let mut out = config.clone();
    if factor > 1.0 && window.end > window.start {
        out.stragglers.push(Straggler {
            worker,
            factor,
            start: window.start,
            duration: window.end - window.start,
        });
    }
    Ok(out)
}

/// `count` stragglers with random workers, factors in `[1, max_factor]` and
/// windows inside `[0, horizon)`.
pub fn random_stragglers(
    config: &SimConfig,
    count: usize,
    max_factor: f64,
    horizon: u64,
    seed: u64,
) -> Result<SimConfig, SimError> {
    let mut r = rng::coordinator(seed);
    let mut out = config.clone();
    for _ in 0..count {
        let worker = r.random_range(0..config.workers);
        let factor = 1.0 + r.random::<f64>() * (max_factor - 1.0).max(0.0);
        let start = r.random_range(0..horizon.max(1));
        let len = r.random_range(1..=horizon.max(1));
        out = inject_straggler(&out, worker, factor, start..start.saturating_add(len))?;
    }
    Ok(out)
}

/// One worker at a time is `factor`× slower; the slow worker is redrawn
/// every `period` ticks up to `horizon`.
pub fn rotating_straggler(
    config: &SimConfig,
    factor: f64,
    period: u64,
    horizon: u64,
    seed: u64,
) -> Result<SimConfig, SimError> {
    let mut r = rng::coordinator(seed);
    let mut out = config.clone();
    let period = period.max(1);
    let mut start = 0;
    while start < horizon {
        let worker = r.random_range(0..config.workers);
        out = inject_straggler(&out, worker, factor, start..start + period)?;
        start += period;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_one_is_a_no_op() {
        let c = SimConfig::new(4, 1);
        assert_eq!(inject_straggler(&c, 2, 1.0, 0..100).unwrap(), c);
    }

    #[test]
    fn straggler_scales_in_window_only() {
        let c = inject_straggler(&SimConfig::new(4, 1), 2, 5.0, 10..20).unwrap();
        assert_eq!(c.compute_ticks(2, 300.0, 9), 3);
        assert_eq!(c.compute_ticks(2, 300.0, 10), 15);
        assert_eq!(c.compute_ticks(2, 300.0, 20), 3);
        assert_eq!(c.compute_ticks(1, 300.0, 15), 3);
        assert_eq!(c.compute_ticks(0, 0.0, 0), 1);
    }

    #[test]
    fn bad_stragglers_rejected() {
        let c = SimConfig::new(4, 1);
        assert!(inject_straggler(&c, 4, 2.0, 0..1).is_err());
        assert!(inject_straggler(&c, 0, 0.5, 0..1).is_err());
    }

    #[test]
    fn random_schedules_reproduce() {
        let c = SimConfig::new(4, 1);
        let a = random_stragglers(&c, 5, 4.0, 1000, 9).unwrap();
        assert_eq!(a, random_stragglers(&c, 5, 4.0, 1000, 9).unwrap());
        assert_eq!(a.stragglers.len(), 5);
        let r = rotating_straggler(&c, 5.0, 100, 1000, 3).unwrap();
        assert_eq!(r.stragglers.len(), 10);
        assert!(r.validate().is_ok());
    }
}
