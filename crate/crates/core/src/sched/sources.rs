use std::ops::Range;
use std::sync::Arc;

use rand::seq::index;

use super::{
    balance_load, build_independent_subsets, default_subset_cap, prioritize_sample,
    DependencyOracle, PriorityState, RotationBlock, RotationPlan, ScheduleSource, SchedError,
};
use crate::engine::Payload;
use crate::rng::{self, Rng};

/// One emitted SAP round, kept for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub clock: u64,
    pub assignment: Vec<Vec<usize>>,
    pub deferred: Vec<usize>,
    pub checks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SapConfig {
    pub workers: usize,
    pub kappa: f64,
    /// Candidates drawn per round; `None` means `max(8P, 32)`.
    pub pool_size: Option<usize>,
    /// Largest subset a worker gets; `None` means four times the average.
    pub subset_cap: Option<usize>,
    pub seed: u64,
}

impl SapConfig {
    pub fn new(workers: usize, seed: u64) -> Self {
        Self {
            workers,
            kappa: 0.1,
            pool_size: None,
            subset_cap: None,
            seed,
        }
    }

    pub fn pool(&self, m: usize) -> usize {
        self.pool_size
            .unwrap_or_else(|| (8 * self.workers).max(32))
            .min(m)
    }
}

/// Prioritized, dependency-checked, load-balanced coordinate scheduling.
pub struct SapScheduler<D: DependencyOracle> {
    data: Arc<D>,
    config: SapConfig,
    costs: Vec<f64>,
    priority: PriorityState,
    /// `Σ_k w_jk·δ_k` over changes observed since `j` was last updated. With
    /// signed weights (the Gram entries for Lasso) this is exactly how far the
    /// input to `j`'s own update has moved in the meantime.
    induced: Vec<f64>,
    /// The same sum restricted to dependent pairs, `|w_jk| ≥ κ`.
    induced_dep: Vec<f64>,
    rng: Rng,
    history: Vec<RoundRecord>,
}

impl<D: DependencyOracle> SapScheduler<D> {
    /// `costs[j]` is the cost of one update of parameter `j`.
    pub fn new(data: Arc<D>, costs: Vec<f64>, config: SapConfig) -> Result<Self, SchedError> {
        if config.workers == 0 {
            return Err(SchedError::NoWorkers);
        }
        let m = data.dimension();
        if m == 0 {
            return Err(SchedError::EmptySample);
        }
        assert_eq!(costs.len(), m, "one cost per parameter");
        Ok(Self {
            priority: PriorityState::new(m),
            induced: vec![0.0; m],
            induced_dep: vec![0.0; m],
            rng: rng::coordinator(config.seed),
            data,
            config,
            costs,
            history: Vec::new(),
        })
    }

    pub fn priority(&self) -> &PriorityState {
        &self.priority
    }

    pub fn history(&self) -> &[RoundRecord] {
        &self.history
    }

    pub fn config(&self) -> &SapConfig {
        &self.config
    }

    fn apply_induced(&mut self, model: &[f64]) {
        // A parameter whose neighbours moved is no longer at its conditional
        // optimum even if its own last step was tiny. Parameters at zero are
        // only woken by real dependencies: summed over many weak correlations
        // the shift is mostly noise, and most zeros stay zero.
        for j in 0..self.induced.len() {
            let all = std::mem::take(&mut self.induced[j]);
            let dep = std::mem::take(&mut self.induced_dep[j]);
            let extra = if model.get(j).is_some_and(|v| *v != 0.0) { all } else { dep };
            self.priority.bump(j, extra.abs());
        }
    }
}

impl<D: DependencyOracle> ScheduleSource<Vec<usize>> for SapScheduler<D> {
    fn round(&mut self, clock: u64, model: &[f64]) -> Result<Vec<Vec<usize>>, SchedError> {
        let m = self.data.dimension();
        self.apply_induced(model);
        let pool = self.config.pool(m);
        let candidates = prioritize_sample(&self.priority, pool, &mut self.rng)?;
        let mut groups =
            build_independent_subsets(&candidates, self.config.kappa, &*self.data, None)?;
        let cap = self
            .config
            .subset_cap
            .unwrap_or_else(|| default_subset_cap(candidates.len(), groups.subsets.len()));
        groups.trim(cap);

        let costs: Vec<f64> = groups
            .subsets
            .iter()
            .map(|s| s.iter().map(|&j| self.costs[j]).sum())
            .collect();
        let assign = balance_load(&costs, self.config.workers)?;
        let mut out = vec![Vec::new(); self.config.workers];
        for (i, s) in groups.subsets.iter().enumerate() {
            out[assign.worker_of[i]].extend_from_slice(s);
        }
        // Scheduled parameters sitting at zero drop to weight ε until a change
        // is observed; nonzero ones keep their last change, since a zero step
        // there only means their neighbours have not moved yet.
        for w in &out {
            for &j in w {
                if model.get(j).is_none_or(|v| *v == 0.0) {
                    self.priority.record(j, 0.0);
                }
            }
        }
        self.history.push(RoundRecord {
            clock,
            assignment: out.clone(),
            deferred: groups.deferred,
            checks: groups.checks,
        });
        Ok(out)
    }

    fn observe(&mut self, delta: &Payload) {
        let m = self.priority.len();
        let changed: Vec<(usize, f64)> = changes(delta).into_iter().filter(|&(k, _)| k < m).collect();
        for &(k, c) in &changed {
            self.priority.record(k, c);
            self.induced[k] = 0.0;
            self.induced_dep[k] = 0.0;
        }
        // Parameters updated alongside `k` did not see its change either.
        for &(k, c) in &changed {
            for j in (0..m).filter(|&j| j != k) {
                let w = self.data.raw_weight(j, k);
                self.induced[j] += w * c;
                if w.abs() >= self.config.kappa {
                    self.induced_dep[j] += w * c;
                }
            }
        }
    }
}

fn changes(delta: &Payload) -> Vec<(usize, f64)> {
    match delta {
        Payload::Sparse(s) => s.iter().collect(),
        Payload::Dense(v) => v.iter().copied().enumerate().filter(|(_, x)| *x != 0.0).collect(),
        Payload::Factors(_) => Vec::new(),
    }
}

fn deal(coords: &[usize], workers: usize) -> Vec<Vec<usize>> {
    let base = coords.len() / workers;
    let extra = coords.len() % workers;
    let mut out = Vec::with_capacity(workers);
    let mut start = 0;
    for p in 0..workers {
        let len = base + usize::from(p < extra);
        out.push(coords[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Uniformly random coordinates each round, with no dependency checks.
pub struct RandomParallel {
    m: usize,
    workers: usize,
    count: usize,
    rng: Rng,
}

impl RandomParallel {
    pub fn new(m: usize, workers: usize, count: usize, seed: u64) -> Result<Self, SchedError> {
        if workers == 0 {
            return Err(SchedError::NoWorkers);
        }
        if count == 0 {
            return Err(SchedError::EmptySample);
        }
        if count > m {
            return Err(SchedError::SampleTooLarge { count, len: m });
        }
        Ok(Self {
            m,
            workers,
            count,
            rng: rng::coordinator(seed),
        })
    }
}

impl ScheduleSource<Vec<usize>> for RandomParallel {
    fn round(&mut self, _clock: u64, _model: &[f64]) -> Result<Vec<Vec<usize>>, SchedError> {
        let picks = index::sample(&mut self.rng, self.m, self.count).into_vec();
        Ok(deal(&picks, self.workers))
    }
}

/// The next `count` coordinates in cyclic order each round.
pub struct RoundRobin {
    m: usize,
    workers: usize,
    count: usize,
    next: usize,
}

impl RoundRobin {
    pub fn new(m: usize, workers: usize, count: usize) -> Result<Self, SchedError> {
        if workers == 0 {
            return Err(SchedError::NoWorkers);
        }
        if count == 0 {
            return Err(SchedError::EmptySample);
        }
        if count > m {
            return Err(SchedError::SampleTooLarge { count, len: m });
        }
        Ok(Self {
            m,
            workers,
            count,
            next: 0,
        })
    }
}

impl ScheduleSource<Vec<usize>> for RoundRobin {
    fn round(&mut self, _clock: u64, _model: &[f64]) -> Result<Vec<Vec<usize>>, SchedError> {
        let picks: Vec<usize> = (0..self.count).map(|i| (self.next + i) % self.m).collect();
        self.next = (self.next + self.count) % self.m;
        Ok(deal(&picks, self.workers))
    }
}

/// Every worker keeps the same contiguous block of coordinates.
pub struct FixedBlocks {
    blocks: Vec<Vec<usize>>,
}

impl FixedBlocks {
    pub fn new(m: usize, workers: usize) -> Result<Self, SchedError> {
        if workers == 0 {
            return Err(SchedError::NoWorkers);
        }
        if m < workers {
            return Err(SchedError::TooFewItems {
                items: m,
                workers,
                what: "parameters",
            });
        }
        let all: Vec<usize> = (0..m).collect();
        Ok(Self {
            blocks: deal(&all, workers),
        })
    }
}

impl ScheduleSource<Vec<usize>> for FixedBlocks {
    fn round(&mut self, _clock: u64, _model: &[f64]) -> Result<Vec<Vec<usize>>, SchedError> {
        Ok(self.blocks.clone())
    }
}

/// LDA block rotation; clock `t` is sub-epoch `t mod P`.
pub struct RotationSchedule {
    plan: RotationPlan,
}

impl RotationSchedule {
    pub fn new(plan: RotationPlan) -> Self {
        Self { plan }
    }

    pub fn plan(&self) -> &RotationPlan {
        &self.plan
    }
}

impl ScheduleSource<RotationBlock> for RotationSchedule {
    fn round(&mut self, clock: u64, _model: &[f64]) -> Result<Vec<RotationBlock>, SchedError> {
        Ok(self.plan.blocks(clock))
    }
}

/// Data-parallel: each worker always processes its own sample range.
pub struct ShardSchedule {
    ranges: Vec<Range<usize>>,
}

impl ShardSchedule {
    pub fn new(samples: usize, workers: usize) -> Result<Self, SchedError> {
        if workers == 0 {
            return Err(SchedError::NoWorkers);
        }
        if samples < workers {
            return Err(SchedError::TooFewItems {
                items: samples,
                workers,
                what: "samples",
            });
        }
        Ok(Self {
            ranges: crate::engine::split_ranges(samples, workers),
        })
    }
}

impl ScheduleSource<Range<usize>> for ShardSchedule {
    fn round(&mut self, _clock: u64, _model: &[f64]) -> Result<Vec<Range<usize>>, SchedError> {
        Ok(self.ranges.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sched::verify_round;

    struct Blocky {
        m: usize,
        block: usize,
    }

    impl DependencyOracle for Blocky {
        fn dimension(&self) -> usize {
            self.m
        }
        fn raw_weight(&self, j: usize, k: usize) -> f64 {
            if j == k {
                1.0
            } else if j / self.block == k / self.block {
                0.8
            } else {
                0.01
            }
        }
    }

    #[test]
    fn sap_rounds_respect_threshold() {
        let data = Arc::new(Blocky { m: 60, block: 5 });
        let mut s = SapScheduler::new(Arc::clone(&data), vec![1.0; 60], SapConfig::new(4, 3)).unwrap();
        for t in 0..20 {
            let r = s.round(t, &[]).unwrap();
            assert_eq!(r.len(), 4);
            assert!(verify_round(&r, 0.1, &*data).is_empty());
            let mut all: Vec<usize> = r.concat();
            let n = all.len();
            all.sort();
            all.dedup();
            assert_eq!(all.len(), n);
        }
        assert_eq!(s.history().len(), 20);
    }

    #[test]
    fn neighbour_changes_raise_priority() {
        let data = Arc::new(Blocky { m: 10, block: 5 });
        let mut cfg = SapConfig::new(1, 1);
        cfg.pool_size = Some(10);
        cfg.subset_cap = Some(10);
        let mut s = SapScheduler::new(data, vec![1.0; 10], cfg).unwrap();
        // everything is scheduled at zero, so everything drops to ε
        assert_eq!(s.round(0, &[0.0; 10]).unwrap()[0].len(), 10);
        let mut d = crate::engine::SparseVec::new();
        d.add(0, 2.0);
        s.observe(&Payload::Sparse(d));
        let mut model = vec![1.0; 10];
        model[3] = 0.0;
        model[8] = 0.0;
        s.apply_induced(&model);
        let p = s.priority().clone();
        let w = |j: usize| p.weight(j) - p.epsilon();
        assert!((w(0) - 4.0).abs() < 1e-12);
        // same block: 0.8 · 2, whether at zero or not
        assert!((w(1) - 2.56).abs() < 1e-12);
        assert!((w(3) - 2.56).abs() < 1e-12);
        // other block: 0.01 · 2 counts only for nonzero parameters
        assert!((w(7) - 4e-4).abs() < 1e-12);
        assert_eq!(w(8), 0.0);
        // the shift is consumed once
        s.apply_induced(&model);
        assert_eq!(s.priority().weight(1), p.weight(1));
    }

    #[test]
    fn round_robin_cycles() {
        let mut r = RoundRobin::new(5, 2, 3).unwrap();
        assert_eq!(r.round(0, &[]).unwrap(), vec![vec![0, 1], vec![2]]);
        assert_eq!(r.round(1, &[]).unwrap(), vec![vec![3, 4], vec![0]]);
    }

    #[test]
    fn random_parallel_is_distinct() {
        let mut r = RandomParallel::new(10, 3, 7, 1).unwrap();
        let mut all = r.round(0, &[]).unwrap().concat();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 7);
    }

    #[test]
    fn fixed_blocks_cover() {
        let mut f = FixedBlocks::new(7, 3).unwrap();
        assert_eq!(
            f.round(0, &[]).unwrap(),
            vec![vec![0, 1, 2], vec![3, 4], vec![5, 6]]
        );
        assert!(FixedBlocks::new(2, 3).is_err());
    }
}
