use super::SchedError;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Worker index for each input subset.
    pub worker_of: Vec<usize>,
    pub loads: Vec<f64>,
}

impl Assignment {
    pub fn makespan(&self) -> f64 {
        self.loads.iter().copied().fold(0.0, f64::max)
    }

    /// Subset indices grouped per worker, in input order.
    pub fn groups(&self, workers: usize) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); workers];
        for (i, &w) in self.worker_of.iter().enumerate() {
            g[w].push(i);
        }
        g
    }
}

/// Longest-processing-time bin packing: subsets in decreasing cost order, each
/// onto the currently least-loaded worker (lowest id on ties).
pub fn balance_load(costs: &[f64], workers: usize) -> Result<Assignment, SchedError> {
    if workers == 0 {
        return Err(SchedError::NoWorkers);
    }
    if let Some(&bad) = costs.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
        return Err(SchedError::BadCost(bad));
    }
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| costs[b].total_cmp(&costs[a]).then(a.cmp(&b)));
    let mut loads = vec![0.0f64; workers];
    let mut worker_of = vec![0; costs.len()];
    for i in order {
        let w = (0..workers)
            .min_by(|&a, &b| loads[a].total_cmp(&loads[b]).then(a.cmp(&b)))
            .unwrap();
        loads[w] += costs[i];
        worker_of[i] = w;
    }
    Ok(Assignment { worker_of, loads })
}

/// Extra passes a slow-worker-agnostic worker fits into an idle window:
/// `ceil(wait / pass)` (a pass that starts inside the window is completed).
pub fn slow_worker_extra_updates(wait_ticks: u64, pass_ticks: u64) -> u64 {
    if wait_ticks == 0 {
        return 0;
    }
    wait_ticks.div_ceil(pass_ticks.max(1))
}
