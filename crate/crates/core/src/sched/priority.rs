use rand::Rng as _;

use super::SchedError;
use crate::rng::Rng;

/// Per-parameter priority weights `(A_j(t-1) - A_j(t-2))² + ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityState {
    last_change_sq: Vec<f64>,
    tried: Vec<bool>,
    /// Largest squared change recorded so far (at least 1).
    peak_sq: f64,
    epsilon: f64,
}

impl PriorityState {
    /// No parameter has been tried yet. Untried parameters are weighted like
    /// the largest change seen so far, so every coordinate gets visited early
    /// instead of being starved by the first few that moved.
    pub fn new(m: usize) -> Self {
        Self {
            last_change_sq: vec![0.0; m],
            tried: vec![false; m],
            peak_sq: 1.0,
            epsilon: 1e-6,
        }
    }

    /// Every parameter counts as tried with the given last change.
    pub fn from_changes(changes: &[f64], epsilon: f64) -> Self {
        let sq: Vec<f64> = changes.iter().map(|c| c * c).collect();
        Self {
            peak_sq: sq.iter().copied().fold(1.0, f64::max),
            tried: vec![true; sq.len()],
            last_change_sq: sq,
            epsilon,
        }
    }

    pub fn len(&self) -> usize {
        self.last_change_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.last_change_sq.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn record(&mut self, j: usize, change: f64) {
        let sq = change * change;
        self.last_change_sq[j] = sq;
        self.tried[j] = true;
        if sq.is_finite() {
            self.peak_sq = self.peak_sq.max(sq);
        }
    }

    /// Raises a tried parameter's recorded change by `extra` (in change
    /// units, not squared).
    pub fn bump(&mut self, j: usize, extra: f64) {
        if self.tried[j] && extra > 0.0 {
            let c = self.last_change_sq[j].sqrt() + extra;
            self.last_change_sq[j] = c * c;
        }
    }

    pub fn weight(&self, j: usize) -> f64 {
        if self.tried[j] {
            self.last_change_sq[j] + self.epsilon
        } else {
            self.peak_sq + self.epsilon
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        let u = self.peak_sq;
        (0..self.len())
            .map(|j| if self.tried[j] { self.last_change_sq[j] } else { u } + self.epsilon)
            .collect()
    }
}

/// Draws `count` distinct indices, each draw proportional to the remaining weights.
pub fn prioritize_sample(
    priority: &PriorityState,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>, SchedError> {
    if count == 0 {
        return Err(SchedError::EmptySample);
    }
    let m = priority.len();
    if count > m {
        return Err(SchedError::SampleTooLarge { count, len: m });
    }
    let mut w = priority.weights();
    let mut total: f64 = w.iter().sum();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (j, &wj) in w.iter().enumerate() {
            if wj <= 0.0 {
                continue;
            }
            acc += wj;
            pick = Some(j);
            if target < acc {
                break;
            }
        }
        // Rounding can leave `target` just above the running sum; the last
        // positive weight is taken then.
        let j = pick.expect("positive weight remains while count <= m");
        out.push(j);
        total -= w[j];
        w[j] = 0.0;
        if total <= 0.0 {
            total = w.iter().sum();
        }
    }
    Ok(out)
}
