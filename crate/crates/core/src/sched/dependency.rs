use std::fmt::Write as _;

use log::warn;

use super::SchedError;

/// Pairwise dependency weights between parameters.
///
/// For Lasso this is `|X_·jᵀ X_·k|` on unit-normalized columns, so weights lie
/// in `[0, 1]` and are symmetric.
pub trait DependencyOracle {
    fn dimension(&self) -> usize;
    fn raw_weight(&self, j: usize, k: usize) -> f64;
}

pub fn dependency_check<D: DependencyOracle + ?Sized>(
    j: usize,
    k: usize,
    data: &D,
) -> Result<f64, SchedError> {
    if j == k {
        return Err(SchedError::SelfDependency(j));
    }
    let m = data.dimension();
    for idx in [j, k] {
        if idx >= m {
            return Err(SchedError::OutOfRange { index: idx, len: m });
        }
    }
    Ok(data.raw_weight(j, k).abs())
}

/// One round of independent subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetRound {
    /// Disjoint groups; each group is updated sequentially by one worker.
    pub subsets: Vec<Vec<usize>>,
    /// Candidates dropped from oversized groups; they are not scheduled this round.
    pub deferred: Vec<usize>,
    /// Number of pairwise checks performed.
    pub checks: usize,
}

/// Connected components of the thresholded dependency graph over `candidates`.
///
/// Any pair with weight `≥ kappa` ends up in the same subset, so pairs across
/// subsets are all `< kappa`. A component larger than `max_subset` is trimmed
/// to its first `max_subset` members in candidate order and the rest are
/// deferred, which keeps every emitted round free of cross-subset dependencies.
pub fn build_independent_subsets<D: DependencyOracle + ?Sized>(
    candidates: &[usize],
    kappa: f64,
    data: &D,
    max_subset: Option<usize>,
) -> Result<SubsetRound, SchedError> {
    let n = candidates.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    let mut checks = 0;
    for a in 0..n {
        for b in a + 1..n {
            checks += 1;
            if dependency_check(candidates[a], candidates[b], data)? >= kappa {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }

    // Components keyed by root, in order of first appearance among candidates.
    let mut order: Vec<usize> = Vec::new();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if members[r].is_empty() {
            order.push(r);
        }
        members[r].push(candidates[i]);
    }

    let mut round = SubsetRound {
        subsets: order.iter().map(|&r| members[r].clone()).collect(),
        deferred: Vec::new(),
        checks,
    };
    if let Some(cap) = max_subset {
        round.trim(cap);
    }
    Ok(round)
}

impl SubsetRound {
    /// Cuts every subset down to `cap` members, moving the rest to `deferred`.
    pub fn trim(&mut self, cap: usize) {
        let cap = cap.max(1);
        for s in self.subsets.iter_mut() {
            if s.len() > cap {
                warn!(
                    "dependency component of {} parameters exceeds cap {}; deferring {}",
                    s.len(),
                    cap,
                    s.len() - cap
                );
                self.deferred.extend(s.drain(cap..));
            }
        }
    }
}

/// Default component cap: four times the average subset size.
pub fn default_subset_cap(candidates: usize, components: usize) -> usize {
    if components == 0 {
        return candidates.max(1);
    }
    (4 * candidates).div_ceil(components).max(1)
}

/// Brute-force re-check: every pair of indices assigned to different workers
/// must have weight `< kappa`. Returns the offending pairs.
pub fn verify_round<D: DependencyOracle + ?Sized>(
    assignment: &[Vec<usize>],
    kappa: f64,
    data: &D,
) -> Vec<(usize, usize, f64)> {
    let mut bad = Vec::new();
    for p in 0..assignment.len() {
        for q in p + 1..assignment.len() {
            for &j in &assignment[p] {
                for &k in &assignment[q] {
                    let w = data.raw_weight(j, k).abs();
                    if j == k || w >= kappa {
                        bad.push((j, k, w));
                    }
                }
            }
        }
    }
    bad
}

/// Human-readable listing of a round: workers, their parameters, and the
/// largest cross-worker weight that was checked.
pub fn dump_round<D: DependencyOracle + ?Sized>(
    round: u64,
    assignment: &[Vec<usize>],
    data: &D,
) -> String {
    let mut out = String::new();
    let mut max_cross = 0.0f64;
    let mut pairs = 0usize;
    for p in 0..assignment.len() {
        for q in p + 1..assignment.len() {
            for &j in &assignment[p] {
                for &k in &assignment[q] {
                    pairs += 1;
                    max_cross = max_cross.max(data.raw_weight(j, k).abs());
                }
            }
        }
    }
    let _ = writeln!(
        out,
        "round {round}: {pairs} cross-worker pairs checked, max weight {max_cross:.6}"
    );
    for (p, set) in assignment.iter().enumerate() {
        let _ = writeln!(out, "  worker {p}: {set:?}");
    }
    out
}
