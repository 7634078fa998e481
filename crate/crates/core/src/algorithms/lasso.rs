use crate::engine::{EngineError, IcProgram, ModelState, Payload, Shardable, SparseVec};
use crate::matrix::{dot, DenseMatrix};
use crate::rng::Rng;
use crate::sched::DependencyOracle;

use super::AlgoError;

/// `sign(u)·max(|u| − λ, 0)`.
pub fn soft_threshold(u: f64, lambda: f64) -> f64 {
    debug_assert!(lambda >= 0.0);
    if u > lambda {
        u - lambda
    } else if u < -lambda {
        u + lambda
    } else {
        0.0
    }
}

/// Design matrix with unit-norm columns, response, and the cached products
/// every coordinate update needs.
#[derive(Debug, Clone)]
pub struct LassoData {
    x: DenseMatrix,
    y: Vec<f64>,
    /// Original column norms (1.0 for all-zero columns).
    scales: Vec<f64>,
    xty: Vec<f64>,
    gram: DenseMatrix,
    nnz: Vec<usize>,
}

impl LassoData {
    /// Normalizes the columns of `x` to unit length and caches `Xᵀy`, `XᵀX`.
    pub fn new(mut x: DenseMatrix, y: Vec<f64>) -> Result<Self, AlgoError> {
        if x.rows() != y.len() {
            return Err(AlgoError::Shape(format!(
                "X has {} rows but y has {} entries",
                x.rows(),
                y.len()
            )));
        }
        let mut scales = Vec::with_capacity(x.cols());
        for c in 0..x.cols() {
            let norm = crate::matrix::norm2(&x.column(c));
            let s = if norm > 0.0 { norm } else { 1.0 };
            for r in 0..x.rows() {
                x.set(r, c, x.get(r, c) / s);
            }
            scales.push(s);
        }
        Ok(Self::prepared(x, y, scales))
    }

    fn prepared(x: DenseMatrix, y: Vec<f64>, scales: Vec<f64>) -> Self {
        let xty = x.t_mul_vec(&y);
        let gram = x.gram();
        let nnz = (0..x.cols())
            .map(|c| (0..x.rows()).filter(|&r| x.get(r, c) != 0.0).count())
            .collect();
        Self {
            x,
            y,
            scales,
            xty,
            gram,
            nnz,
        }
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn m(&self) -> usize {
        self.x.cols()
    }

    pub fn xty(&self) -> &[f64] {
        &self.xty
    }

    pub fn gram(&self) -> &DenseMatrix {
        &self.gram
    }

    /// Nonzeros in column `j` (the per-update cost).
    pub fn column_nnz(&self, j: usize) -> usize {
        self.nnz[j]
    }

    /// Cost per coordinate update, for load balancing.
    pub fn coordinate_costs(&self) -> Vec<f64> {
        self.nnz.iter().map(|&k| k.max(1) as f64).collect()
    }

    /// Coefficients on the original (unnormalized) column scale.
    pub fn unscale(&self, a: &[f64]) -> Vec<f64> {
        a.iter().zip(&self.scales).map(|(a, s)| a / s).collect()
    }

    /// `0.1·max_j |X_·jᵀ y|`.
    pub fn default_lambda(&self) -> f64 {
        0.1 * self.xty.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl Shardable for LassoData {
    fn sample_count(&self) -> usize {
        self.n()
    }

    /// Row shards. Columns keep the global normalization.
    fn split(&self, parts: usize) -> Vec<Self> {
        crate::engine::split_ranges(self.n(), parts)
            .into_iter()
            .map(|r| {
                let idx: Vec<usize> = r.clone().collect();
                Self::prepared(
                    self.x.select_rows(&idx),
                    self.y[r].to_vec(),
                    self.scales.clone(),
                )
            })
            .collect()
    }
}

impl DependencyOracle for LassoData {
    fn dimension(&self) -> usize {
        self.m()
    }

    fn raw_weight(&self, j: usize, k: usize) -> f64 {
        self.gram.get(j, k)
    }
}

/// `u_j = X_·jᵀy − Σ_{k≠j} X_·jᵀX_·k A_k` for each `j` in `indices`.
pub fn lasso_delta(data: &LassoData, a: &[f64], indices: &[usize]) -> Result<Vec<f64>, AlgoError> {
    let m = data.m();
    if a.len() != m {
        return Err(AlgoError::Shape(format!("A has {} entries, expected {m}", a.len())));
    }
    indices
        .iter()
        .map(|&j| {
            if j >= m {
                Err(AlgoError::IndexOutOfRange { index: j, len: m })
            } else {
                Ok(coordinate_u(data, a, j))
            }
        })
        .collect()
}

fn coordinate_u(data: &LassoData, a: &[f64], j: usize) -> f64 {
    let g = data.gram.row(j);
    data.xty[j] - (dot(g, a) - g[j] * a[j])
}

/// Per-coordinate partial sums of `u` over one row shard. Summing the
/// results of a row partition gives the full-data `u`.
pub fn lasso_delta_data_parallel(shard: &LassoData, a: &[f64]) -> Vec<f64> {
    (0..shard.m()).map(|j| coordinate_u(shard, a, j)).collect()
}

/// Lasso by coordinate descent: `½‖y − XA‖² + λ‖A‖₁`.
#[derive(Debug, Clone)]
pub struct LassoProgram {
    m: usize,
    lambda: f64,
}

impl LassoProgram {
    pub fn new(m: usize, lambda: f64) -> Result<Self, AlgoError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(AlgoError::Parameter(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(Self { m, lambda })
    }

    /// λ chosen from the data (`0.1·max|Xᵀy|`).
    pub fn for_data(data: &LassoData) -> Result<Self, AlgoError> {
        Self::new(data.m(), data.default_lambda())
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn update(&self, data: &LassoData, u: f64, j: usize) -> f64 {
        let d = data.gram.get(j, j);
        if d > 0.0 {
            soft_threshold(u, self.lambda) / d
        } else {
            0.0
        }
    }
}

/// `½‖y − XA‖² + λ‖A‖₁`.
pub fn lasso_objective(data: &LassoData, a: &[f64], lambda: f64) -> f64 {
    let fit = data.x.mul_vec(a);
    let rss: f64 = data.y.iter().zip(&fit).map(|(y, f)| (y - f) * (y - f)).sum();
    0.5 * rss + lambda * a.iter().map(|v| v.abs()).sum::<f64>()
}

impl IcProgram for LassoProgram {
    type Data = LassoData;
    type Work = Vec<usize>;

    fn name(&self) -> &'static str {
        "lasso"
    }

    fn param_len(&self) -> usize {
        self.m
    }

    fn initial_state(&self, _data: &LassoData, _seed: u64) -> ModelState {
        ModelState::new(vec![0.0; self.m])
    }

    fn objective(&self, values: &[f64], data: &LassoData) -> Result<f64, EngineError> {
        if values.len() != data.m() {
            return Err(EngineError::ShapeMismatch {
                expected: data.m(),
                got: values.len(),
            });
        }
        Ok(lasso_objective(data, values, self.lambda))
    }

    /// One Gauss-Seidel sweep: step `j` updates coordinate `j`.
    fn steps_per_iteration(&self) -> usize {
        self.m
    }

    fn delta(&self, values: &[f64], shard: &LassoData, step: usize, _clock: u64, _rng: &mut Rng) -> Payload {
        let u = if shard.n() == 0 {
            0.0
        } else {
            coordinate_u(shard, values, step)
        };
        Payload::Sparse([(step, u)].into_iter().collect())
    }

    fn aggregate(&self, values: &mut [f64], step: usize, delta: &Payload) {
        let u = match delta {
            Payload::Sparse(s) => s.get(step),
            other => other.to_dense(self.m)[step],
        };
        values[step] = soft_threshold(u, self.lambda);
    }

    /// Sequential coordinate updates over `work` against `view`, returning the
    /// increments.
    fn delta_on(&self, view: &[f64], data: &LassoData, work: &Vec<usize>, _clock: u64, _rng: &mut Rng) -> Payload {
        let mut local = view.to_vec();
        for &j in work {
            let u = coordinate_u(data, &local, j);
            local[j] = self.update(data, u, j);
        }
        let mut out = SparseVec::new();
        for &j in work {
            out.add(j, local[j] - view[j]);
        }
        Payload::Sparse(out)
    }

    fn owned_indices(&self, work: &Vec<usize>) -> Vec<usize> {
        work.clone()
    }

    fn work_cost(&self, data: &LassoData, work: &Vec<usize>) -> f64 {
        work.iter().map(|&j| data.column_nnz(j).max(1) as f64).sum()
    }

    fn evaluations(&self, _data: &LassoData, work: &Vec<usize>) -> u64 {
        work.len() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_data_parallel, run_model_parallel, run_sequential, StoppingCriterion};
    use crate::rng;
    use crate::sched::FixedBlocks;
    use rand::Rng as _;

    fn random_problem(n: usize, m: usize, seed: u64) -> LassoData {
        let mut r = rng::coordinator(seed);
        let x = DenseMatrix::from_vec(n, m, (0..n * m).map(|_| r.random::<f64>() - 0.5).collect());
        let y = (0..n).map(|_| r.random::<f64>() - 0.5).collect();
        LassoData::new(x, y).unwrap()
    }

    /// Naive triple loop over the normalized design.
    fn naive_u(d: &LassoData, a: &[f64], j: usize) -> f64 {
        let (n, m) = (d.n(), d.m());
        let mut u = 0.0;
        for i in 0..n {
            u += d.x().get(i, j) * d.y()[i];
        }
        for k in 0..m {
            if k == j {
                continue;
            }
            let mut g = 0.0;
            for i in 0..n {
                g += d.x().get(i, j) * d.x().get(i, k);
            }
            u -= g * a[k];
        }
        u
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(2.0, 0.5), 1.5);
        assert_eq!(soft_threshold(-0.3, 0.5), 0.0);
        assert_eq!(soft_threshold(0.0, 3.0), 0.0);
        assert_eq!(soft_threshold(-2.0, 0.5), -1.5);
    }

    #[test]
    fn identity_design_u_values() {
        let d = LassoData::new(DenseMatrix::identity(2), vec![1.0, 0.2]).unwrap();
        assert_eq!(lasso_delta(&d, &[0.0, 0.0], &[0, 1]).unwrap(), vec![1.0, 0.2]);
        assert_eq!(lasso_delta(&d, &[0.5, 0.0], &[0]).unwrap(), vec![1.0]);
        assert!(matches!(
            lasso_delta(&d, &[0.0, 0.0], &[2]),
            Err(AlgoError::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn u_matches_naive_loop() {
        let d = random_problem(20, 10, 3);
        let mut r = rng::coordinator(9);
        let a: Vec<f64> = (0..10).map(|_| r.random::<f64>() - 0.5).collect();
        let all: Vec<usize> = (0..10).collect();
        let u = lasso_delta(&d, &a, &all).unwrap();
        for j in 0..10 {
            assert!((u[j] - naive_u(&d, &a, j)).abs() < 1e-10);
        }
    }

    #[test]
    fn shard_partials_sum_to_full_u() {
        let d = random_problem(20, 10, 4);
        let a: Vec<f64> = (0..10).map(|j| j as f64 * 0.1 - 0.4).collect();
        let all: Vec<usize> = (0..10).collect();
        let full = lasso_delta(&d, &a, &all).unwrap();
        // u_j = Σ_shards (x_pᵀy_p − Σ_{k≠j} G^p_jk A_k): partials over a row split
        let shards = d.split(2);
        let p0 = lasso_delta_data_parallel(&shards[0], &a);
        let p1 = lasso_delta_data_parallel(&shards[1], &a);
        for j in 0..10 {
            assert!((p0[j] + p1[j] - full[j]).abs() < 1e-9);
        }
        let one = lasso_delta_data_parallel(&d.split(1)[0], &a);
        assert_eq!(one, lasso_delta_data_parallel(&d, &a));
        let empty = LassoData::prepared(DenseMatrix::zeros(0, 10), vec![], vec![1.0; 10]);
        assert_eq!(lasso_delta_data_parallel(&empty, &a), vec![0.0; 10]);
    }

    #[test]
    fn objective_example() {
        let d = LassoData::new(DenseMatrix::identity(2), vec![1.0, 0.2]).unwrap();
        // ½(0.25 + 0.04) + 0.5·0.5
        let l = lasso_objective(&d, &[0.5, 0.0], 0.5);
        assert!((l - 0.395).abs() < 1e-15);
        assert!((lasso_objective(&d, &[0.0, 0.0], 0.5) - 0.52).abs() < 1e-15);
    }

    #[test]
    fn identity_design_converges_in_one_sweep() {
        let d = LassoData::new(DenseMatrix::identity(2), vec![1.0, 0.2]).unwrap();
        let p = LassoProgram::new(2, 0.5).unwrap();
        let stop = StoppingCriterion::new(50, 1e-12, 1).unwrap();
        let out = run_sequential(&p, &d, &stop, 1).unwrap();
        assert_eq!(out.trajectory[1], vec![0.5, 0.0]);
        assert_eq!(out.state.values, vec![0.5, 0.0]);
    }

    #[test]
    fn two_shard_aggregate_matches_sequential_deltas() {
        let d = random_problem(40, 8, 5);
        let p = LassoProgram::for_data(&d).unwrap();
        let stop = StoppingCriterion::iterations(5).unwrap();
        let seq = run_sequential(&p, &d, &stop, 1).unwrap();
        let par = run_data_parallel(&p, &d, &d.split(2), 2, &stop, 1).unwrap();
        for (a, b) in seq.step_deltas.iter().zip(&par.step_deltas) {
            let (a, b) = (a.to_dense(8), b.to_dense(8));
            for j in 0..8 {
                assert!((a[j] - b[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn orthogonal_model_parallel_matches_sequential() {
        // orthogonal columns: a scaled permutation-free identity with extra rows
        let mut x = DenseMatrix::zeros(6, 4);
        for j in 0..4 {
            x.set(j, j, 1.0 + j as f64);
        }
        let y = vec![3.0, -2.0, 0.5, 1.0, 0.3, 0.0];
        let d = LassoData::new(x, y).unwrap();
        let p = LassoProgram::new(4, 0.4).unwrap();
        let stop = StoppingCriterion::iterations(3).unwrap();
        let seq = run_sequential(&p, &d, &stop, 1).unwrap();
        let mut blocks = FixedBlocks::new(4, 2).unwrap();
        let mp = run_model_parallel(&p, &d, 2, &mut blocks, &stop, 1).unwrap();
        for (a, b) in seq.state.values.iter().zip(&mp.state.values) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn empty_assignment_contributes_nothing() {
        let d = random_problem(10, 4, 6);
        let p = LassoProgram::for_data(&d).unwrap();
        let mut r = rng::stream(0, 0);
        let out = p.delta_on(&[0.0; 4], &d, &vec![], 0, &mut r);
        assert!(out.is_empty());
    }
}
