use std::ops::Range;

use crate::engine::{EngineError, FactorList, IcProgram, ModelState, Payload, Shardable};
use crate::matrix::{dot, DenseMatrix};
use crate::rng::Rng;

use super::AlgoError;

/// Samples `u_i ∈ R^D` with class labels in `0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlrData {
    x: DenseMatrix,
    labels: Vec<usize>,
    classes: usize,
}

impl MlrData {
    pub fn new(x: DenseMatrix, labels: Vec<usize>, classes: usize) -> Result<Self, AlgoError> {
        if x.rows() != labels.len() {
            return Err(AlgoError::Shape(format!(
                "{} samples but {} labels",
                x.rows(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(AlgoError::IndexOutOfRange { index: l, len: classes });
        }
        Ok(Self { x, labels, classes })
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> usize {
        self.x.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl Shardable for MlrData {
    fn sample_count(&self) -> usize {
        self.len()
    }

    fn split(&self, parts: usize) -> Vec<Self> {
        crate::engine::split_ranges(self.len(), parts)
            .into_iter()
            .map(|r| Self {
                x: self.x.select_rows(&r.clone().collect::<Vec<_>>()),
                labels: self.labels[r].to_vec(),
                classes: self.classes,
            })
            .collect()
    }
}

/// `A·u` for a row-major `K × D` matrix.
fn scores(a: &[f64], d: usize, u: &[f64]) -> Vec<f64> {
    a.chunks_exact(d).map(|row| dot(row, u)).collect()
}

fn softmax(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

/// Cross-entropy of one sample under `A`.
fn sample_loss(a: &[f64], d: usize, u: &[f64], label: usize) -> f64 {
    let z = scores(a, d, u);
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[label]
}

/// Summed cross-entropy over `rows`.
pub fn mlr_loss(a: &[f64], data: &MlrData, rows: Range<usize>) -> f64 {
    rows.map(|i| sample_loss(a, data.features(), data.x.row(i), data.labels[i]))
        .sum()
}

/// `(b_i, c_i) = (softmax(A·u_i) − v_i, u_i)` for every sample in `rows`.
/// `Σ b_i c_iᵀ` is the gradient of the summed cross-entropy.
pub fn mlr_sufficient_factors(a: &[f64], data: &MlrData, rows: Range<usize>) -> Result<FactorList, AlgoError> {
    let (k, d) = (data.classes, data.features());
    if a.len() != k * d {
        return Err(AlgoError::Shape(format!("A has {} entries, expected {k}x{d}", a.len())));
    }
    if rows.is_empty() {
        return Err(AlgoError::Parameter("minibatch must contain at least one sample".into()));
    }
    if rows.end > data.len() {
        return Err(AlgoError::IndexOutOfRange { index: rows.end - 1, len: data.len() });
    }
    let mut out = FactorList::new(k, d);
    for i in rows {
        let u = data.x.row(i);
        let mut b = scores(a, d, u);
        softmax(&mut b);
        b[data.labels[i]] -= 1.0;
        out.push(b, u.to_vec());
    }
    Ok(out)
}

/// Multiclass logistic regression trained by minibatch SGD.
#[derive(Debug, Clone)]
pub struct MlrProgram {
    classes: usize,
    features: usize,
    eta0: f64,
    batch: usize,
}

impl MlrProgram {
    /// `η_t = eta0/√t`; `batch` samples per worker per clock.
    pub fn new(classes: usize, features: usize, eta0: f64, batch: usize) -> Result<Self, AlgoError> {
        if classes == 0 || features == 0 {
            return Err(AlgoError::Parameter("need at least one class and one feature".into()));
        }
        if !(eta0 > 0.0) {
            return Err(AlgoError::Parameter(format!("step size must be > 0, got {eta0}")));
        }
        if batch == 0 {
            return Err(AlgoError::Parameter("minibatch size must be at least 1".into()));
        }
        Ok(Self {
            classes,
            features,
            eta0,
            batch,
        })
    }

    pub fn for_data(data: &MlrData, batch: usize) -> Result<Self, AlgoError> {
        Self::new(data.classes(), data.features(), 0.1, batch)
    }

    pub fn step_size(&self, clock: u64) -> f64 {
        self.eta0 / ((clock + 1) as f64).sqrt()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Minibatch of `rows` used at `clock`: consecutive samples, cycling.
    fn minibatch(&self, rows: &Range<usize>, clock: u64) -> Vec<Range<usize>> {
        let len = rows.len();
        if len == 0 {
            return Vec::new();
        }
        let take = self.batch.min(len);
        let start = (clock as usize * take) % len;
        let end = start + take;
        if end <= len {
            vec![rows.start + start..rows.start + end]
        } else {
            vec![rows.start + start..rows.end, rows.start..rows.start + end - len]
        }
    }

    fn sgd_factors(&self, a: &[f64], data: &MlrData, rows: &Range<usize>, clock: u64) -> Payload {
        let mut f = FactorList::new(self.classes, self.features);
        let parts = self.minibatch(rows, clock);
        let count: usize = parts.iter().map(|r| r.len()).sum();
        if count == 0 {
            return Payload::Factors(f);
        }
        let scale = -self.step_size(clock) / count as f64;
        for part in parts {
            let sf = mlr_sufficient_factors(a, data, part).expect("shape checked by caller");
            for (mut b, c) in sf.pairs {
                b.iter_mut().for_each(|x| *x *= scale);
                f.push(b, c);
            }
        }
        Payload::Factors(f)
    }

    /// Fraction of samples whose arg-max score matches the label.
    pub fn accuracy(&self, a: &[f64], data: &MlrData) -> f64 {
        if data.is_empty() {
            return 1.0;
        }
        let right = (0..data.len())
            .filter(|&i| {
                let z = scores(a, self.features, data.x.row(i));
                let best = (0..z.len()).fold(0, |b, k| if z[k] > z[b] { k } else { b });
                best == data.labels[i]
            })
            .count();
        right as f64 / data.len() as f64
    }
}

impl IcProgram for MlrProgram {
    type Data = MlrData;
    type Work = Range<usize>;

    fn name(&self) -> &'static str {
        "mlr"
    }

    fn param_len(&self) -> usize {
        self.classes * self.features
    }

    fn initial_state(&self, _data: &MlrData, _seed: u64) -> ModelState {
        ModelState::new(vec![0.0; self.param_len()])
    }

    /// Mean cross-entropy over all samples.
    fn objective(&self, values: &[f64], data: &MlrData) -> Result<f64, EngineError> {
        if values.len() != self.param_len() {
            return Err(EngineError::ShapeMismatch {
                expected: self.param_len(),
                got: values.len(),
            });
        }
        if data.is_empty() {
            return Ok(0.0);
        }
        Ok(mlr_loss(values, data, 0..data.len()) / data.len() as f64)
    }

    fn delta(&self, values: &[f64], shard: &MlrData, _step: usize, clock: u64, _rng: &mut Rng) -> Payload {
        self.sgd_factors(values, shard, &(0..shard.len()), clock)
    }

    fn aggregate(&self, values: &mut [f64], _step: usize, delta: &Payload) {
        delta.add_to(values);
    }

    fn delta_on(&self, view: &[f64], data: &MlrData, rows: &Range<usize>, clock: u64, _rng: &mut Rng) -> Payload {
        self.sgd_factors(view, data, rows, clock)
    }

    /// Every worker writes the whole matrix additively; nothing is exclusive.
    fn owned_indices(&self, _rows: &Range<usize>) -> Vec<usize> {
        Vec::new()
    }

    fn work_cost(&self, _data: &MlrData, rows: &Range<usize>) -> f64 {
        (self.batch.min(rows.len()).max(1) * self.classes * self.features) as f64
    }

    fn evaluations(&self, _data: &MlrData, rows: &Range<usize>) -> u64 {
        self.batch.min(rows.len()) as u64
    }

    fn step_evaluations(&self, shard: &MlrData) -> u64 {
        self.batch.min(shard.len()) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    #[test]
    fn uniform_softmax_example() {
        let data = MlrData::new(DenseMatrix::from_vec(1, 2, vec![1.0, 0.0]), vec![0], 2).unwrap();
        let f = mlr_sufficient_factors(&[0.0; 4], &data, 0..1).unwrap();
        assert_eq!(f.pairs[0].0, vec![-0.5, 0.5]);
        assert_eq!(f.reconstruct(), vec![-0.5, 0.0, 0.5, 0.0]);
        let p = MlrProgram::for_data(&data, 1).unwrap();
        let l = p.objective(&[0.0; 4], &data).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn factors_match_finite_differences() {
        let mut r = rng::coordinator(5);
        let (k, d, n) = (3, 4, 6);
        let x = DenseMatrix::from_vec(n, d, (0..n * d).map(|_| r.random::<f64>() - 0.5).collect());
        let labels = (0..n).map(|_| r.random_range(0..k)).collect();
        let data = MlrData::new(x, labels, k).unwrap();
        let a: Vec<f64> = (0..k * d).map(|_| r.random::<f64>() - 0.5).collect();
        let g = mlr_sufficient_factors(&a, &data, 0..n).unwrap().reconstruct();
        let h = 1e-6;
        for e in 0..k * d {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap[e] += h;
            am[e] -= h;
            let fd = (mlr_loss(&ap, &data, 0..n) - mlr_loss(&am, &data, 0..n)) / (2.0 * h);
            let rel = (fd - g[e]).abs() / g[e].abs().max(fd.abs()).max(1e-3);
            assert!(rel < 1e-5, "entry {e}: fd {fd} vs {}", g[e]);
        }
    }

    #[test]
    fn reconstruction_rank_bounded_by_factor_count() {
        let mut r = rng::coordinator(8);
        let x = DenseMatrix::from_vec(2, 5, (0..10).map(|_| r.random::<f64>()).collect());
        let data = MlrData::new(x, vec![0, 3], 4).unwrap();
        let f = mlr_sufficient_factors(&[0.1; 20], &data, 0..2).unwrap();
        let m = DenseMatrix::from_vec(4, 5, f.reconstruct());
        assert!(m.rank(1e-9) <= 2);
    }

    #[test]
    fn minibatch_wraps_around() {
        let p = MlrProgram::new(2, 2, 0.1, 3).unwrap();
        assert_eq!(p.minibatch(&(10..15), 0), vec![10..13]);
        assert_eq!(p.minibatch(&(10..15), 1), vec![13..15, 10..11]);
        assert!(p.minibatch(&(4..4), 3).is_empty());
    }

    #[test]
    fn rejects_empty_minibatch_and_bad_labels() {
        let data = MlrData::new(DenseMatrix::zeros(1, 2), vec![1], 2).unwrap();
        assert!(mlr_sufficient_factors(&[0.0; 4], &data, 0..0).is_err());
        assert!(MlrData::new(DenseMatrix::zeros(1, 2), vec![2], 2).is_err());
    }
}
