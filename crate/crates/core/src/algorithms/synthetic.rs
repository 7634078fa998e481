//! Deterministic synthetic datasets with known ground truth.

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{Corpus, MlrData};
use crate::matrix::DenseMatrix;
use crate::rng::{self, Rng};

/// Raw (unnormalized) Lasso instance and its planted coefficients.
#[derive(Debug, Clone)]
pub struct PlantedLasso {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    pub coef: Vec<f64>,
    pub support: Vec<usize>,
}

fn normal(r: &mut Rng) -> f64 {
    StandardNormal.sample(r)
}

fn plant(r: &mut Rng, m: usize, k_true: usize) -> (Vec<f64>, Vec<usize>) {
    let mut support = index::sample(r, m, k_true.min(m)).into_vec();
    support.sort_unstable();
    let mut coef = vec![0.0; m];
    for &j in &support {
        let mag = 1.0 + r.random::<f64>();
        coef[j] = if r.random::<bool>() { mag } else { -mag };
    }
    (coef, support)
}

fn respond(r: &mut Rng, x: &DenseMatrix, coef: &[f64], noise: f64) -> Vec<f64> {
    x.mul_vec(coef).into_iter().map(|v| v + noise * normal(r)).collect()
}

/// Gaussian design, `k_true` nonzero coefficients of magnitude in [1, 2).
pub fn planted_lasso(n: usize, m: usize, k_true: usize, noise: f64, seed: u64) -> PlantedLasso {
    let mut r = rng::coordinator(seed);
    let x = DenseMatrix::from_vec(n, m, (0..n * m).map(|_| normal(&mut r)).collect());
    let (coef, support) = plant(&mut r, m, k_true);
    let y = respond(&mut r, &x, &coef, noise);
    PlantedLasso { x, y, coef, support }
}

/// Columns in consecutive blocks of `block` share a latent factor, giving a
/// within-block correlation of about `rho` and near-zero correlation across
/// blocks.
pub fn block_correlated_lasso(
    n: usize,
    m: usize,
    block: usize,
    rho: f64,
    k_true: usize,
    noise: f64,
    seed: u64,
) -> PlantedLasso {
    let mut r = rng::coordinator(seed);
    let block = block.max(1);
    let blocks = m.div_ceil(block);
    let latent: Vec<Vec<f64>> = (0..blocks)
        .map(|_| (0..n).map(|_| normal(&mut r)).collect())
        .collect();
    let (a, b) = (rho.clamp(0.0, 1.0).sqrt(), (1.0 - rho.clamp(0.0, 1.0)).sqrt());
    let mut x = DenseMatrix::zeros(n, m);
    for j in 0..m {
        let z = &latent[j / block];
        for i in 0..n {
            x.set(i, j, a * z[i] + b * normal(&mut r));
        }
    }
    let (coef, support) = plant(&mut r, m, k_true);
    let y = respond(&mut r, &x, &coef, noise);
    PlantedLasso { x, y, coef, support }
}

/// Corpus drawn from an LDA-like generative process with power-law words.
#[derive(Debug, Clone)]
pub struct ZipfCorpus {
    pub corpus: Corpus,
    /// Generating topic-word distributions, `topics × vocab`.
    pub topics: Vec<Vec<f64>>,
}

fn draw(cdf: &[f64], r: &mut Rng) -> usize {
    let u = r.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    p.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Every topic is the Zipf law `1/(rank)^exponent` over the vocabulary with
/// its own words boosted, so the pooled word frequencies keep the power law.
/// Documents mix topics with Gamma(0.5) weights.
pub fn zipf_corpus(
    docs: usize,
    vocab: usize,
    topics: usize,
    doc_len: usize,
    exponent: f64,
    seed: u64,
) -> ZipfCorpus {
    let mut r = rng::coordinator(seed);
    let topics = topics.max(1);
    let base: Vec<f64> = (0..vocab).map(|w| 1.0 / ((w + 1) as f64).powf(exponent)).collect();
    let dists: Vec<Vec<f64>> = (0..topics)
        .map(|k| {
            let raw: Vec<f64> = base
                .iter()
                .enumerate()
                .map(|(w, b)| if w % topics == k { 4.0 * b } else { *b })
                .collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let cdfs: Vec<Vec<f64>> = dists.iter().map(|d| cumulative(d)).collect();
    let gamma = Gamma::new(0.5, 1.0).expect("valid gamma");
    let mut out = Vec::with_capacity(docs);
    for _ in 0..docs {
        let mix: Vec<f64> = (0..topics).map(|_| gamma.sample(&mut r) + 1e-12).collect();
        let mix_cdf = cumulative(&mix);
        let doc = (0..doc_len)
            .map(|_| draw(&cdfs[draw(&mix_cdf, &mut r)], &mut r))
            .collect();
        out.push(doc);
    }
    ZipfCorpus {
        corpus: Corpus::new(out, vocab).expect("words in range"),
        topics: dists,
    }
}

/// Linearly separable multiclass data and the weights that separate it.
#[derive(Debug, Clone)]
pub struct SeparableMlr {
    pub data: MlrData,
    /// `classes × features`, row-major.
    pub weights: Vec<f64>,
}

/// Gaussian features labelled by `argmax W·u`, keeping only samples whose
/// top score beats the runner-up by at least `margin`.
pub fn separable_mlr(n: usize, classes: usize, features: usize, margin: f64, seed: u64) -> SeparableMlr {
    let mut r = rng::coordinator(seed);
    let weights: Vec<f64> = (0..classes * features).map(|_| normal(&mut r)).collect();
    let mut x = Vec::with_capacity(n * features);
    let mut labels = Vec::with_capacity(n);
    while labels.len() < n {
        let u: Vec<f64> = (0..features).map(|_| normal(&mut r)).collect();
        let mut z: Vec<(f64, usize)> = weights
            .chunks_exact(features)
            .enumerate()
            .map(|(k, w)| (crate::matrix::dot(w, &u), k))
            .collect();
        z.sort_by(|a, b| b.0.total_cmp(&a.0));
        if classes > 1 && z[0].0 - z[1].0 < margin {
            continue;
        }
        labels.push(z[0].1);
        x.extend(u);
    }
    SeparableMlr {
        data: MlrData::new(DenseMatrix::from_vec(n, features, x), labels, classes)
            .expect("labels in range"),
        weights,
    }
}

/// Least-squares slope of log frequency against log rank over the `top`
/// most frequent words.
pub fn rank_frequency_slope(corpus: &Corpus, top: usize) -> f64 {
    let mut counts = vec![0usize; corpus.vocab()];
    for &w in corpus.docs().iter().flatten() {
        counts[w] += 1;
    }
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let pts: Vec<(f64, f64)> = counts
        .iter()
        .take(top)
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (((i + 1) as f64).ln(), (c as f64).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        let a = planted_lasso(30, 8, 3, 0.1, 7);
        let b = planted_lasso(30, 8, 3, 0.1, 7);
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_eq!(a.support.len(), 3);
        assert_ne!(planted_lasso(30, 8, 3, 0.1, 8).y, a.y);
    }

    #[test]
    fn zipf_slope_near_minus_one() {
        let z = zipf_corpus(400, 1000, 5, 100, 1.0, 3);
        let slope = rank_frequency_slope(&z.corpus, 100);
        assert!((slope + 1.0).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn separable_labels_agree_with_weights() {
        let s = separable_mlr(50, 3, 4, 0.5, 2);
        let p = super::super::MlrProgram::for_data(&s.data, 1).unwrap();
        assert_eq!(p.accuracy(&s.weights, &s.data), 1.0);
    }

    #[test]
    fn block_correlation_shows_up() {
        let p = block_correlated_lasso(400, 8, 4, 0.8, 2, 0.1, 1);
        let d = super::super::LassoData::new(p.x, p.y).unwrap();
        assert!(d.gram().get(0, 1) > 0.6);
        assert!(d.gram().get(0, 5).abs() < 0.3);
    }
}
