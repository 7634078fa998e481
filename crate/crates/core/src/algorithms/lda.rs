use std::ops::Range;

use rand::Rng as _;
use statrs::function::gamma::ln_gamma;

use crate::engine::{EngineError, IcProgram, ModelState, Payload, Shardable, SparseVec};
use crate::rng::{self, Rng};
use crate::sched::RotationBlock;

use super::AlgoError;

/// Bag of documents, each a list of word ids in `0..vocab`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    docs: Vec<Vec<usize>>,
    vocab: usize,
    /// Global index of the first document (non-zero for shards).
    doc_offset: usize,
    /// Global index of the first token of each document.
    token_start: Vec<usize>,
}

impl Corpus {
    pub fn new(docs: Vec<Vec<usize>>, vocab: usize) -> Result<Self, AlgoError> {
        if let Some(&w) = docs.iter().flatten().find(|&&w| w >= vocab) {
            return Err(AlgoError::IndexOutOfRange { index: w, len: vocab });
        }
        let mut token_start = Vec::with_capacity(docs.len());
        let mut t = 0;
        for d in &docs {
            token_start.push(t);
            t += d.len();
        }
        Ok(Self {
            docs,
            vocab,
            doc_offset: 0,
            token_start,
        })
    }

    pub fn docs(&self) -> &[Vec<usize>] {
        &self.docs
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn n_tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }

    pub fn doc_lengths(&self) -> Vec<usize> {
        self.docs.iter().map(Vec::len).collect()
    }

    pub fn doc_offset(&self) -> usize {
        self.doc_offset
    }

    /// Global token index of position `j` in local document `i`.
    pub fn token_index(&self, i: usize, j: usize) -> usize {
        self.token_start[i] + j
    }

    /// Global token ids visited when sampling `block`.
    pub fn tokens_in(&self, block: &RotationBlock) -> Vec<usize> {
        let mut out = Vec::new();
        for gi in block.docs.clone() {
            let i = gi - self.doc_offset;
            for (j, &w) in self.docs[i].iter().enumerate() {
                if block.contains_word(w) {
                    out.push(self.token_index(i, j));
                }
            }
        }
        out
    }
}

impl Shardable for Corpus {
    fn sample_count(&self) -> usize {
        self.docs.len()
    }

    fn split(&self, parts: usize) -> Vec<Self> {
        crate::engine::split_ranges(self.docs.len(), parts)
            .into_iter()
            .map(|r| Self {
                docs: self.docs[r.clone()].to_vec(),
                vocab: self.vocab,
                doc_offset: self.doc_offset + r.start,
                token_start: self.token_start[r].to_vec(),
            })
            .collect()
    }
}

/// Positions of the count tables inside the flat parameter vector:
/// `δ (N×K) | B (K×V) | topic totals (K) | z (one per token)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LdaLayout {
    pub docs: usize,
    pub topics: usize,
    pub vocab: usize,
    pub tokens: usize,
}

impl LdaLayout {
    pub fn doc_topic(&self, i: usize, k: usize) -> usize {
        i * self.topics + k
    }

    pub fn word_topic(&self, k: usize, v: usize) -> usize {
        self.docs * self.topics + k * self.vocab + v
    }

    pub fn topic_total(&self, k: usize) -> usize {
        self.docs * self.topics + self.topics * self.vocab + k
    }

    pub fn assignment(&self, token: usize) -> usize {
        self.docs * self.topics + self.topics * self.vocab + self.topics + token
    }

    pub fn len(&self) -> usize {
        self.assignment(0) + self.tokens
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counts(&self) -> Range<usize> {
        0..self.assignment(0)
    }
}

/// Collapsed Gibbs sampling for LDA with symmetric priors.
#[derive(Debug, Clone)]
pub struct LdaProgram {
    layout: LdaLayout,
    alpha: f64,
    beta: f64,
}

impl LdaProgram {
    /// Defaults `α = 50/K`, `β = 0.01`.
    pub fn new(corpus: &Corpus, topics: usize) -> Result<Self, AlgoError> {
        Self::with_priors(corpus, topics, 50.0 / topics.max(1) as f64, 0.01)
    }

    pub fn with_priors(corpus: &Corpus, topics: usize, alpha: f64, beta: f64) -> Result<Self, AlgoError> {
        if topics == 0 {
            return Err(AlgoError::Parameter("need at least one topic".into()));
        }
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(AlgoError::Parameter(format!(
                "priors must be positive (alpha = {alpha}, beta = {beta})"
            )));
        }
        Ok(Self {
            layout: LdaLayout {
                docs: corpus.n_docs() + corpus.doc_offset(),
                topics,
                vocab: corpus.vocab(),
                tokens: corpus.n_tokens(),
            },
            alpha,
            beta,
        })
    }

    pub fn layout(&self) -> &LdaLayout {
        &self.layout
    }

    pub fn topics(&self) -> usize {
        self.layout.topics
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Count tables consistent with the assignments stored in `values`.
    pub fn recount(&self, values: &mut [f64], corpus: &Corpus) {
        let lay = self.layout;
        values[lay.counts()].fill(0.0);
        for (i, doc) in corpus.docs().iter().enumerate() {
            let gi = i + corpus.doc_offset();
            for (j, &w) in doc.iter().enumerate() {
                let k = values[lay.assignment(corpus.token_index(i, j))] as usize;
                values[lay.doc_topic(gi, k)] += 1.0;
                values[lay.word_topic(k, w)] += 1.0;
                values[lay.topic_total(k)] += 1.0;
            }
        }
    }

    /// Checks the count invariants: non-negative, rows of δ sum to document
    /// lengths, totals match B and the assignments.
    pub fn check_counts(&self, values: &[f64], corpus: &Corpus) -> Result<(), AlgoError> {
        let lay = self.layout;
        let mut fresh = values.to_vec();
        self.recount(&mut fresh, corpus);
        if let Some(i) = lay.counts().find(|&i| values[i] < 0.0) {
            return Err(AlgoError::State(format!("negative count at {i}")));
        }
        if fresh[lay.counts()] != values[lay.counts()] {
            return Err(AlgoError::State("counts disagree with assignments".into()));
        }
        Ok(())
    }

    fn sample(&self, probs_unnorm: &[f64], rng: &mut Rng) -> usize {
        let total: f64 = probs_unnorm.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (k, &p) in probs_unnorm.iter().enumerate() {
            if u < p {
                return k;
            }
            u -= p;
        }
        probs_unnorm.len() - 1
    }

    fn weights(&self, values: &[f64], doc: usize, word: usize, out: &mut [f64]) {
        let lay = self.layout;
        let vb = lay.vocab as f64 * self.beta;
        for (k, o) in out.iter_mut().enumerate() {
            let d = values[lay.doc_topic(doc, k)].max(0.0);
            let b = values[lay.word_topic(k, word)].max(0.0);
            let n = values[lay.topic_total(k)].max(0.0);
            *o = (d + self.alpha) * (b + self.beta) / (n + vb);
        }
    }

    /// Resamples one token in place. Counts are clamped at zero when read,
    /// so stale views with transiently negative entries stay usable.
    fn resample(&self, values: &mut [f64], doc: usize, word: usize, token: usize, buf: &mut [f64], rng: &mut Rng, strict: bool) -> Result<usize, AlgoError> {
        let lay = self.layout;
        let old = values[lay.assignment(token)] as usize;
        if strict {
            for idx in [lay.doc_topic(doc, old), lay.word_topic(old, word), lay.topic_total(old)] {
                if values[idx] < 1.0 {
                    return Err(AlgoError::State(format!(
                        "removing token {token} would make count {idx} negative"
                    )));
                }
            }
        }
        values[lay.doc_topic(doc, old)] -= 1.0;
        values[lay.word_topic(old, word)] -= 1.0;
        values[lay.topic_total(old)] -= 1.0;
        self.weights(values, doc, word, buf);
        let new = self.sample(buf, rng);
        values[lay.doc_topic(doc, new)] += 1.0;
        values[lay.word_topic(new, word)] += 1.0;
        values[lay.topic_total(new)] += 1.0;
        values[lay.assignment(token)] = new as f64;
        Ok(new)
    }

    fn sweep(&self, values: &mut [f64], corpus: &Corpus, block: Option<&RotationBlock>, rng: &mut Rng) {
        let mut buf = vec![0.0; self.layout.topics];
        for (i, doc) in corpus.docs().iter().enumerate() {
            let gi = i + corpus.doc_offset();
            if let Some(b) = block {
                if !b.docs.contains(&gi) {
                    continue;
                }
            }
            for (j, &w) in doc.iter().enumerate() {
                if block.is_some_and(|b| !b.contains_word(w)) {
                    continue;
                }
                let t = corpus.token_index(i, j);
                let _ = self.resample(values, gi, w, t, &mut buf, rng, false);
            }
        }
    }

    fn diff(&self, before: &[f64], after: &[f64]) -> Payload {
        let mut out = SparseVec::new();
        for (k, (a, b)) in before.iter().zip(after).enumerate() {
            if a != b {
                out.add(k, b - a);
            }
        }
        Payload::Sparse(out)
    }
}

/// `P(z_ij = k | rest)` for the token at position `j` of document `doc`,
/// which must already be removed from the counts.
pub fn conditional_topic_distribution(model: &LdaProgram, values: &[f64], doc: usize, word: usize) -> Vec<f64> {
    let mut w = vec![0.0; model.topics()];
    model.weights(values, doc, word, &mut w);
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Removes token `j` of document `i`, samples its new topic from the
/// conditional and adds it back. Returns the new topic.
pub fn gibbs_token_update(
    model: &LdaProgram,
    values: &mut [f64],
    corpus: &Corpus,
    i: usize,
    j: usize,
    rng: &mut Rng,
) -> Result<usize, AlgoError> {
    let word = *corpus
        .docs()
        .get(i)
        .and_then(|d| d.get(j))
        .ok_or(AlgoError::IndexOutOfRange { index: j, len: corpus.docs().get(i).map_or(0, Vec::len) })?;
    let token = corpus.token_index(i, j);
    let mut buf = vec![0.0; model.topics()];
    model.resample(values, i + corpus.doc_offset(), word, token, &mut buf, rng, true)
}

/// Collapsed joint `log p(w, z)` with the Dirichlet normalizers.
pub fn lda_log_likelihood(model: &LdaProgram, values: &[f64], corpus: &Corpus) -> f64 {
    let lay = model.layout;
    let (k, v) = (lay.topics as f64, lay.vocab as f64);
    let (a, b) = (model.alpha, model.beta);
    let mut ll = 0.0;
    for t in 0..lay.topics {
        ll += ln_gamma(v * b) - v * ln_gamma(b);
        for w in 0..lay.vocab {
            ll += ln_gamma(values[lay.word_topic(t, w)].max(0.0) + b);
        }
        ll -= ln_gamma(values[lay.topic_total(t)].max(0.0) + v * b);
    }
    for (i, doc) in corpus.docs().iter().enumerate() {
        let gi = i + corpus.doc_offset();
        ll += ln_gamma(k * a) - k * ln_gamma(a);
        for t in 0..lay.topics {
            ll += ln_gamma(values[lay.doc_topic(gi, t)].max(0.0) + a);
        }
        ll -= ln_gamma(doc.len() as f64 + k * a);
    }
    ll
}

impl IcProgram for LdaProgram {
    type Data = Corpus;
    type Work = RotationBlock;

    fn name(&self) -> &'static str {
        "lda"
    }

    fn param_len(&self) -> usize {
        self.layout.len()
    }

    /// Uniformly random initial topics from the coordinator stream.
    fn initial_state(&self, corpus: &Corpus, seed: u64) -> ModelState {
        let mut r = rng::coordinator(seed);
        let mut values = vec![0.0; self.layout.len()];
        for t in 0..corpus.n_tokens() {
            values[self.layout.assignment(t)] = r.random_range(0..self.layout.topics) as f64;
        }
        self.recount(&mut values, corpus);
        ModelState::new(values)
    }

    /// Negative collapsed log-likelihood (lower is better).
    fn objective(&self, values: &[f64], corpus: &Corpus) -> Result<f64, EngineError> {
        if values.len() != self.layout.len() {
            return Err(EngineError::ShapeMismatch {
                expected: self.layout.len(),
                got: values.len(),
            });
        }
        Ok(-lda_log_likelihood(self, values, corpus))
    }

    /// A full sweep over the shard's tokens.
    fn delta(&self, values: &[f64], shard: &Corpus, _step: usize, _clock: u64, rng: &mut Rng) -> Payload {
        let mut local = values.to_vec();
        self.sweep(&mut local, shard, None, rng);
        self.diff(values, &local)
    }

    /// Count edits are increments, so F is the identity over them.
    fn aggregate(&self, values: &mut [f64], _step: usize, delta: &Payload) {
        delta.add_to(values);
    }

    fn delta_on(&self, view: &[f64], corpus: &Corpus, block: &RotationBlock, _clock: u64, rng: &mut Rng) -> Payload {
        let mut local = view.to_vec();
        self.sweep(&mut local, corpus, Some(block), rng);
        self.diff(view, &local)
    }

    /// Rows of δ for the block's documents, the B columns of its words and
    /// the assignments of its tokens. Topic totals are shared increments.
    fn owned_indices(&self, block: &RotationBlock) -> Vec<usize> {
        let lay = self.layout;
        let mut out = Vec::new();
        for i in block.docs.clone() {
            out.extend((0..lay.topics).map(|k| lay.doc_topic(i, k)));
        }
        for v in (0..lay.vocab).filter(|&v| block.contains_word(v)) {
            out.extend((0..lay.topics).map(|k| lay.word_topic(k, v)));
        }
        out
    }

    fn work_cost(&self, corpus: &Corpus, block: &RotationBlock) -> f64 {
        corpus.tokens_in(block).len().max(1) as f64
    }

    fn evaluations(&self, corpus: &Corpus, block: &RotationBlock) -> u64 {
        corpus.tokens_in(block).len() as u64
    }

    fn step_evaluations(&self, shard: &Corpus) -> u64 {
        shard.n_tokens() as u64
    }
}
