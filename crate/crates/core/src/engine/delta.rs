use std::collections::BTreeMap;

/// Sparse index → value map. Never stores an explicit zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    entries: BTreeMap<usize, f64>,
}

impl SparseVec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `v` to entry `k`, dropping the entry if it cancels to zero.
    pub fn add(&mut self, k: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let e = self.entries.entry(k).or_insert(0.0);
        *e += v;
        if *e == 0.0 {
            self.entries.remove(&k);
        }
    }

    pub fn get(&self, k: usize) -> f64 {
        self.entries.get(&k).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn keys(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.keys().copied()
    }

    pub fn max_key(&self) -> Option<usize> {
        self.entries.keys().next_back().copied()
    }
}

impl FromIterator<(usize, f64)> for SparseVec {
    fn from_iter<I: IntoIterator<Item = (usize, f64)>>(iter: I) -> Self {
        let mut s = SparseVec::new();
        for (k, v) in iter {
            s.add(k, v);
        }
        s
    }
}

/// Low-rank update `Σ_i b_i c_iᵀ` over a `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorList {
    pub rows: usize,
    pub cols: usize,
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

impl FactorList {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            pairs: Vec::new(),
        }
    }

    pub fn push(&mut self, b: Vec<f64>, c: Vec<f64>) {
        assert_eq!(b.len(), self.rows, "factor b must have length K");
        assert_eq!(c.len(), self.cols, "factor c must have length D");
        self.pairs.push((b, c));
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Row-major `rows × cols` reconstruction. Pairs are summed in list order
    /// so the result is bit-reproducible.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        self.add_to(&mut out);
        out
    }

    pub fn add_to(&self, out: &mut [f64]) {
        for (b, c) in &self.pairs {
            for (r, &br) in b.iter().enumerate() {
                if br == 0.0 {
                    continue;
                }
                let row = &mut out[r * self.cols..(r + 1) * self.cols];
                for (o, &cc) in row.iter_mut().zip(c) {
                    *o += br * cc;
                }
            }
        }
    }
}

/// The body of an update Δ.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Dense(Vec<f64>),
    Sparse(SparseVec),
    Factors(FactorList),
}

impl Payload {
    pub fn empty() -> Self {
        Payload::Sparse(SparseVec::new())
    }

    /// Number of parameter keys the payload touches.
    pub fn key_count(&self) -> usize {
        match self {
            Payload::Dense(v) => v.len(),
            Payload::Sparse(s) => s.len(),
            Payload::Factors(f) => {
                if f.is_empty() {
                    0
                } else {
                    f.rows * f.cols
                }
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Payload::Dense(v) => v.is_empty(),
            Payload::Sparse(s) => s.is_empty(),
            Payload::Factors(f) => f.is_empty(),
        }
    }

    /// Additive application onto a flat parameter vector.
    pub fn add_to(&self, values: &mut [f64]) {
        match self {
            Payload::Dense(v) => {
                for (o, d) in values.iter_mut().zip(v) {
                    *o += d;
                }
            }
            Payload::Sparse(s) => {
                for (k, v) in s.iter() {
                    values[k] += v;
                }
            }
            Payload::Factors(f) => f.add_to(values),
        }
    }

    /// Dense image over `len` keys.
    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        self.add_to(&mut out);
        out
    }

    /// Largest key touched plus one (the minimum model length).
    pub fn extent(&self) -> usize {
        match self {
            Payload::Dense(v) => v.len(),
            Payload::Sparse(s) => s.max_key().map_or(0, |k| k + 1),
            Payload::Factors(f) => f.rows * f.cols,
        }
    }

    /// Sum of absolute entry magnitudes (the "accumulated change" of the update).
    pub fn abs_magnitude(&self) -> f64 {
        match self {
            Payload::Dense(v) => v.iter().map(|x| x.abs()).sum(),
            Payload::Sparse(s) => s.iter().map(|(_, v)| v.abs()).sum(),
            Payload::Factors(f) => f.reconstruct().iter().map(|x| x.abs()).sum(),
        }
    }

    /// Sum of `|δ_j / A_j|`, with `|A_j| < 1e-12` treated as `1e-12`.
    pub fn relative_magnitude(&self, model: &[f64]) -> f64 {
        let rel = |k: usize, v: f64| {
            let a = model.get(k).copied().unwrap_or(0.0).abs().max(1e-12);
            v.abs() / a
        };
        match self {
            Payload::Dense(v) => v.iter().enumerate().map(|(k, &x)| rel(k, x)).sum(),
            Payload::Sparse(s) => s.iter().map(|(k, v)| rel(k, v)).sum(),
            Payload::Factors(f) => f
                .reconstruct()
                .iter()
                .enumerate()
                .map(|(k, &x)| rel(k, x))
                .sum(),
        }
    }

    /// Additive merge. Like kinds merge natively (sparse union, factor
    /// concatenation); mixed kinds fall back to a dense sum.
    pub fn merge(&mut self, other: &Payload) {
        match (&mut *self, other) {
            (Payload::Sparse(a), Payload::Sparse(b)) => {
                for (k, v) in b.iter() {
                    a.add(k, v);
                }
            }
            (Payload::Factors(a), Payload::Factors(b)) if a.rows == b.rows && a.cols == b.cols => {
                a.pairs.extend(b.pairs.iter().cloned());
            }
            (Payload::Dense(a), b) => {
                if a.len() < b.extent() {
                    a.resize(b.extent(), 0.0);
                }
                b.add_to(a);
            }
            (a, b) => {
                if b.is_empty() {
                    return;
                }
                if a.is_empty() {
                    *a = b.clone();
                    return;
                }
                let len = a.extent().max(b.extent());
                let mut dense = a.to_dense(len);
                b.add_to(&mut dense);
                *a = Payload::Dense(dense);
            }
        }
    }
}

/// An update Δ committed by one worker at one clock.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDelta {
    pub payload: Payload,
    pub timestamp: u64,
    pub origin: usize,
}

impl UpdateDelta {
    pub fn new(payload: Payload, timestamp: u64, origin: usize) -> Self {
        Self {
            payload,
            timestamp,
            origin,
        }
    }
}
