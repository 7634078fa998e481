//! Dataset file formats: Matrix Market coordinate matrices, whitespace
//! vectors, UCI bag-of-words corpora and integer label columns.

use std::fmt::Write as _;
use std::path::Path;

use super::{read_file, write_file, HarnessError};
use crate::algorithms::Corpus;
use crate::matrix::DenseMatrix;

fn bad(path: &Path, line: usize, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("{}:{line}: {msg}", path.display()))
}

/// Nonzeros as `%%MatrixMarket matrix coordinate real general`, 1-based.
pub fn matrix_market_string(x: &DenseMatrix) -> String {
    let nnz = x.as_slice().iter().filter(|v| **v != 0.0).count();
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{} {} {nnz}", x.rows(), x.cols());
    for i in 0..x.rows() {
        for (j, v) in x.row(i).iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(out, "{} {} {v:e}", i + 1, j + 1);
            }
        }
    }
    out
}

pub fn parse_matrix_market(text: &str, path: &Path) -> Result<DenseMatrix, HarnessError> {
    let mut lines = text.lines().enumerate();
    let (_, banner) = lines.next().ok_or_else(|| bad(path, 1, "empty file"))?;
    let banner_l = banner.to_ascii_lowercase();
    let fields: Vec<&str> = banner_l.split_whitespace().collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(bad(path, 1, "missing %%MatrixMarket matrix banner"));
    }
    if fields[2] != "coordinate" || !["real", "integer"].contains(&fields[3]) || fields[4] != "general" {
        return Err(bad(path, 1, format!("unsupported format `{}` (need coordinate real general)", banner.trim())));
    }
    let mut body = lines.filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('%'));
    let (hl, header) = body.next().ok_or_else(|| bad(path, 2, "missing size line"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<Result<_, _>>()
        .map_err(|_| bad(path, hl + 1, "size line must be `rows cols nnz`"))?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(bad(path, hl + 1, "size line must be `rows cols nnz`"));
    };
    let mut x = DenseMatrix::zeros(rows, cols);
    let mut seen = 0;
    for (n, line) in body {
        let t: Vec<&str> = line.split_whitespace().collect();
        let parsed = match t[..] {
            [i, j, v] => i.parse::<usize>().ok().zip(j.parse::<usize>().ok()).zip(v.parse::<f64>().ok()),
            _ => None,
        };
        let ((i, j), v) = parsed.ok_or_else(|| bad(path, n + 1, "entry must be `row col value`"))?;
        if i == 0 || j == 0 || i > rows || j > cols {
            return Err(bad(path, n + 1, format!("entry ({i}, {j}) outside {rows}x{cols}")));
        }
        x.set(i - 1, j - 1, v);
        seen += 1;
    }
    if seen != nnz {
        return Err(bad(path, hl + 1, format!("header promises {nnz} entries, found {seen}")));
    }
    Ok(x)
}

pub fn read_matrix_market(path: &Path) -> Result<DenseMatrix, HarnessError> {
    parse_matrix_market(&read_file(path)?, path)
}

pub fn write_matrix_market(path: &Path, x: &DenseMatrix) -> Result<(), HarnessError> {
    write_file(path, matrix_market_string(x))
}

/// One value per line.
pub fn vector_string(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}\n")).collect()
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>, HarnessError> {
    let text = read_file(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        for tok in line.split_whitespace() {
            out.push(tok.parse().map_err(|_| bad(path, n + 1, format!("`{tok}` is not a number")))?);
        }
    }
    Ok(out)
}

/// Rows of a row-major `rows × cols` array, space separated.
pub fn table_string(values: &[f64], cols: usize) -> String {
    let mut out = String::new();
    for row in values.chunks(cols.max(1)) {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

/// Integer class ids, one per line.
pub fn labels_string(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>, HarnessError> {
    let text = read_file(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.trim()
                .parse()
                .map_err(|_| bad(path, n + 1, format!("`{}` is not a class id", l.trim())))
        })
        .collect()
}

/// UCI bag-of-words: `D`, `W`, `NNZ` header lines, then `docID wordID count`
/// triples, all 1-based. Token order within a document is by word id.
pub fn bag_of_words_string(corpus: &Corpus) -> String {
    let mut triples = Vec::new();
    for (d, doc) in corpus.docs().iter().enumerate() {
        let mut counts = std::collections::BTreeMap::new();
        for &w in doc {
            *counts.entry(w).or_insert(0usize) += 1;
        }
        triples.extend(counts.into_iter().map(|(w, c)| (d + 1, w + 1, c)));
    }
    let mut out = format!("{}\n{}\n{}\n", corpus.n_docs(), corpus.vocab(), triples.len());
    for (d, w, c) in triples {
        let _ = writeln!(out, "{d} {w} {c}");
    }
    out
}

pub fn parse_bag_of_words(text: &str, path: &Path) -> Result<Corpus, HarnessError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["D", "W", "NNZ"]) {
        let (n, l) = lines.next().ok_or_else(|| bad(path, 1, format!("missing {name} header line")))?;
        *slot = l.trim().parse().map_err(|_| bad(path, n + 1, format!("{name} must be an integer")))?;
    }
    let [docs_n, vocab, nnz] = header;
    let mut docs = vec![Vec::new(); docs_n];
    let mut seen = 0;
    for (n, line) in lines {
        let t: Vec<usize> = line
            .split_whitespace()
            .map(|x| x.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(path, n + 1, "entry must be `docID wordID count`"))?;
        let [d, w, c] = t[..] else {
            return Err(bad(path, n + 1, "entry must be `docID wordID count`"));
        };
        if d == 0 || d > docs_n || w == 0 || w > vocab {
            return Err(bad(path, n + 1, format!("doc {d} / word {w} outside D = {docs_n}, W = {vocab}")));
        }
        docs[d - 1].extend(std::iter::repeat_n(w - 1, c));
        seen += 1;
    }
    if seen != nnz {
        return Err(bad(path, 3, format!("header promises {nnz} entries, found {seen}")));
    }
    Corpus::new(docs, vocab).map_err(|e| bad(path, 1, e))
}

pub fn read_bag_of_words(path: &Path) -> Result<Corpus, HarnessError> {
    parse_bag_of_words(&read_file(path)?, path)
}
