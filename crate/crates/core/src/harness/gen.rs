use std::path::{Path, PathBuf};

use super::config::DataSpec;
use super::ini::Section;
use super::run::{materialize, Dataset};
use super::{io, write_file, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenKind {
    Lasso,
    Lda,
    Mlr,
}

impl GenKind {
    pub fn name(self) -> &'static str {
        match self {
            GenKind::Lasso => "lasso",
            GenKind::Lda => "lda",
            GenKind::Mlr => "mlr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lasso" => Some(GenKind::Lasso),
            "lda" => Some(GenKind::Lda),
            "mlr" => Some(GenKind::Mlr),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    /// Dataset files, readable back through `source = files`.
    pub data: Vec<PathBuf>,
    /// Ground truth the generator planted.
    pub truth: Vec<PathBuf>,
}

/// Writes a synthetic dataset and its ground truth into `out_dir`.
///
/// - lasso: `X.mtx`, `y.txt`; truth `coef.txt`, `support.txt`
/// - lda: `corpus.txt` (UCI bag-of-words); truth `topics.txt`, one topic per row
/// - mlr: `X.mtx`, `labels.txt`; truth `weights.txt`, one class per row
pub fn generate(kind: GenKind, params: &Section, seed: u64, out_dir: &Path) -> Result<Generated, HarnessError> {
    let spec = DataSpec::synthetic(kind.name(), params)?;
    let dataset = materialize(&spec, Path::new(""), seed)?;
    let p = |f: &str| out_dir.join(f);
    let mut files: Vec<(PathBuf, String, bool)> = Vec::new();
    match dataset {
        Dataset::Lasso { x, y, coef, support } => {
            files.push((p("X.mtx"), io::matrix_market_string(&x), false));
            files.push((p("y.txt"), io::vector_string(&y), false));
            if let (Some(c), Some(s)) = (coef, support) {
                files.push((p("coef.txt"), io::vector_string(&c), true));
                files.push((p("support.txt"), io::labels_string(&s), true));
            }
        }
        Dataset::Lda { corpus, topics } => {
            files.push((p("corpus.txt"), io::bag_of_words_string(&corpus), false));
            if let Some(t) = topics {
                let v = corpus.vocab();
                files.push((p("topics.txt"), io::table_string(&t.concat(), v), true));
            }
        }
        Dataset::Mlr { data, weights } => {
            files.push((p("X.mtx"), io::matrix_market_string(data.x()), false));
            files.push((p("labels.txt"), io::labels_string(data.labels()), false));
            if let Some(w) = weights {
                files.push((p("weights.txt"), io::table_string(&w, data.features()), true));
            }
        }
    }
    let mut out = Generated {
        data: Vec::new(),
        truth: Vec::new(),
    };
    for (path, text, truth) in files {
        write_file(&path, text)?;
        if truth {
            out.truth.push(path);
        } else {
            out.data.push(path);
        }
    }
    Ok(out)
}
