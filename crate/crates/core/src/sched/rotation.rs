use std::ops::Range;
use std::sync::Arc;

use super::SchedError;

/// One worker's share of a rotation sub-epoch: a contiguous document range and
/// one word bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationBlock {
    pub docs: Range<usize>,
    pub word_part: usize,
    /// Membership mask over the vocabulary for `word_part`.
    pub words: Arc<Vec<bool>>,
}

impl RotationBlock {
    pub fn contains_word(&self, w: usize) -> bool {
        self.words.get(w).copied().unwrap_or(false)
    }
}

/// Documents split into `P` token-balanced contiguous ranges and words hashed
/// into `P` buckets. In sub-epoch `r`, worker `p` gets docs `D_p` and words
/// `V_{(p + r) mod P}`, so within a sub-epoch no two workers share a word.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationPlan {
    pub doc_ranges: Vec<Range<usize>>,
    pub word_bucket: Vec<usize>,
    masks: Vec<Arc<Vec<bool>>>,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn build_rotation_plan(
    doc_tokens: &[usize],
    vocab: usize,
    workers: usize,
) -> Result<RotationPlan, SchedError> {
    if workers == 0 {
        return Err(SchedError::NoWorkers);
    }
    if doc_tokens.len() < workers {
        return Err(SchedError::TooFewItems {
            items: doc_tokens.len(),
            workers,
            what: "documents",
        });
    }
    if vocab < workers {
        return Err(SchedError::TooFewItems {
            items: vocab,
            workers,
            what: "words",
        });
    }

    let total: usize = doc_tokens.iter().sum();
    let n = doc_tokens.len();
    let mut doc_ranges = Vec::with_capacity(workers);
    let mut start = 0;
    let mut acc = 0usize;
    for p in 0..workers {
        if p + 1 == workers {
            doc_ranges.push(start..n);
            break;
        }
        let target = total * (p + 1) / workers;
        // leave at least one document for each remaining part
        let max_end = n - (workers - p - 1);
        let mut end = start + 1;
        acc += doc_tokens[start];
        while end < max_end && acc + doc_tokens[end] <= target {
            acc += doc_tokens[end];
            end += 1;
        }
        doc_ranges.push(start..end);
        start = end;
    }

    let word_bucket: Vec<usize> = (0..vocab)
        .map(|w| (splitmix(w as u64) % workers as u64) as usize)
        .collect();
    let masks = (0..workers)
        .map(|b| Arc::new(word_bucket.iter().map(|&x| x == b).collect()))
        .collect();

    Ok(RotationPlan {
        doc_ranges,
        word_bucket,
        masks,
    })
}

impl RotationPlan {
    pub fn workers(&self) -> usize {
        self.doc_ranges.len()
    }

    pub fn block(&self, worker: usize, sub_epoch: u64) -> RotationBlock {
        let p = self.workers();
        let word_part = (worker + (sub_epoch % p as u64) as usize) % p;
        RotationBlock {
            docs: self.doc_ranges[worker].clone(),
            word_part,
            words: Arc::clone(&self.masks[word_part]),
        }
    }

    pub fn blocks(&self, sub_epoch: u64) -> Vec<RotationBlock> {
        (0..self.workers()).map(|p| self.block(p, sub_epoch)).collect()
    }

    /// Tokens of `docs` (as word-id lists) that fall inside `block`.
    pub fn tokens_in_block(docs: &[Vec<usize>], block: &RotationBlock) -> usize {
        docs[block.docs.clone()]
            .iter()
            .map(|d| d.iter().filter(|&&w| block.contains_word(w)).count())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_inputs() {
        assert!(build_rotation_plan(&[1, 1], 10, 3).is_err());
        assert!(build_rotation_plan(&[1, 1, 1], 2, 3).is_err());
        assert_eq!(build_rotation_plan(&[1], 1, 0), Err(SchedError::NoWorkers));
    }

    #[test]
    fn token_balanced_contiguous_ranges() {
        let plan = build_rotation_plan(&[10, 10, 10, 10, 1, 1, 1, 1], 20, 2).unwrap();
        assert_eq!(plan.doc_ranges, vec![0..2, 2..8]);
        let plan = build_rotation_plan(&[5, 5, 5, 5], 8, 4).unwrap();
        assert_eq!(plan.doc_ranges, vec![0..1, 1..2, 2..3, 3..4]);
    }

    #[test]
    fn sub_epochs_cover_every_block_once() {
        let p = 4;
        let plan = build_rotation_plan(&[3; 12], 40, p).unwrap();
        let mut seen = vec![vec![0; p]; p];
        for r in 0..p as u64 {
            let blocks = plan.blocks(r);
            let mut parts: Vec<_> = blocks.iter().map(|b| b.word_part).collect();
            parts.sort();
            assert_eq!(parts, (0..p).collect::<Vec<_>>());
            for (w, b) in blocks.iter().enumerate() {
                seen[w][b.word_part] += 1;
            }
        }
        assert!(seen.iter().flatten().all(|&c| c == 1));
    }
}
