//! N-gram and subsequence overlap scores: BLEU and ROUGE-L F1.

use std::collections::HashMap;

use super::TokenSeq;

pub const MAX_NGRAM: usize = 4;
pub const NGRAM_WEIGHT: f64 = 0.25;

/// Clipped n-gram matches and candidate n-gram total for one order `n`.
pub fn clipped_matches(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    if candidate.len() < n {
        return (0, 0);
    }
    let mut ref_counts: HashMap<&[String], usize> = HashMap::new();
    for gram in reference.windows(n) {
        *ref_counts.entry(gram).or_default() += 1;
    }
    let mut cand_counts: HashMap<&[String], usize> = HashMap::new();
    for gram in candidate.windows(n) {
        *cand_counts.entry(gram).or_default() += 1;
    }
    let matched = cand_counts
        .iter()
        .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    (matched, candidate.len() - n + 1)
}

/// Sentence BLEU with uniform 1-4-gram weights and the standard brevity
/// penalty. Unsmoothed: any zero precision gives 0.
pub fn bleu(candidate: &TokenSeq, reference: &TokenSeq) -> f64 {
    let (cand, refs) = (candidate.as_slice(), reference.as_slice());
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut product = 1.0;
    for n in 1..=MAX_NGRAM {
        let (matched, total) = clipped_matches(cand, refs, n);
        if matched == 0 || total == 0 {
            return 0.0;
        }
        product *= matched as f64 / total as f64;
    }
    let (c, r) = (cand.len() as f64, refs.len() as f64);
    let brevity = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    (brevity * product.powf(NGRAM_WEIGHT)).clamp(0.0, 1.0)
}

/// Length of the longest common subsequence, two-row dynamic programme.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 over token sequences.
pub fn rouge_l_f1(candidate: &TokenSeq, reference: &TokenSeq) -> f64 {
    let (cand, refs) = (candidate.as_slice(), reference.as_slice());
    let l = lcs_len(cand, refs);
    if l == 0 {
        return 0.0;
    }
    let precision = l as f64 / cand.len() as f64;
    let recall = l as f64 / refs.len() as f64;
    2.0 * precision * recall / (precision + recall)
}
