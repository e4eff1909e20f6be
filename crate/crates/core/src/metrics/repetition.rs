//! Repetition Evaluation (RE): the share of n-gram occurrences in a
//! description that repeat an n-gram already seen,
//! `Σ_k max(h_k − 1, 0) / Σ_k h_k` over the description's n-grams.

use super::ngram::ngram_counts;
use crate::error::{MftError, Result};
use crate::Token;

pub const DEFAULT_RE_N: usize = 4;

/// Redundancy score of one description. Returns 0 for descriptions shorter than `n`.
pub fn re_score(tokens: &[Token], n: usize) -> f64 {
    let grams = ngram_counts(tokens, n);
    let total = grams.total();
    if total == 0 {
        return 0.0;
    }
    let repeated: usize = grams.iter().map(|(_, h)| h.saturating_sub(1)).sum();
    repeated as f64 / total as f64
}

/// Mean [`re_score`] over a corpus of descriptions.
pub fn corpus_re<S: AsRef<[Token]>>(descriptions: &[S], n: usize) -> Result<f64> {
    if descriptions.is_empty() {
        return Err(MftError::contract("corpus_re over an empty corpus"));
    }
    let sum: f64 = descriptions.iter().map(|d| re_score(d.as_ref(), n)).sum();
    Ok(sum / descriptions.len() as f64)
}
