//! BLEU with clipped n-gram precision and a closest-reference brevity penalty.

use super::ngram::ngram_counts;
use crate::error::{MftError, Result};
use crate::Token;

/// Numerator floor used by sentence-level smoothing.
pub const SMOOTHING_FLOOR: f64 = 1e-9;

/// Clipped matches and totals per order, plus lengths, for one hypothesis.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BleuStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

/// Reference length closest to `hyp_len`; ties go to the shorter reference.
pub fn closest_ref_len<R: AsRef<[Token]>>(hyp_len: usize, refs: &[R]) -> usize {
    refs.iter()
        .map(|r| r.as_ref().len())
        .min_by_key(|&l| (l.abs_diff(hyp_len), l))
        .unwrap_or(0)
}

pub fn bleu_stats<R: AsRef<[Token]>>(hyp: &[Token], refs: &[R], max_n: usize) -> BleuStats {
    let mut matches = Vec::with_capacity(max_n);
    let mut totals = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let hyp_grams = ngram_counts(hyp, n);
        let ref_grams: Vec<_> = refs.iter().map(|r| ngram_counts(r.as_ref(), n)).collect();
        let clipped: usize = hyp_grams
            .iter()
            .map(|(g, c)| {
                let max_ref = ref_grams.iter().map(|m| m.get(g)).max().unwrap_or(0);
                c.min(max_ref)
            })
            .sum();
        matches.push(clipped);
        totals.push(hyp_grams.total());
    }
    BleuStats {
        matches,
        totals,
        hyp_len: hyp.len(),
        ref_len: closest_ref_len(hyp.len(), refs),
    }
}

fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len == 0 {
        0.0
    } else if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

/// Cumulative BLEU@1..=max_n from per-order precisions.
fn cumulative(precisions: &[f64], bp: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(precisions.len());
    let mut log_sum = 0.0;
    for (k, p) in precisions.iter().enumerate() {
        if *p <= 0.0 {
            log_sum = f64::NEG_INFINITY;
        } else {
            log_sum += p.ln();
        }
        let score = if log_sum.is_finite() {
            bp * (log_sum / (k + 1) as f64).exp()
        } else {
            0.0
        };
        out.push(score);
    }
    out
}

/// Sentence-level BLEU@1..=max_n. Zero match counts are floored at
/// [`SMOOTHING_FLOOR`] so higher orders stay finite.
pub fn bleu<R: AsRef<[Token]>>(hyp: &[Token], refs: &[R], max_n: usize) -> Result<Vec<f64>> {
    if refs.is_empty() {
        return Err(MftError::contract("bleu needs at least one reference"));
    }
    if hyp.is_empty() {
        return Err(MftError::contract("bleu of an empty hypothesis"));
    }
    let stats = bleu_stats(hyp, refs, max_n);
    let precisions: Vec<f64> = stats
        .matches
        .iter()
        .zip(&stats.totals)
        .map(|(&m, &t)| (m as f64).max(SMOOTHING_FLOOR) / t.max(1) as f64)
        .collect();
    Ok(cumulative(
        &precisions,
        brevity_penalty(stats.hyp_len, stats.ref_len),
    ))
}

/// Unsmoothed corpus BLEU@1..=max_n: matches, totals and lengths are summed
/// over the corpus before the precisions are formed.
pub fn corpus_bleu<H, R>(hyps: &[H], refs: &[Vec<R>], max_n: usize) -> Result<Vec<f64>>
where
    H: AsRef<[Token]>,
    R: AsRef<[Token]>,
{
    if hyps.len() != refs.len() {
        return Err(MftError::contract("corpus_bleu: hypothesis/reference count mismatch"));
    }
    if hyps.is_empty() {
        return Err(MftError::contract("corpus_bleu over an empty corpus"));
    }
    let mut total = BleuStats {
        matches: vec![0; max_n],
        totals: vec![0; max_n],
        hyp_len: 0,
        ref_len: 0,
    };
    for (h, r) in hyps.iter().zip(refs) {
        if r.is_empty() {
            return Err(MftError::contract("corpus_bleu: an item has no references"));
        }
        let s = bleu_stats(h.as_ref(), r, max_n);
        for k in 0..max_n {
            total.matches[k] += s.matches[k];
            total.totals[k] += s.totals[k];
        }
        total.hyp_len += s.hyp_len;
        total.ref_len += s.ref_len;
    }
    let precisions: Vec<f64> = total
        .matches
        .iter()
        .zip(&total.totals)
        .map(|(&m, &t)| if t == 0 { 0.0 } else { m as f64 / t as f64 })
        .collect();
    Ok(cumulative(
        &precisions,
        brevity_penalty(total.hyp_len, total.ref_len),
    ))
}
