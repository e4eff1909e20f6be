//! CIDEr-D: clipped TF-IDF cosine similarity over 1..4-grams with a
//! gaussian length penalty, averaged over orders and references, times 10.
//!
//! Document frequencies come from a reference corpus where each document is
//! the set of n-grams appearing in any reference of one item. The inverse
//! document frequency is `ln((N + 1) / max(df, 1))` for a corpus of `N`
//! documents, which keeps a one-document corpus informative.

use std::collections::{BTreeMap, HashSet};

use super::ngram::ngram_counts;
use crate::error::{MftError, Result};
use crate::Token;

pub const CIDER_MAX_N: usize = 4;
pub const CIDER_SIGMA: f64 = 6.0;

#[derive(Clone, Debug)]
pub struct CiderD {
    doc_freq: BTreeMap<Vec<Token>, usize>,
    num_docs: usize,
    sigma: f64,
}

struct TfIdf {
    per_order: Vec<BTreeMap<Vec<Token>, f64>>,
    norms: Vec<f64>,
    len: usize,
}

impl CiderD {
    /// Builds document frequencies from one reference set per item.
    pub fn new<R: AsRef<[Token]>>(reference_sets: &[Vec<R>]) -> Result<Self> {
        if reference_sets.is_empty() {
            return Err(MftError::contract("CIDEr-D needs a non-empty reference corpus"));
        }
        let mut doc_freq: BTreeMap<Vec<Token>, usize> = BTreeMap::new();
        for refs in reference_sets {
            let mut seen: HashSet<Vec<Token>> = HashSet::new();
            for r in refs {
                for n in 1..=CIDER_MAX_N {
                    for (g, _) in ngram_counts(r.as_ref(), n).iter() {
                        seen.insert(g.to_vec());
                    }
                }
            }
            for g in seen {
                *doc_freq.entry(g).or_insert(0) += 1;
            }
        }
        Ok(CiderD {
            doc_freq,
            num_docs: reference_sets.len(),
            sigma: CIDER_SIGMA,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn idf(&self, gram: &[Token]) -> f64 {
        let df = self.doc_freq.get(gram).copied().unwrap_or(0).max(1) as f64;
        ((self.num_docs as f64 + 1.0) / df).ln()
    }

    fn vectorize(&self, tokens: &[Token]) -> TfIdf {
        let mut per_order = Vec::with_capacity(CIDER_MAX_N);
        let mut norms = Vec::with_capacity(CIDER_MAX_N);
        for n in 1..=CIDER_MAX_N {
            let mut v = BTreeMap::new();
            let mut sq = 0.0;
            for (g, tf) in ngram_counts(tokens, n).iter() {
                let w = tf as f64 * self.idf(g);
                sq += w * w;
                v.insert(g.to_vec(), w);
            }
            per_order.push(v);
            norms.push(sq.sqrt());
        }
        TfIdf {
            per_order,
            norms,
            len: tokens.len(),
        }
    }

    fn similarity(&self, hyp: &TfIdf, reference: &TfIdf) -> f64 {
        let delta = hyp.len as f64 - reference.len as f64;
        let penalty = (-(delta * delta) / (2.0 * self.sigma * self.sigma)).exp();
        let mut total = 0.0;
        for n in 0..CIDER_MAX_N {
            let mut val = 0.0;
            for (g, hv) in &hyp.per_order[n] {
                if let Some(rv) = reference.per_order[n].get(g) {
                    val += hv.min(*rv) * rv;
                }
            }
            if hyp.norms[n] != 0.0 && reference.norms[n] != 0.0 {
                val /= hyp.norms[n] * reference.norms[n];
            }
            total += val * penalty;
        }
        total / CIDER_MAX_N as f64
    }

    /// Score of one candidate against its references, on the 0..=10 scale.
    pub fn score<R: AsRef<[Token]>>(&self, candidate: &[Token], refs: &[R]) -> Result<f64> {
        if refs.is_empty() {
            return Err(MftError::contract("CIDEr-D needs at least one reference"));
        }
        let hyp = self.vectorize(candidate);
        let sum: f64 = refs
            .iter()
            .map(|r| self.similarity(&hyp, &self.vectorize(r.as_ref())))
            .sum();
        Ok(10.0 * sum / refs.len() as f64)
    }

    /// Mean score over items, on the 0..=10 scale.
    pub fn corpus_score<H, R>(&self, candidates: &[H], refs: &[Vec<R>]) -> Result<f64>
    where
        H: AsRef<[Token]>,
        R: AsRef<[Token]>,
    {
        if candidates.len() != refs.len() || candidates.is_empty() {
            return Err(MftError::contract(
                "CIDEr-D corpus score needs one non-empty reference set per candidate",
            ));
        }
        let mut sum = 0.0;
        for (c, r) in candidates.iter().zip(refs) {
            sum += self.score(c.as_ref(), r)?;
        }
        Ok(sum / candidates.len() as f64)
    }
}

/// Convenience: document frequencies from `refs` themselves, then the corpus mean.
pub fn cider<H, R>(candidates: &[H], refs: &[Vec<R>]) -> Result<f64>
where
    H: AsRef<[Token]>,
    R: AsRef<[Token]>,
{
    CiderD::new(refs)?.corpus_score(candidates, refs)
}
