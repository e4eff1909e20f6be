use std::collections::BTreeMap;

use crate::Token;

/// Multiset of the contiguous `n`-grams of a token sequence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NGramMultiset {
    n: usize,
    counts: BTreeMap<Vec<Token>, usize>,
}

impl NGramMultiset {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, gram: &[Token]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    /// Number of distinct n-grams.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// Total occurrences, `len - n + 1` for a sequence of length ≥ n.
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[Token], usize)> {
        self.counts.iter().map(|(k, v)| (k.as_slice(), *v))
    }
}

pub fn ngram_counts(tokens: &[Token], n: usize) -> NGramMultiset {
    let mut counts = BTreeMap::new();
    if n >= 1 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    NGramMultiset { n, counts }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bigrams_of_abab() {
        // a=0, b=1
        let m = ngram_counts(&[0, 1, 0, 1], 2);
        assert_eq!(m.get(&[0, 1]), 2);
        assert_eq!(m.get(&[1, 0]), 1);
        assert_eq!(m.distinct(), 2);
        assert_eq!(m.total(), 3);
    }

    #[test]
    fn too_long_n_is_empty_and_unigrams_are_histogram() {
        assert!(ngram_counts(&[1, 2, 3], 4).is_empty());
        let m = ngram_counts(&[5, 5, 7], 1);
        assert_eq!(m.get(&[5]), 2);
        assert_eq!(m.get(&[7]), 1);
    }
}
