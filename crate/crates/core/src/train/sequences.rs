//! Training sequences for the selector, built from one video's labelled
//! candidate list under three schemes:
//!
//! * `S1` — the whole candidate list;
//! * `S2` — the list subsampled at strides 1, 2 and 3;
//! * `S3` — every positive plus as many negatives drawn uniformly without
//!   replacement, back in chronological order.
//!
//! Every sequence is truncated to, and nominally padded to, `seq_len`.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MftError, Result};

pub const DEFAULT_SEQ_LEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    S1,
    S2,
    S3,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Scheme {
    type Err = MftError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(Scheme::S1),
            "S2" => Ok(Scheme::S2),
            "S3" => Ok(Scheme::S3),
            _ => Err(MftError::Config(format!("unknown sequence scheme {s:?}"))),
        }
    }
}

/// Candidate indices (chronological) with their labels. Positions from
/// `indices.len()` up to `padded_len` are padding and carry no loss.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingSequence {
    pub indices: Vec<usize>,
    pub labels: Vec<bool>,
    pub padded_len: usize,
}

impl TrainingSequence {
    fn from_indices(mut indices: Vec<usize>, labels: &[bool], seq_len: usize) -> Self {
        indices.truncate(seq_len);
        TrainingSequence {
            labels: indices.iter().map(|&i| labels[i]).collect(),
            indices,
            padded_len: seq_len,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn padding(&self) -> usize {
        self.padded_len - self.indices.len()
    }
}

pub fn make_training_sequences<R: Rng + ?Sized>(
    labels: &[bool],
    scheme: Scheme,
    seq_len: usize,
    rng: &mut R,
) -> Vec<TrainingSequence> {
    let n = labels.len();
    if n == 0 {
        return Vec::new();
    }
    match scheme {
        Scheme::S1 => vec![TrainingSequence::from_indices((0..n).collect(), labels, seq_len)],
        Scheme::S2 => (1..=3)
            .map(|stride| TrainingSequence::from_indices((0..n).step_by(stride).collect(), labels, seq_len))
            .collect(),
        Scheme::S3 => {
            let positives: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
            if positives.is_empty() {
                return Vec::new();
            }
            let negatives: Vec<usize> = (0..n).filter(|&i| !labels[i]).collect();
            let k = positives.len().min(negatives.len());
            let mut chosen = positives;
            chosen.extend(sample(rng, negatives.len(), k).into_iter().map(|j| negatives[j]));
            chosen.sort_unstable();
            vec![TrainingSequence::from_indices(chosen, labels, seq_len)]
        }
    }
}
