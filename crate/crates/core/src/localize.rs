//! Candidate event proposals: a per-frame logistic importance scorer,
//! multi-threshold watershed grouping of frame runs, and tIoU labelling of
//! candidates against ground-truth events.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::VideoRecord;
use crate::error::{MftError, Result};
use crate::numcore::matrix::{dot, sigmoid};
use crate::numcore::{adam_step, Matrix, OptimState, ParamStore};
use crate::Token;

/// Half-open frame interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(MftError::contract(format!("empty or inverted span [{start}, {end})")));
        }
        Ok(Span { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.start <= frame && frame < self.end
    }
}

/// Temporal intersection over union.
pub fn tiou(a: Span, b: Span) -> f64 {
    let inter = a.end.min(b.end).saturating_sub(a.start.max(b.start));
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEvent {
    pub span: Span,
    pub sentence: Vec<Token>,
}

/// A proposed interval with its mean frame score and pooled visual feature.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateEvent {
    pub span: Span,
    pub score: f64,
    pub visual: Vec<f64>,
}

/// Per-frame logistic classifier: `sigmoid(w·x + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub epochs: usize,
    pub lr: f64,
    /// L2 penalty on the weights; keeps scores graded instead of saturated
    /// so that different flooding levels produce different runs.
    pub l2: f64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            epochs: 300,
            lr: 0.05,
            l2: 1e-3,
        }
    }
}

impl FrameScorer {
    pub fn zeros(dim: usize) -> Self {
        FrameScorer {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn score(&self, frame: &[f64]) -> f64 {
        sigmoid(dot(&self.weights, frame) + self.bias)
    }

    pub fn score_frames(&self, features: &Matrix) -> Vec<f64> {
        (0..features.rows()).map(|t| self.score(features.row(t))).collect()
    }
}

/// Fits the frame scorer with full-batch Adam on mean binary cross-entropy.
/// A frame is positive iff it lies inside some ground-truth event.
pub fn train_frame_scorer(videos: &[VideoRecord], cfg: &ScorerConfig) -> Result<FrameScorer> {
    let first = videos
        .first()
        .ok_or_else(|| MftError::contract("frame scorer needs at least one training video"))?;
    let dim = first.features.cols();
    let mut frames: Vec<(&[f64], f64)> = Vec::new();
    for v in videos {
        if v.features.cols() != dim {
            return Err(MftError::contract(format!(
                "video {} has feature dim {}, expected {dim}",
                v.id,
                v.features.cols()
            )));
        }
        for t in 0..v.features.rows() {
            let inside = v.gt_events.iter().any(|e| e.span.contains(t));
            frames.push((v.features.row(t), if inside { 1.0 } else { 0.0 }));
        }
    }
    if frames.is_empty() {
        return Err(MftError::contract("frame scorer training set has no frames"));
    }
    let positives = frames.iter().filter(|(_, y)| *y > 0.5).count();
    if positives == 0 || positives == frames.len() {
        warn!(
            "frame scorer labels are all {}; training anyway",
            if positives == 0 { "negative" } else { "positive" }
        );
    }

    let mut store = ParamStore::new();
    let w = store.add("scorer.w", Matrix::zeros(dim, 1));
    let b = store.add("scorer.b", Matrix::zeros(1, 1));
    let mut opt = OptimState::new();
    let inv_n = 1.0 / frames.len() as f64;
    for _ in 0..cfg.epochs {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        {
            let wv = store.value(w).as_slice();
            let bv = store.value(b).as_slice()[0];
            for (x, y) in &frames {
                let err = (sigmoid(dot(wv, x) + bv) - y) * inv_n;
                for (g, xi) in gw.iter_mut().zip(x.iter()) {
                    *g += err * xi;
                }
                gb += err;
            }
        }
        for (g, wi) in gw.iter_mut().zip(store.value(w).as_slice()) {
            *g += cfg.l2 * wi;
        }
        store.get_mut(w).grad.as_mut_slice().copy_from_slice(&gw);
        store.get_mut(b).grad.as_mut_slice()[0] = gb;
        adam_step(&mut store, &mut opt, cfg.lr);
    }
    Ok(FrameScorer {
        weights: store.value(w).as_slice().to_vec(),
        bias: store.value(b).as_slice()[0],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WatershedConfig {
    /// Strictly descending flooding levels in (0, 1).
    pub thresholds: Vec<f64>,
    pub min_duration: usize,
    pub max_candidates: usize,
}

impl Default for WatershedConfig {
    fn default() -> Self {
        WatershedConfig {
            thresholds: vec![0.9, 0.7, 0.5, 0.3],
            min_duration: 4,
            max_candidates: 100,
        }
    }
}

impl WatershedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.iter().any(|&g| !(g > 0.0 && g < 1.0)) {
            return Err(MftError::contract("watershed thresholds must lie in (0, 1)"));
        }
        if self.thresholds.windows(2).any(|w| w[0] <= w[1]) {
            return Err(MftError::contract("watershed thresholds must be strictly descending"));
        }
        if self.min_duration < 1 {
            return Err(MftError::contract("min_duration must be at least 1 frame"));
        }
        Ok(())
    }
}

/// A grouped interval before feature pooling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proposal {
    pub span: Span,
    pub score: f64,
}

/// Maximal runs of frames scoring at least each threshold, deduplicated and
/// returned in chronological `(start, end)` order. When more than
/// `max_candidates` survive, the highest-scoring ones are kept.
pub fn watershed_group(scores: &[f64], cfg: &WatershedConfig) -> Result<Vec<Proposal>> {
    cfg.validate()?;
    if scores.is_empty() {
        return Ok(Vec::new());
    }
    let mut spans: Vec<Span> = Vec::new();
    for &level in &cfg.thresholds {
        let mut run_start: Option<usize> = None;
        for t in 0..=scores.len() {
            let above = t < scores.len() && scores[t] >= level;
            match (above, run_start) {
                (true, None) => run_start = Some(t),
                (false, Some(s)) => {
                    if t - s >= cfg.min_duration {
                        spans.push(Span { start: s, end: t });
                    }
                    run_start = None;
                }
                _ => {}
            }
        }
    }
    spans.sort();
    spans.dedup();
    let mut proposals: Vec<Proposal> = spans
        .into_iter()
        .map(|span| Proposal {
            span,
            score: scores[span.start..span.end].iter().sum::<f64>() / span.len() as f64,
        })
        .collect();
    if proposals.len() > cfg.max_candidates {
        // stable: equal scores keep chronological preference
        proposals.sort_by(|a, b| b.score.total_cmp(&a.score));
        proposals.truncate(cfg.max_candidates);
        proposals.sort_by_key(|p| p.span);
    }
    Ok(proposals)
}

/// Mean of the frame features over `span`.
pub fn pool_span(features: &Matrix, span: Span) -> Result<Vec<f64>> {
    if span.is_empty() || span.end > features.rows() {
        return Err(MftError::contract(format!(
            "span [{}, {}) outside video of {} frames",
            span.start,
            span.end,
            features.rows()
        )));
    }
    let mut out = vec![0.0; features.cols()];
    for t in span.start..span.end {
        for (o, x) in out.iter_mut().zip(features.row(t)) {
            *o += x;
        }
    }
    let inv = 1.0 / span.len() as f64;
    out.iter_mut().for_each(|v| *v *= inv);
    Ok(out)
}

pub fn build_candidates(proposals: &[Proposal], features: &Matrix) -> Result<Vec<CandidateEvent>> {
    proposals
        .iter()
        .map(|p| {
            Ok(CandidateEvent {
                span: p.span,
                score: p.score,
                visual: pool_span(features, p.span)?,
            })
        })
        .collect()
}

/// Scores frames, groups them and pools candidate features for one video.
pub fn localize_video(
    scorer: &FrameScorer,
    features: &Matrix,
    cfg: &WatershedConfig,
) -> Result<Vec<CandidateEvent>> {
    let scores = scorer.score_frames(features);
    build_candidates(&watershed_group(&scores, cfg)?, features)
}

/// Candidate labels from ground-truth matching.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateLabels {
    pub positive: Vec<bool>,
    /// For each ground-truth event, the index of its matched candidate.
    pub matches: Vec<usize>,
}

impl CandidateLabels {
    pub fn positives(&self) -> usize {
        self.positive.iter().filter(|p| **p).count()
    }
}

/// Marks, for every ground-truth event, the candidate with the highest tIoU
/// as positive (lowest index on ties). Everything else is negative.
pub fn label_candidates(candidates: &[Span], gt: &[Span]) -> Result<CandidateLabels> {
    if candidates.is_empty() && !gt.is_empty() {
        return Err(MftError::LocalizationFailure { gt_events: gt.len() });
    }
    let mut positive = vec![false; candidates.len()];
    let mut matches = Vec::with_capacity(gt.len());
    for &g in gt {
        let mut best = 0;
        let mut best_iou = f64::NEG_INFINITY;
        for (i, &c) in candidates.iter().enumerate() {
            let iou = tiou(c, g);
            if iou > best_iou {
                best = i;
                best_iou = iou;
            }
        }
        positive[best] = true;
        matches.push(best);
    }
    Ok(CandidateLabels { positive, matches })
}
