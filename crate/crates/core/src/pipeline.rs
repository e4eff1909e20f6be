//! Glue between the stages: proposals for a set of videos, candidate
//! labelling, paragraph generation in both modes, and paragraph scoring.

use std::thread;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::caption::{CaptionNet, DecodeMode, Paragraph};
use crate::corpus::VideoRecord;
use crate::error::{MftError, Result};
use crate::localize::{
    label_candidates, localize_video, train_frame_scorer, CandidateEvent, CandidateLabels,
    FrameScorer, ScorerConfig, WatershedConfig,
};
use crate::metrics::{CiderD, EvalItem};
use crate::select::{run_progressive, Progressive, SelectionConfig, SelectionNet};
use crate::Token;

/// Frame scorer plus grouping settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Localizer {
    pub scorer: FrameScorer,
    pub watershed: WatershedConfig,
}

impl Localizer {
    pub fn train(videos: &[VideoRecord], scorer: &ScorerConfig, watershed: WatershedConfig) -> Result<Self> {
        watershed.validate()?;
        Ok(Localizer {
            scorer: train_frame_scorer(videos, scorer)?,
            watershed,
        })
    }

    pub fn candidates(&self, video: &VideoRecord) -> Result<Vec<CandidateEvent>> {
        localize_video(&self.scorer, &video.features, &self.watershed)
    }
}

/// A video's candidates with their ground-truth labels.
#[derive(Clone, Debug)]
pub struct LabeledCandidates {
    /// Index into the video slice this was built from.
    pub video: usize,
    pub candidates: Vec<CandidateEvent>,
    pub labels: CandidateLabels,
}

/// Labels every video's candidates. Videos whose localization came back
/// empty are skipped with a warning.
pub fn label_videos(localizer: &Localizer, videos: &[VideoRecord]) -> Result<Vec<LabeledCandidates>> {
    let mut out = Vec::with_capacity(videos.len());
    for (i, v) in videos.iter().enumerate() {
        let candidates = localizer.candidates(v)?;
        let spans: Vec<_> = candidates.iter().map(|c| c.span).collect();
        match label_candidates(&spans, &v.gt_spans()) {
            Ok(labels) => out.push(LabeledCandidates {
                video: i,
                candidates,
                labels,
            }),
            Err(MftError::LocalizationFailure { gt_events }) => {
                warn!("video {}: no candidates for {gt_events} ground-truth events, skipped", v.id)
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Runs `f` over `items` on up to `available_parallelism` threads and
/// returns results in input order.
pub fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync) -> Result<Vec<U>> {
    let threads = thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(items.len().max(1));
    if threads <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    let parts: Vec<Result<Vec<U>>> = thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<Result<Vec<U>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Greedy paragraphs for the ground-truth events of each video.
pub fn gt_event_paragraphs(captioner: &CaptionNet, videos: &[VideoRecord]) -> Result<Vec<Paragraph>> {
    par_map(videos, |v| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        captioner.caption_events(&v.features, &v.gt_spans(), DecodeMode::Greedy, &mut rng)
    })
}

/// Greedy progressive generation over localized candidates.
pub fn mft_paragraphs(
    localizer: &Localizer,
    selector: &SelectionNet,
    captioner: &CaptionNet,
    cfg: &SelectionConfig,
    videos: &[VideoRecord],
) -> Result<Vec<Progressive>> {
    par_map(videos, |v| {
        let candidates = localizer.candidates(v)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        run_progressive(&candidates, &v.features, selector, captioner, cfg, DecodeMode::Greedy, &mut rng)
    })
}

pub fn eval_items(videos: &[VideoRecord], paragraphs: &[Paragraph]) -> Vec<EvalItem> {
    videos
        .iter()
        .zip(paragraphs)
        .map(|(v, p)| EvalItem {
            id: v.id.clone(),
            hypothesis: p.word_lists(),
            references: v.references.clone(),
        })
        .collect()
}

fn join(sentences: &[Vec<Token>]) -> Vec<Token> {
    sentences.iter().flatten().copied().collect()
}

/// Corpus CIDEr-D of joined paragraphs against the videos' references,
/// divided by 10 (so in `[0, 1]`).
pub fn paragraph_cider(videos: &[VideoRecord], paragraphs: &[Paragraph]) -> Result<f64> {
    if videos.len() != paragraphs.len() {
        return Err(MftError::contract("one paragraph per video expected"));
    }
    let refs: Vec<Vec<Vec<Token>>> = videos
        .iter()
        .map(|v| v.references.iter().map(|p| join(p)).collect())
        .collect();
    let hyps: Vec<Vec<Token>> = paragraphs.iter().map(|p| join(&p.word_lists())).collect();
    Ok(CiderD::new(&refs)?.corpus_score(&hyps, &refs)? / 10.0)
}

/// Precision / recall / F1 of selected candidate indices against positive labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct SelectionScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn selection_f1<'a>(pairs: impl IntoIterator<Item = (&'a [usize], &'a [bool])>) -> SelectionScore {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (selected, labels) in pairs {
        let mut chosen = vec![false; labels.len()];
        for &i in selected {
            if i < chosen.len() {
                chosen[i] = true;
            }
        }
        for (c, l) in chosen.iter().zip(labels) {
            match (c, l) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                _ => {}
            }
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    SelectionScore { precision, recall, f1 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_counts() {
        let labels = [true, false, true, false];
        let s = selection_f1([(&[0usize, 1][..], &labels[..])]);
        assert_eq!(s.precision, 0.5);
        assert_eq!(s.recall, 0.5);
        assert_eq!(s.f1, 0.5);
        let perfect = selection_f1([(&[0usize, 2][..], &labels[..])]);
        assert_eq!(perfect.f1, 1.0);
    }

    #[test]
    fn par_map_preserves_order() {
        let xs: Vec<usize> = (0..37).collect();
        let ys = par_map(&xs, |x| Ok(x * 2)).unwrap();
        assert_eq!(ys, xs.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
