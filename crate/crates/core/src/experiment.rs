//! End-to-end runs on one dataset: localizer, XE and SCST captioners, and
//! selector variants (sequence scheme, input features, which captioner),
//! each scored by eval-split CIDEr-D of its progressive paragraphs.

use std::time::Instant;

use log::info;
use serde::Serialize;

use crate::caption::CaptionNet;
use crate::config::RunConfig;
use crate::corpus::{Dataset, Split, VideoRecord};
use crate::error::{MftError, Result};
use crate::localize::tiou;
use crate::pipeline::{gt_event_paragraphs, label_videos, mft_paragraphs, paragraph_cider, LabeledCandidates, Localizer, SelectionScore};
use crate::select::{SelectionNet, SelectorInputs};
use crate::train::{evaluate_selector, scst_train, train_captioner_xe, train_selector, teacher_forced_accuracy, Scheme, ScstOutcome, XeOutcome};

/// Everything a selector variant needs, trained once per dataset.
pub struct Prepared {
    pub cfg: RunConfig,
    pub train: Vec<VideoRecord>,
    pub tuning: Vec<VideoRecord>,
    pub eval: Vec<VideoRecord>,
    pub localizer: Localizer,
    pub train_labels: Vec<LabeledCandidates>,
    pub eval_labels: Vec<LabeledCandidates>,
    pub xe: XeOutcome,
    pub scst: Option<ScstOutcome>,
}

/// Candidate statistics over a labelled split.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CandidateStats {
    pub videos: usize,
    pub mean_candidates: f64,
    pub mean_positives: f64,
    /// Fraction of ground-truth events whose best candidate reaches tIoU 0.5.
    pub localized: f64,
}

pub fn candidate_stats(videos: &[VideoRecord], labels: &[LabeledCandidates]) -> CandidateStats {
    let n = labels.len().max(1) as f64;
    let (mut hit, mut events) = (0usize, 0usize);
    for l in labels {
        for gt in &videos[l.video].gt_events {
            events += 1;
            let best = l.candidates.iter().map(|c| tiou(c.span, gt.span)).fold(0.0, f64::max);
            if best >= 0.5 {
                hit += 1;
            }
        }
    }
    CandidateStats {
        videos: labels.len(),
        mean_candidates: labels.iter().map(|l| l.candidates.len()).sum::<usize>() as f64 / n,
        mean_positives: labels.iter().map(|l| l.labels.positives()).sum::<usize>() as f64 / n,
        localized: hit as f64 / events.max(1) as f64,
    }
}

impl Prepared {
    /// Trains the localizer and the captioner (XE, then SCST when
    /// `cfg.scst_epochs > 0`).
    pub fn new(cfg: &RunConfig, ds: &Dataset) -> Result<Self> {
        let train = ds.split(Split::Train);
        let tuning = ds.split(Split::Tuning);
        let eval = ds.split(Split::Eval);
        let dim = ds
            .feature_dim()
            .ok_or_else(|| MftError::contract("dataset has no videos"))?;

        let t = Instant::now();
        let localizer = Localizer::train(&train, &cfg.scorer(), cfg.watershed())?;
        let train_labels = label_videos(&localizer, &train)?;
        let eval_labels = label_videos(&localizer, &eval)?;
        info!("localizer trained in {:.1?}", t.elapsed());

        let t = Instant::now();
        let net = cfg.new_captioner(ds.vocab.len(), dim)?;
        let xe = train_captioner_xe(net, &train, &tuning, &cfg.xe())?;
        info!("XE done in {:.1?}", t.elapsed());
        let scst = if cfg.scst_epochs > 0 {
            let t = Instant::now();
            let out = scst_train(xe.net.clone(), &train, &tuning, &cfg.scst())?;
            info!("SCST done in {:.1?}", t.elapsed());
            Some(out)
        } else {
            None
        };
        Ok(Prepared {
            cfg: cfg.clone(),
            train,
            tuning,
            eval,
            localizer,
            train_labels,
            eval_labels,
            xe,
            scst,
        })
    }

    /// The SCST captioner when one was trained, else the XE one.
    pub fn captioner(&self) -> &CaptionNet {
        self.scst.as_ref().map_or(&self.xe.net, |s| &s.net)
    }

    /// Trains a selector for `captioner` and scores it on the eval split.
    pub fn selector_variant(
        &self,
        name: &str,
        captioner: &CaptionNet,
        scheme: Scheme,
        inputs: SelectorInputs,
    ) -> Result<VariantResult> {
        let t = Instant::now();
        let cfg = RunConfig {
            selector_scheme: scheme,
            selector_visual: inputs.visual,
            selector_range: inputs.range,
            selector_caption: inputs.caption,
            ..self.cfg.clone()
        };
        let dim = self.train[0].features.cols();
        let out = train_selector(
            cfg.new_selector(dim),
            captioner,
            &self.train,
            &self.train_labels,
            &cfg.selector_training(),
        )?;
        let result = self.score_selector(name, &out.net, captioner)?;
        info!(
            "{name}: CIDEr {:.4} F1 {:.3} ({:.1?})",
            result.cider,
            result.selection.f1,
            t.elapsed()
        );
        Ok(VariantResult {
            final_loss: out.final_loss,
            ..result
        })
    }

    pub fn score_selector(&self, name: &str, selector: &SelectionNet, captioner: &CaptionNet) -> Result<VariantResult> {
        let progressive = mft_paragraphs(&self.localizer, selector, captioner, &self.cfg.selection(), &self.eval)?;
        let paragraphs: Vec<_> = progressive.into_iter().map(|p| p.paragraph).collect();
        Ok(VariantResult {
            name: name.to_string(),
            cider: paragraph_cider(&self.eval, &paragraphs)?,
            selection: evaluate_selector(selector, captioner, &self.eval, &self.eval_labels, &self.cfg.selection())?,
            mean_sentences: paragraphs.iter().map(|p| p.len()).sum::<usize>() as f64 / paragraphs.len().max(1) as f64,
            final_loss: f64::NAN,
        })
    }

    pub fn gt_event_cider(&self, captioner: &CaptionNet) -> Result<f64> {
        paragraph_cider(&self.eval, &gt_event_paragraphs(captioner, &self.eval)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariantResult {
    pub name: String,
    /// Eval-split paragraph CIDEr-D (/10).
    pub cider: f64,
    pub selection: SelectionScore,
    pub mean_sentences: f64,
    pub final_loss: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationReport {
    pub train_candidates: CandidateStats,
    pub eval_candidates: CandidateStats,
    /// Teacher-forced token accuracy of the XE captioner, train and eval splits.
    pub xe_accuracy: f64,
    pub xe_eval_accuracy: f64,
    pub gt_event_cider_xe: f64,
    pub gt_event_cider_scst: Option<f64>,
    pub variants: Vec<VariantResult>,
}

impl AblationReport {
    pub fn variant(&self, name: &str) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.name == name)
    }
}

pub const XE_S3: &str = "xe+S3";
pub const SCST_S1: &str = "scst+S1";
pub const SCST_S2: &str = "scst+S2";
pub const SCST_S3: &str = "scst+S3";
pub const SCST_S3_VISUAL: &str = "scst+S3 visual-only";

/// All variants: the XE captioner with S3, and the SCST captioner with S1,
/// S2, S3 and visual-only S3.
pub fn run_ablation(cfg: &RunConfig, ds: &Dataset) -> Result<AblationReport> {
    let prep = Prepared::new(cfg, ds)?;
    let scst = prep
        .scst
        .as_ref()
        .ok_or_else(|| MftError::Config("the ablation needs scst_epochs > 0".into()))?;
    let all = SelectorInputs::default();
    let variants = vec![
        prep.selector_variant(XE_S3, &prep.xe.net, Scheme::S3, all)?,
        prep.selector_variant(SCST_S1, &scst.net, Scheme::S1, all)?,
        prep.selector_variant(SCST_S2, &scst.net, Scheme::S2, all)?,
        prep.selector_variant(SCST_S3, &scst.net, Scheme::S3, all)?,
        prep.selector_variant(SCST_S3_VISUAL, &scst.net, Scheme::S3, SelectorInputs::VISUAL_ONLY)?,
    ];
    Ok(AblationReport {
        train_candidates: candidate_stats(&prep.train, &prep.train_labels),
        eval_candidates: candidate_stats(&prep.eval, &prep.eval_labels),
        xe_accuracy: teacher_forced_accuracy(&prep.xe.net, &prep.train)?,
        xe_eval_accuracy: teacher_forced_accuracy(&prep.xe.net, &prep.eval)?,
        gt_event_cider_xe: prep.gt_event_cider(&prep.xe.net)?,
        gt_event_cider_scst: Some(prep.gt_event_cider(&scst.net)?),
        variants,
    })
}
