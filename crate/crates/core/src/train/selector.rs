//! Supervised training of the selection LSTM with per-step binary
//! cross-entropy. The captioner is frozen; during training the caption
//! feature is refreshed (by greedy decoding) exactly where the selector's
//! own probability clears δ, as it would be at inference.

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::accumulate_parallel;
use super::log::TrainLog;
use super::sequences::{make_training_sequences, Scheme, TrainingSequence, DEFAULT_SEQ_LEN};
use crate::caption::{CaptionNet, DecodeMode};
use crate::corpus::VideoRecord;
use crate::error::{MftError, Result};
use crate::numcore::{sgd_momentum_step, OptimState, Tape};
use crate::pipeline::{par_map, selection_f1, LabeledCandidates, SelectionScore};
use crate::select::{range_feature, run_progressive, SelectionConfig, SelectionNet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorTrainConfig {
    pub scheme: Scheme,
    pub epochs: usize,
    /// Sequences per step.
    pub batch_size: usize,
    pub lr: f64,
    /// Multiplies `lr` every `decay_every` steps.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seq_len: usize,
    pub delta: f64,
    pub seed: u64,
}

impl Default for SelectorTrainConfig {
    fn default() -> Self {
        SelectorTrainConfig {
            scheme: Scheme::S3,
            epochs: 30,
            batch_size: 80,
            lr: 0.1,
            lr_decay: 0.1,
            decay_every: 10_000,
            momentum: 0.9,
            weight_decay: 5e-4,
            seq_len: DEFAULT_SEQ_LEN,
            delta: 0.3,
            seed: 3,
        }
    }
}

impl SelectorTrainConfig {
    pub fn lr_at(&self, step: usize) -> f64 {
        self.lr * self.lr_decay.powi((step / self.decay_every.max(1)) as i32)
    }
}

#[derive(Clone, Debug)]
pub struct SelectorOutcome {
    pub net: SelectionNet,
    pub log: TrainLog,
    /// Mean per-step BCE over the final epoch.
    pub final_loss: f64,
    pub steps: usize,
}

/// BCE summed over one sequence, each step weighted by `weight`; gradients go
/// into `grads`. Returns the unweighted loss sum.
fn sequence_loss(
    selector: &SelectionNet,
    captioner: &CaptionNet,
    video: &VideoRecord,
    labeled: &LabeledCandidates,
    seq: &TrainingSequence,
    delta: f64,
    weight: f64,
    grads: &mut crate::numcore::ParamStore,
) -> Result<f64> {
    let shape = selector.shape();
    let mut tape = Tape::new();
    let mut h = tape.zeros(shape.hidden_size);
    let mut c = tape.zeros(shape.hidden_size);
    let mut caption = vec![0.0; shape.caption_dim];
    let mut dec = captioner.zero_state();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut losses = Vec::with_capacity(seq.len());
    let mut total = 0.0;
    for (&i, &label) in seq.indices.iter().zip(&seq.labels) {
        let cand = &labeled.candidates[i];
        let r = range_feature(cand.span, video.frames(), shape.range_bins)?;
        let x = tape.input(selector.assemble_input(&cand.visual, &r, &caption)?);
        let (h2, c2, logit) = selector.tape_step(&mut tape, x, h, c)?;
        let y = if label { 1.0 } else { 0.0 };
        let l = tape.sigmoid_bce(logit, y, weight)?;
        total += tape.scalar(l) / weight;
        losses.push(l);
        h = h2;
        c = c2;
        if crate::numcore::matrix::sigmoid(tape.scalar(logit)) > delta {
            let ctx = captioner.prepare_span(&video.features, cand.span)?;
            let (_, state) = captioner.decode_sentence(&ctx, &dec, DecodeMode::Greedy, &mut rng)?;
            caption.clone_from(&state.h);
            dec = state;
        }
    }
    if !losses.is_empty() {
        let loss = tape.sum(&losses)?;
        tape.backward(loss, grads)?;
    }
    Ok(total)
}

pub fn train_selector(
    mut net: SelectionNet,
    captioner: &CaptionNet,
    videos: &[VideoRecord],
    labeled: &[LabeledCandidates],
    cfg: &SelectorTrainConfig,
) -> Result<SelectorOutcome> {
    if !(0.0..1.0).contains(&cfg.delta) || cfg.batch_size == 0 || cfg.seq_len == 0 {
        return Err(MftError::Config(format!(
            "selector training needs δ in [0, 1), batch ≥ 1 and seq_len ≥ 1 (got {}, {}, {})",
            cfg.delta, cfg.batch_size, cfg.seq_len
        )));
    }
    if net.shape().caption_dim != captioner.hidden_size() {
        return Err(MftError::contract("selector caption input must match decoder hidden size"));
    }
    if labeled.iter().any(|l| l.video >= videos.len()) {
        return Err(MftError::contract("labelled candidates refer to a missing video"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimState::new();
    let mut log = TrainLog::default();
    let mut steps = 0;
    let mut final_loss = f64::NAN;
    for epoch in 1..=cfg.epochs {
        let mut seqs: Vec<(usize, TrainingSequence)> = Vec::new();
        for (k, l) in labeled.iter().enumerate() {
            for s in make_training_sequences(&l.labels.positive, cfg.scheme, cfg.seq_len, &mut rng) {
                if !s.is_empty() {
                    seqs.push((k, s));
                }
            }
        }
        if seqs.is_empty() {
            return Err(MftError::contract("no training sequences (no labelled positives)"));
        }
        seqs.shuffle(&mut rng);
        let (mut loss_sum, mut count) = (0.0, 0usize);
        for batch in seqs.chunks(cfg.batch_size) {
            let n: usize = batch.iter().map(|(_, s)| s.len()).sum();
            let weight = 1.0 / n as f64;
            let frozen = net.clone();
            let losses = accumulate_parallel(&mut net.store, batch, |(k, s), grads| {
                let l = &labeled[*k];
                sequence_loss(&frozen, captioner, &videos[l.video], l, s, cfg.delta, weight, grads)
            })?;
            let batch_loss: f64 = losses.iter().sum();
            sgd_momentum_step(&mut net.store, &mut opt, cfg.lr_at(steps), cfg.momentum, cfg.weight_decay);
            steps += 1;
            log.push(steps, "selector", batch_loss / n as f64, None);
            loss_sum += batch_loss;
            count += n;
        }
        final_loss = loss_sum / count as f64;
        if !final_loss.is_finite() {
            return Err(MftError::Numerical(format!("selector loss became {final_loss} in epoch {epoch}")));
        }
        info!("selector epoch {epoch} ({}): loss {final_loss:.4}", cfg.scheme);
    }
    Ok(SelectorOutcome {
        net,
        log,
        final_loss,
        steps,
    })
}

/// Selection precision / recall / F1 of greedy progressive generation
/// against the candidate labels.
pub fn evaluate_selector(
    selector: &SelectionNet,
    captioner: &CaptionNet,
    videos: &[VideoRecord],
    labeled: &[LabeledCandidates],
    cfg: &SelectionConfig,
) -> Result<SelectionScore> {
    let selected = par_map(labeled, |l| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = videos
            .get(l.video)
            .ok_or_else(|| MftError::contract("labelled candidates refer to a missing video"))?;
        Ok(run_progressive(&l.candidates, &v.features, selector, captioner, cfg, DecodeMode::Greedy, &mut rng)?.selected)
    })?;
    Ok(selection_f1(
        selected
            .iter()
            .zip(labeled)
            .map(|(s, l)| (s.as_slice(), l.labels.positive.as_slice())),
    ))
}
