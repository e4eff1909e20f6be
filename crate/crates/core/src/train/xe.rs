//! Teacher-forced cross-entropy training of the captioner.
//!
//! Each training video's ground-truth sentences are fed in order, every
//! sentence starting from the state the previous ground-truth sentence ended
//! in (zeros for the first). The checkpoint kept is the epoch with the best
//! paragraph CIDEr-D on the tuning videos.

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::accumulate_parallel;
use super::log::TrainLog;
use crate::caption::{target_tokens, CaptionNet, SubsegmentFeatures};
use crate::corpus::VideoRecord;
use crate::error::{MftError, Result};
use crate::numcore::{adam_step, OptimState, Tape};
use crate::pipeline::{gt_event_paragraphs, par_map, paragraph_cider};
use crate::Token;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_videos: usize,
    pub seed: u64,
}

impl Default for XeConfig {
    fn default() -> Self {
        XeConfig {
            epochs: 30,
            lr: 4e-4,
            batch_videos: 8,
            seed: 1,
        }
    }
}

/// Pooled event features and `<eos>`-terminated targets for one video.
#[derive(Clone, Debug)]
pub struct CaptionSample {
    pub events: Vec<SubsegmentFeatures>,
    pub targets: Vec<Vec<Token>>,
}

impl CaptionSample {
    pub fn tokens(&self) -> usize {
        self.targets.iter().map(Vec::len).sum()
    }
}

pub fn caption_samples(net: &CaptionNet, videos: &[VideoRecord]) -> Result<Vec<CaptionSample>> {
    videos
        .iter()
        .map(|v| {
            let events = v
                .gt_events
                .iter()
                .map(|e| net.pool(&v.features, e.span))
                .collect::<Result<Vec<_>>>()?;
            let targets = v
                .gt_events
                .iter()
                .map(|e| target_tokens(&e.sentence, net.max_len))
                .collect();
            Ok(CaptionSample { events, targets })
        })
        .collect()
}

/// Fraction of ground-truth tokens (including `<eos>`) that are the argmax
/// prediction under teacher forcing with the cached state chain.
pub fn teacher_forced_accuracy(net: &CaptionNet, videos: &[VideoRecord]) -> Result<f64> {
    let counts = par_map(videos, |v| {
        let mut state = net.zero_state();
        let (mut c, mut n) = (0, 0);
        for e in &v.gt_events {
            let ctx = net.prepare_span(&v.features, e.span)?;
            let (ci, ni, next) = net.forced_accuracy(&ctx, &state, &target_tokens(&e.sentence, net.max_len))?;
            c += ci;
            n += ni;
            state = next;
        }
        Ok((c, n))
    })?;
    let (c, n) = counts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if n == 0 {
        return Err(MftError::contract("no tokens to score"));
    }
    Ok(c as f64 / n as f64)
}

#[derive(Clone, Debug)]
pub struct XeOutcome {
    /// Parameters of the selected epoch.
    pub net: CaptionNet,
    pub log: TrainLog,
    pub best_epoch: usize,
    pub best_val_cider: Option<f64>,
    /// Mean per-token loss over the final epoch.
    pub final_loss: f64,
    /// Teacher-forced accuracy over the final epoch's batches.
    pub final_train_accuracy: f64,
}

/// Mean per-token XE of one batch; gradients are accumulated into `net.store`.
pub(crate) fn xe_batch(net: &mut CaptionNet, batch: &[&CaptionSample]) -> Result<(f64, usize, usize)> {
    let tokens: usize = batch.iter().map(|s| s.tokens()).sum();
    if tokens == 0 {
        return Ok((0.0, 0, 0));
    }
    let w = 1.0 / tokens as f64;
    let frozen = net.clone();
    let stats = accumulate_parallel(&mut net.store, batch, |s, grads| {
        let mut tape = Tape::new();
        let weights = vec![w; s.targets.len()];
        let (loss, correct, total) =
            frozen.tape_paragraph(&mut tape, &s.events, &s.targets, &weights, &frozen.zero_state())?;
        tape.backward(loss, grads)?;
        Ok((tape.scalar(loss), correct, total))
    })?;
    Ok(stats
        .iter()
        .fold((0.0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2)))
}

pub fn train_captioner_xe(
    mut net: CaptionNet,
    train: &[VideoRecord],
    tuning: &[VideoRecord],
    cfg: &XeConfig,
) -> Result<XeOutcome> {
    if net.shape().vocab_size <= crate::caption::vocab::RESERVED.len() {
        return Err(MftError::Config("empty vocabulary".into()));
    }
    if train.is_empty() {
        return Err(MftError::contract("captioner training needs at least one video"));
    }
    let samples = caption_samples(&net, train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimState::new();
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut best: Option<(f64, usize, CaptionNet)> = None;
    let (mut final_loss, mut final_acc) = (f64::NAN, 0.0);
    let mut iter = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut total) = (0.0, 0, 0);
        for chunk in order.chunks(cfg.batch_videos.max(1)) {
            let batch: Vec<&CaptionSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (loss, c, n) = xe_batch(&mut net, &batch)?;
            adam_step(&mut net.store, &mut opt, cfg.lr);
            iter += 1;
            log.push(iter, "xe", loss, None);
            loss_sum += loss * n as f64;
            correct += c;
            total += n;
        }
        final_loss = loss_sum / total.max(1) as f64;
        final_acc = correct as f64 / total.max(1) as f64;
        if !final_loss.is_finite() {
            return Err(MftError::Numerical(format!("XE loss became {final_loss} in epoch {epoch}")));
        }
        if !tuning.is_empty() {
            let val = paragraph_cider(tuning, &gt_event_paragraphs(&net, tuning)?)?;
            log.mark_validation(val);
            info!("xe epoch {epoch}: loss {final_loss:.4} acc {final_acc:.4} val CIDEr {val:.4}");
            if best.as_ref().is_none_or(|b| val > b.0) {
                best = Some((val, epoch, net.clone()));
            }
        } else {
            info!("xe epoch {epoch}: loss {final_loss:.4} acc {final_acc:.4}");
        }
    }
    let (best_val_cider, best_epoch, net) = match best {
        Some((v, e, n)) => (Some(v), e, n),
        None => (None, cfg.epochs, net),
    };
    Ok(XeOutcome {
        net,
        log,
        best_epoch,
        best_val_cider,
        final_loss,
        final_train_accuracy: final_acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caption::CaptionShape;
    use crate::corpus::{synth_generate, SynthConfig};

    fn tiny_net(vocab: usize, dim: usize, seed: u64) -> CaptionNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CaptionNet::new(
            CaptionShape {
                vocab_size: vocab,
                feature_dim: dim,
                embed_size: 16,
                hidden_size: 24,
                attention_size: 12,
            },
            4,
            16,
            &mut rng,
        )
        .unwrap()
    }

    fn corpus(n: usize) -> crate::corpus::Dataset {
        synth_generate(&SynthConfig {
            n_videos: n,
            val_videos: 0,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn uniform_model_loss_is_log_vocab() {
        let ds = corpus(2);
        let mut net = tiny_net(ds.vocab.len(), 16, 1);
        net.zero_params();
        let samples = caption_samples(&net, &ds.videos).unwrap();
        let batch: Vec<&CaptionSample> = samples.iter().collect();
        let (loss, _, _) = xe_batch(&mut net, &batch).unwrap();
        assert!((loss - (ds.vocab.len() as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn single_pair_is_memorized() {
        let mut ds = corpus(1);
        ds.videos[0].gt_events.truncate(1);
        let net = tiny_net(ds.vocab.len(), 16, 2);
        let cfg = XeConfig {
            epochs: 300,
            lr: 1e-2,
            batch_videos: 1,
            seed: 3,
        };
        let out = train_captioner_xe(net, &ds.videos, &[], &cfg).unwrap();
        assert!(out.final_loss < 0.01, "loss {}", out.final_loss);
        assert_eq!(teacher_forced_accuracy(&out.net, &ds.videos).unwrap(), 1.0);
    }

    #[test]
    fn state_caching_links_sentences() {
        let ds = corpus(1);
        let net = tiny_net(ds.vocab.len(), 16, 4);
        let mut s = caption_samples(&net, &ds.videos).unwrap().remove(0);
        let loss_of = |s: &CaptionSample| {
            let mut tape = Tape::new();
            let mut weights = vec![0.0; s.targets.len()];
            weights[1] = 1.0;
            let (l, _, _) = net
                .tape_paragraph(&mut tape, &s.events, &s.targets, &weights, &net.zero_state())
                .unwrap();
            tape.scalar(l)
        };
        let before = loss_of(&s);
        s.targets[0][1] = s.targets[0][2];
        assert_ne!(before, loss_of(&s));
    }

    #[test]
    fn empty_vocabulary_is_rejected() {
        let ds = corpus(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let shape = CaptionShape {
            vocab_size: 4,
            feature_dim: 16,
            embed_size: 4,
            hidden_size: 4,
            attention_size: 4,
        };
        assert!(CaptionNet::new(shape, 2, 5, &mut rng).is_err());
        let net = tiny_net(ds.vocab.len(), 16, 1);
        assert!(train_captioner_xe(net, &[], &[], &XeConfig::default()).is_err());
    }
}
