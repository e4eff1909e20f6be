//! Self-critical fine-tuning of the captioner.
//!
//! For every video a sampled and a greedy paragraph are decoded over the
//! ground-truth events, each continuing its own decoder state from sentence
//! to sentence. Sentence `k` of the sample is reinforced with advantage
//! `(r_k(sample) − r_k(greedy)) + λ·(R(sample) − R(greedy))`, where `r_k` is
//! sentence CIDEr-D against the k-th reference sentence and `R` is paragraph
//! CIDEr-D against the reference paragraph.

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::accumulate_parallel;
use super::log::TrainLog;
use crate::caption::{CaptionNet, DecodeMode, Paragraph, SubsegmentFeatures};
use crate::corpus::VideoRecord;
use crate::error::{MftError, Result};
use crate::metrics::CiderD;
use crate::numcore::{adam_step, OptimState, Tape};
use crate::pipeline::{gt_event_paragraphs, paragraph_cider};
use crate::Token;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScstConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Weight of the paragraph-level reward.
    pub lambda: f64,
    /// Videos are added to a batch until it holds at least this many events.
    pub min_events_per_batch: usize,
    pub seed: u64,
}

impl Default for ScstConfig {
    fn default() -> Self {
        ScstConfig {
            epochs: 10,
            lr: 5e-5,
            lambda: 1.0,
            min_events_per_batch: 80,
            seed: 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScstOutcome {
    pub net: CaptionNet,
    pub log: TrainLog,
    /// 0 means no SCST epoch beat the starting model on the tuning videos.
    pub best_epoch: usize,
    pub best_val_cider: Option<f64>,
    /// Mean sampled paragraph reward (CIDEr-D / 10) per epoch.
    pub epoch_rewards: Vec<f64>,
    /// Optimizer steps skipped because every advantage was zero.
    pub skipped_steps: usize,
}

/// Both reward scorers, with document frequencies from the training references.
pub struct Rewards {
    sentence: CiderD,
    paragraph: CiderD,
}

fn join(sentences: &[Vec<Token>]) -> Vec<Token> {
    sentences.iter().flatten().copied().collect()
}

impl Rewards {
    pub fn new(train: &[VideoRecord]) -> Result<Self> {
        let sentences: Vec<Vec<Vec<Token>>> = train
            .iter()
            .flat_map(|v| v.gt_events.iter().map(|e| vec![e.sentence.clone()]))
            .collect();
        let paragraphs: Vec<Vec<Vec<Token>>> = train
            .iter()
            .map(|v| v.references.iter().map(|p| join(p)).collect())
            .collect();
        Ok(Rewards {
            sentence: CiderD::new(&sentences)?,
            paragraph: CiderD::new(&paragraphs)?,
        })
    }

    /// Per-sentence rewards and the paragraph reward, all on the 0..10 scale.
    pub fn score(&self, video: &VideoRecord, para: &Paragraph) -> Result<(Vec<f64>, f64)> {
        let words = para.word_lists();
        let per = words
            .iter()
            .zip(&video.gt_events)
            .map(|(w, e)| self.sentence.score(w, std::slice::from_ref(&e.sentence)))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<Vec<Token>> = video.references.iter().map(|p| join(p)).collect();
        let whole = self.paragraph.score(&join(&words), &refs)?;
        Ok((per, whole))
    }
}

/// Per-sentence advantages of `sample` over the greedy baseline.
pub fn advantages(sample: &(Vec<f64>, f64), greedy: &(Vec<f64>, f64), lambda: f64) -> Vec<f64> {
    let para = lambda * (sample.1 - greedy.1);
    sample.0.iter().zip(&greedy.0).map(|(s, g)| s - g + para).collect()
}

struct Item<'a> {
    video: &'a VideoRecord,
    events: Vec<SubsegmentFeatures>,
    seed: u64,
}

struct Rollout {
    reward: f64,
    nonzero: bool,
}

fn batches(order: &[usize], videos: &[VideoRecord], min_events: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    let mut events = 0;
    for &i in order {
        cur.push(i);
        events += videos[i].gt_events.len();
        if events >= min_events.max(1) {
            out.push(std::mem::take(&mut cur));
            events = 0;
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Accumulates the policy gradient of one batch into `net.store`.
fn scst_batch(net: &mut CaptionNet, items: &[Item], rewards: &Rewards, lambda: f64) -> Result<Vec<Rollout>> {
    let events: usize = items.iter().map(|it| it.events.len()).sum();
    let norm = 1.0 / events.max(1) as f64;
    let frozen = net.clone();
    accumulate_parallel(&mut net.store, items, |it, grads| {
        let v = it.video;
        let spans = v.gt_spans();
        let mut rng = ChaCha8Rng::seed_from_u64(it.seed);
        let zero = frozen.zero_state();
        let (sample, _) = frozen.caption_spans(&v.features, &spans, &zero, DecodeMode::Sample, &mut rng)?;
        let (greedy, _) = frozen.caption_spans(&v.features, &spans, &zero, DecodeMode::Greedy, &mut rng)?;
        let rs = rewards.score(v, &sample)?;
        let rg = rewards.score(v, &greedy)?;
        let adv = advantages(&rs, &rg, lambda);
        let nonzero = adv.iter().any(|&a| a != 0.0);
        if nonzero {
            let targets: Vec<Vec<Token>> = sample.sentences.iter().map(|s| s.tokens.clone()).collect();
            let weights: Vec<f64> = adv.iter().map(|a| a * norm).collect();
            let mut tape = Tape::new();
            let (loss, _, _) = frozen.tape_paragraph(&mut tape, &it.events, &targets, &weights, &zero)?;
            tape.backward(loss, grads)?;
        }
        Ok(Rollout {
            reward: rs.1 / 10.0,
            nonzero,
        })
    })
}

pub fn scst_train(
    mut net: CaptionNet,
    train: &[VideoRecord],
    tuning: &[VideoRecord],
    cfg: &ScstConfig,
) -> Result<ScstOutcome> {
    if train.is_empty() {
        return Err(MftError::contract("SCST needs at least one training video"));
    }
    let usable: Vec<VideoRecord> = train
        .iter()
        .filter(|v| {
            let ok = !v.gt_events.is_empty() && v.gt_events.iter().all(|e| !e.sentence.is_empty());
            if !ok {
                warn!("video {}: empty reference, skipped for SCST", v.id);
            }
            ok
        })
        .cloned()
        .collect();
    let rewards = Rewards::new(&usable)?;
    let pooled: Vec<Vec<SubsegmentFeatures>> = usable
        .iter()
        .map(|v| v.gt_events.iter().map(|e| net.pool(&v.features, e.span)).collect())
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimState::new();
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut best: Option<(f64, usize, CaptionNet)> = None;
    let mut epoch_rewards = Vec::with_capacity(cfg.epochs);
    let (mut iter, mut skipped) = (0, 0);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut reward_sum = 0.0;
        for batch in batches(&order, &usable, cfg.min_events_per_batch) {
            let items: Vec<Item> = batch
                .iter()
                .map(|&i| Item {
                    video: &usable[i],
                    events: pooled[i].clone(),
                    seed: rand::Rng::gen(&mut rng),
                })
                .collect();
            let rolls = scst_batch(&mut net, &items, &rewards, cfg.lambda)?;
            let mean = rolls.iter().map(|r| r.reward).sum::<f64>() / rolls.len() as f64;
            reward_sum += rolls.iter().map(|r| r.reward).sum::<f64>();
            iter += 1;
            if !rolls.iter().any(|r| r.nonzero) || net.store.grads_all_zero() {
                skipped += 1;
                net.store.zero_grads();
            } else {
                adam_step(&mut net.store, &mut opt, cfg.lr);
            }
            log.push(iter, "scst", -mean, Some(mean));
        }
        let epoch_reward = reward_sum / usable.len().max(1) as f64;
        epoch_rewards.push(epoch_reward);
        if !tuning.is_empty() {
            let val = paragraph_cider(tuning, &gt_event_paragraphs(&net, tuning)?)?;
            log.mark_validation(val);
            info!("scst epoch {epoch}: reward {epoch_reward:.4} val CIDEr {val:.4}");
            if best.as_ref().is_none_or(|b| val > b.0) {
                best = Some((val, epoch, net.clone()));
            }
        } else {
            info!("scst epoch {epoch}: reward {epoch_reward:.4}");
        }
    }
    let (best_val_cider, best_epoch, net) = match best {
        Some((v, e, n)) => (Some(v), e, n),
        None => (None, cfg.epochs, net),
    };
    Ok(ScstOutcome {
        net,
        log,
        best_epoch,
        best_val_cider,
        epoch_rewards,
        skipped_steps: skipped,
    })
}
