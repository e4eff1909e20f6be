//! One flat JSON document holding every hyperparameter of a run. Unknown
//! keys are rejected; missing keys take the defaults below.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::caption::{CaptionNet, CaptionShape};
use crate::corpus::SynthConfig;
use crate::error::{MftError, Result};
use crate::localize::{ScorerConfig, WatershedConfig};
use crate::select::{SelectShape, SelectionConfig, SelectionNet, SelectorInputs};
use crate::train::{ScstConfig, Scheme, SelectorTrainConfig, XeConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Every other seed is derived from this one by name.
    pub seed: u64,
    pub fps: f64,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,

    pub synth_videos: usize,
    pub synth_val_videos: usize,
    pub synth_topics: usize,
    pub synth_feature_dim: usize,
    pub synth_frames: usize,
    pub synth_min_events: usize,
    pub synth_max_events: usize,
    pub synth_min_event_len: usize,
    pub synth_max_event_len: usize,
    pub synth_min_gap: usize,
    pub synth_noise: f64,
    pub synth_lead_in: usize,
    pub synth_lead_level: f64,
    pub synth_texture_block: usize,
    pub synth_texture_depth: f64,
    pub synth_repeat_rate: f64,
    pub synth_foreground: f64,

    pub scorer_epochs: usize,
    pub scorer_lr: f64,
    pub scorer_l2: f64,
    pub watershed_thresholds: Vec<f64>,
    pub min_candidate_len: usize,
    /// `L`: candidates considered per video.
    pub max_candidates: usize,

    /// `δ`.
    pub delta: f64,
    /// `R`.
    pub range_bins: usize,
    pub selector_hidden_size: usize,
    pub selector_visual: bool,
    pub selector_range: bool,
    pub selector_caption: bool,

    /// `N`.
    pub subsegments: usize,
    /// `M`.
    pub max_sentence_len: usize,
    pub hidden_size: usize,
    pub embed_size: usize,
    pub attention_size: usize,

    pub xe_epochs: usize,
    pub xe_lr: f64,
    pub xe_batch_videos: usize,

    pub scst_epochs: usize,
    pub scst_lr: f64,
    pub scst_lambda: f64,
    pub scst_min_events: usize,

    pub selector_scheme: Scheme,
    pub selector_epochs: usize,
    pub selector_batch_size: usize,
    pub selector_lr: f64,
    pub selector_lr_decay: f64,
    pub selector_decay_every: usize,
    pub selector_momentum: f64,
    pub selector_weight_decay: f64,
    pub selector_seq_len: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let scorer = ScorerConfig::default();
        let ws = WatershedConfig::default();
        let sel = SelectorTrainConfig::default();
        let scst = ScstConfig::default();
        let xe = XeConfig::default();
        RunConfig {
            seed: 7,
            fps: 1.0,
            data: None,
            out: None,
            synth_videos: synth.n_videos,
            synth_val_videos: synth.val_videos,
            synth_topics: synth.topics,
            synth_feature_dim: synth.feature_dim,
            synth_frames: synth.frames,
            synth_min_events: synth.min_events,
            synth_max_events: synth.max_events,
            synth_min_event_len: synth.min_event_len,
            synth_max_event_len: synth.max_event_len,
            synth_min_gap: synth.min_gap,
            synth_noise: synth.noise,
            synth_lead_in: synth.lead_in,
            synth_lead_level: synth.lead_level,
            synth_texture_block: synth.texture_block,
            synth_texture_depth: synth.texture_depth,
            synth_repeat_rate: synth.repeat_rate,
            synth_foreground: synth.foreground,
            scorer_epochs: scorer.epochs,
            scorer_lr: scorer.lr,
            scorer_l2: scorer.l2,
            watershed_thresholds: ws.thresholds,
            min_candidate_len: ws.min_duration,
            max_candidates: 100,
            delta: 0.3,
            range_bins: 32,
            selector_hidden_size: 512,
            selector_visual: true,
            selector_range: true,
            selector_caption: true,
            subsegments: 10,
            max_sentence_len: 30,
            hidden_size: 512,
            embed_size: 512,
            attention_size: 512,
            xe_epochs: xe.epochs,
            xe_lr: xe.lr,
            xe_batch_videos: xe.batch_videos,
            scst_epochs: scst.epochs,
            scst_lr: scst.lr,
            scst_lambda: scst.lambda,
            scst_min_events: scst.min_events_per_batch,
            selector_scheme: sel.scheme,
            selector_epochs: sel.epochs,
            selector_batch_size: sel.batch_size,
            selector_lr: sel.lr,
            selector_lr_decay: sel.lr_decay,
            selector_decay_every: sel.decay_every,
            selector_momentum: sel.momentum,
            selector_weight_decay: sel.weight_decay,
            selector_seq_len: sel.seq_len,
        }
    }
}

/// FNV-1a over the name, then a splitmix64 finalizer mixed with the seed.
fn derive_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RunConfig {
    /// Desk-scale network sizes and epoch counts for the synthetic corpus.
    pub fn desk() -> Self {
        RunConfig {
            hidden_size: 64,
            embed_size: 32,
            attention_size: 32,
            selector_hidden_size: 64,
            // 80-sequence batches give a few dozen steps per run at this
            // corpus size, too few for the selector to move off p = 0.5.
            selector_batch_size: 8,
            // The small captioner tolerates a larger policy-gradient step;
            // at 5e-5 ten epochs leave it almost where XE put it.
            scst_lr: 5e-4,
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| MftError::Config(format!("run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| MftError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run config serializes")
    }

    /// Applies `key=value` overrides; values are parsed as JSON, falling back
    /// to a bare string.
    pub fn with_overrides<'a>(&self, pairs: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        let map = doc.as_object_mut().expect("run config is an object");
        for pair in pairs {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| MftError::Config(format!("override {pair:?} is not key=value")))?;
            if !map.contains_key(k) {
                return Err(MftError::Config(format!("unknown config key {k:?}")));
            }
            let value = serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.into()));
            map.insert(k.to_string(), value);
        }
        let cfg: RunConfig =
            serde_json::from_value(doc).map_err(|e| MftError::Config(format!("run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth().validate()?;
        self.watershed().validate()?;
        self.selection().validate()?;
        let bad = |m: &str| Err(MftError::Config(m.to_string()));
        if !(self.fps > 0.0) {
            return bad("fps must be positive");
        }
        if self.hidden_size == 0 || self.embed_size == 0 || self.attention_size == 0 || self.selector_hidden_size == 0 {
            return bad("network sizes must be positive");
        }
        if self.subsegments == 0 || self.max_sentence_len == 0 || self.range_bins == 0 {
            return bad("N, M and R must be positive");
        }
        if self.xe_batch_videos == 0 || self.selector_batch_size == 0 || self.selector_seq_len == 0 {
            return bad("batch sizes and sequence length must be positive");
        }
        Ok(())
    }

    /// A seed for the named module, derived from `seed`.
    pub fn sub_seed(&self, name: &str) -> u64 {
        derive_seed(self.seed, name)
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            n_videos: self.synth_videos,
            val_videos: self.synth_val_videos,
            topics: self.synth_topics,
            feature_dim: self.synth_feature_dim,
            frames: self.synth_frames,
            min_events: self.synth_min_events,
            max_events: self.synth_max_events,
            min_event_len: self.synth_min_event_len,
            max_event_len: self.synth_max_event_len,
            min_gap: self.synth_min_gap,
            noise: self.synth_noise,
            lead_in: self.synth_lead_in,
            lead_level: self.synth_lead_level,
            texture_block: self.synth_texture_block,
            texture_depth: self.synth_texture_depth,
            repeat_rate: self.synth_repeat_rate,
            foreground: self.synth_foreground,
            seed: self.sub_seed("synth"),
        }
    }

    pub fn scorer(&self) -> ScorerConfig {
        ScorerConfig {
            epochs: self.scorer_epochs,
            lr: self.scorer_lr,
            l2: self.scorer_l2,
        }
    }

    pub fn watershed(&self) -> WatershedConfig {
        WatershedConfig {
            thresholds: self.watershed_thresholds.clone(),
            min_duration: self.min_candidate_len,
            max_candidates: self.max_candidates,
        }
    }

    pub fn selection(&self) -> SelectionConfig {
        SelectionConfig {
            delta: self.delta,
            max_candidates: self.max_candidates,
        }
    }

    pub fn selector_inputs(&self) -> SelectorInputs {
        SelectorInputs {
            visual: self.selector_visual,
            range: self.selector_range,
            caption: self.selector_caption,
        }
    }

    pub fn xe(&self) -> XeConfig {
        XeConfig {
            epochs: self.xe_epochs,
            lr: self.xe_lr,
            batch_videos: self.xe_batch_videos,
            seed: self.sub_seed("xe"),
        }
    }

    pub fn scst(&self) -> ScstConfig {
        ScstConfig {
            epochs: self.scst_epochs,
            lr: self.scst_lr,
            lambda: self.scst_lambda,
            min_events_per_batch: self.scst_min_events,
            seed: self.sub_seed("scst"),
        }
    }

    pub fn selector_training(&self) -> SelectorTrainConfig {
        SelectorTrainConfig {
            scheme: self.selector_scheme,
            epochs: self.selector_epochs,
            batch_size: self.selector_batch_size,
            lr: self.selector_lr,
            lr_decay: self.selector_lr_decay,
            decay_every: self.selector_decay_every,
            momentum: self.selector_momentum,
            weight_decay: self.selector_weight_decay,
            seq_len: self.selector_seq_len,
            delta: self.delta,
            seed: self.sub_seed(&format!("selector.{}", self.selector_scheme)),
        }
    }

    pub fn caption_shape(&self, vocab_size: usize, feature_dim: usize) -> CaptionShape {
        CaptionShape {
            vocab_size,
            feature_dim,
            embed_size: self.embed_size,
            hidden_size: self.hidden_size,
            attention_size: self.attention_size,
        }
    }

    /// Freshly initialized captioner.
    pub fn new_captioner(&self, vocab_size: usize, feature_dim: usize) -> Result<CaptionNet> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.sub_seed("caption.init"));
        CaptionNet::new(
            self.caption_shape(vocab_size, feature_dim),
            self.subsegments,
            self.max_sentence_len,
            &mut rng,
        )
    }

    pub fn select_shape(&self, feature_dim: usize) -> SelectShape {
        SelectShape {
            feature_dim,
            range_bins: self.range_bins,
            caption_dim: self.hidden_size,
            hidden_size: self.selector_hidden_size,
        }
    }

    /// Freshly initialized selector.
    pub fn new_selector(&self, feature_dim: usize) -> SelectionNet {
        let mut rng = ChaCha8Rng::seed_from_u64(self.sub_seed("select.init"));
        SelectionNet::new(self.select_shape(feature_dim), self.selector_inputs(), &mut rng)
    }
}
