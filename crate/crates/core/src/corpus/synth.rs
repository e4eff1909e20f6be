//! Templated synthetic videos.
//!
//! Each topic owns a unit feature direction and a sentence template with one
//! slot. A video is a sequence of non-overlapping events separated by
//! background gaps; event frames carry their topic direction scaled by an
//! intensity profile, gap frames carry nothing but noise.
//!
//! Three optional knobs shape the intensity profile so that proposal
//! generation produces the kind of redundant candidates a selector has to
//! learn to skip:
//!
//! * the first `lead_in` frames of an event run at `lead_level`, so only
//!   the lowest flooding levels reach the true start and higher levels
//!   yield nested candidates that start later;
//! * the rest of the event is cut into blocks of `texture_block` frames,
//!   each at an intensity drawn from `[1 − texture_depth, 1]`, which yields
//!   fragments at high levels;
//! * with probability `repeat_rate` a short unannotated burst of the same
//!   topic follows an event, a visually valid but redundant candidate.
//!
//! With all three at zero the generator is the plain construction: flat
//! events on a zero background.
//!
//! Separately, `foreground` adds a direction shared by every topic to each
//! topic direction (then renormalized). Without it a linear frame scorer
//! must sum K near-orthogonal directions and amplifies noise by about √K;
//! with it event-vs-background becomes a one-direction problem.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Split, VideoRecord};
use crate::caption::Vocabulary;
use crate::error::{MftError, Result};
use crate::localize::{GroundTruthEvent, Span};
use crate::numcore::Matrix;

/// `(template with one "{}" slot, slot fillers)`.
const TEMPLATES: [(&str, [&str; 3]); 12] = [
    ("a man is {} a ball on the field", ["kicking", "throwing", "bouncing"]),
    ("a woman {} the piano in a room", ["plays", "tunes", "cleans"]),
    ("the dog runs {} across the yard", ["quickly", "happily", "slowly"]),
    ("a chef is chopping {} in the kitchen", ["onions", "carrots", "garlic"]),
    ("two kids ride {} down the street", ["bikes", "scooters", "skateboards"]),
    ("a girl is painting a {} on canvas", ["flower", "portrait", "landscape"]),
    ("the crowd {} loudly at the concert", ["cheers", "dances", "sings"]),
    ("a swimmer dives into the {} pool", ["blue", "deep", "cold"]),
    ("a boy {} a kite at the beach", ["flies", "holds", "chases"]),
    ("an old man reads a {} on the bench", ["newspaper", "book", "letter"]),
    ("the team lifts {} in the gym", ["weights", "bars", "plates"]),
    ("a small cat {} on the sofa", ["sleeps", "stretches", "sits"]),
];

/// Probability of each slot filler, most likely first.
const SLOT_PROBS: [f64; 3] = [0.8, 0.15, 0.05];

/// Word that opens every sentence after the first one of a paragraph.
pub const CONNECTIVE: &str = "then";

pub fn max_topics() -> usize {
    TEMPLATES.len()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_videos: usize,
    /// Of `n_videos`, how many form the validation pool (halved into tuning
    /// and evaluation sets).
    pub val_videos: usize,
    pub topics: usize,
    pub feature_dim: usize,
    pub frames: usize,
    pub min_events: usize,
    pub max_events: usize,
    pub min_event_len: usize,
    pub max_event_len: usize,
    pub min_gap: usize,
    pub noise: f64,
    pub lead_in: usize,
    pub lead_level: f64,
    /// 0 disables the texture.
    pub texture_block: usize,
    pub texture_depth: f64,
    pub repeat_rate: f64,
    /// Weight of a direction shared by every topic. Zero gives plain
    /// orthonormal topics; a positive weight lets one linear frame scorer
    /// see all topics at a wide margin, at the cost of topics being less
    /// orthogonal to each other.
    pub foreground: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_videos: 200,
            val_videos: 50,
            topics: 8,
            feature_dim: 16,
            frames: 120,
            min_events: 2,
            max_events: 5,
            min_event_len: 8,
            max_event_len: 16,
            min_gap: 4,
            noise: 0.02,
            lead_in: 2,
            lead_level: 0.4,
            texture_block: 3,
            texture_depth: 0.4,
            repeat_rate: 0.4,
            foreground: 0.5,
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// Plain construction: flat events, no redundancy knobs.
    pub fn plain() -> Self {
        SynthConfig {
            lead_in: 0,
            texture_block: 0,
            repeat_rate: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MftError::Config(m));
        if self.topics == 0 || self.topics > TEMPLATES.len() {
            return bad(format!("topics must be in 1..={}, got {}", TEMPLATES.len(), self.topics));
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        if self.min_events == 0 || self.min_events > self.max_events {
            return bad(format!(
                "event count range [{}, {}] is empty",
                self.min_events, self.max_events
            ));
        }
        if self.min_event_len == 0 || self.min_event_len > self.max_event_len {
            return bad(format!(
                "event length range [{}, {}] is empty",
                self.min_event_len, self.max_event_len
            ));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return bad(format!("noise must be non-negative, got {}", self.noise));
        }
        if !(0.0..=1.0).contains(&self.repeat_rate) {
            return bad(format!("repeat_rate must be a probability, got {}", self.repeat_rate));
        }
        if !(self.foreground >= 0.0) || !self.foreground.is_finite() {
            return bad(format!("foreground must be non-negative, got {}", self.foreground));
        }
        if !(0.0..1.0).contains(&self.texture_depth) {
            return bad(format!("texture_depth must lie in [0, 1), got {}", self.texture_depth));
        }
        if self.lead_in >= self.min_event_len && self.lead_in > 0 {
            return bad("lead_in leaves no event core".into());
        }
        if self.val_videos > self.n_videos {
            return bad("val_videos exceeds n_videos".into());
        }
        let need = self.max_events * self.max_event_len + (self.max_events + 1) * self.min_gap;
        if need > self.frames {
            return bad(format!(
                "{} events of up to {} frames with gaps of {} need {need} frames, videos have {}",
                self.max_events, self.max_event_len, self.min_gap, self.frames
            ));
        }
        Ok(())
    }
}

/// Unit directions, orthonormal while `k <= dim` (Gram–Schmidt on gaussian
/// draws), merely normalized beyond that.
fn topic_directions(k: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    while out.len() < k {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if out.len() < dim {
            for u in &out {
                let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            out.push(v);
        }
    }
    out
}

/// A unit gaussian draw with its components along `basis` removed (when
/// the basis leaves room).
fn orthogonal_draw(basis: &[Vec<f64>], dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if basis.len() < dim {
            for u in basis {
                let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

fn sample_slot(rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, p) in SLOT_PROBS.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    SLOT_PROBS.len() - 1
}

fn sentence_words(topic: usize, slot: usize, first: bool) -> Vec<String> {
    let (template, fillers) = TEMPLATES[topic];
    let text = template.replace("{}", fillers[slot]);
    let mut words: Vec<String> = Vec::new();
    if !first {
        words.push(CONNECTIVE.to_string());
    }
    words.extend(text.split_whitespace().map(str::to_string));
    words
}

/// Splits `slack` extra frames over `parts` gaps uniformly at random.
fn random_composition(slack: usize, parts: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut cuts: Vec<usize> = (0..parts - 1).map(|_| rng.gen_range(0..=slack)).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts {
        out.push(c - prev);
        prev = c;
    }
    out.push(slack - prev);
    out
}

struct VideoPlan {
    events: Vec<(Span, usize, usize)>,
    intensity: Vec<(usize, f64)>,
}

fn plan_video(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> VideoPlan {
    let n = rng.gen_range(cfg.min_events..=cfg.max_events);
    let lens: Vec<usize> = (0..n)
        .map(|_| rng.gen_range(cfg.min_event_len..=cfg.max_event_len))
        .collect();
    let used = lens.iter().sum::<usize>() + (n + 1) * cfg.min_gap;
    let gaps: Vec<usize> = random_composition(cfg.frames - used, n + 1, rng)
        .into_iter()
        .map(|g| g + cfg.min_gap)
        .collect();

    let mut intensity = vec![(usize::MAX, 0.0); cfg.frames];
    let mut events = Vec::with_capacity(n);
    let mut t = gaps[0];
    let mut prev_topic = usize::MAX;
    for (k, &len) in lens.iter().enumerate() {
        let topic = loop {
            let c = rng.gen_range(0..cfg.topics);
            if c != prev_topic || cfg.topics == 1 {
                break c;
            }
        };
        prev_topic = topic;
        let span = Span {
            start: t,
            end: t + len,
        };
        for (i, f) in (span.start..span.end).enumerate() {
            intensity[f] = (topic, if i < cfg.lead_in { cfg.lead_level } else { 1.0 });
        }
        if cfg.texture_block > 0 {
            let core = span.start + cfg.lead_in..span.end;
            for block in core.collect::<Vec<_>>().chunks(cfg.texture_block) {
                let amp = 1.0 - cfg.texture_depth * rng.gen::<f64>();
                for &f in block {
                    intensity[f].1 = amp;
                }
            }
        }
        events.push((span, topic, sample_slot(rng)));
        t = span.end + gaps[k + 1];

        // a redundant echo of this event inside the following gap
        let gap = gaps[k + 1];
        let burst = cfg.min_gap.max(4);
        if cfg.repeat_rate > 0.0 && rng.gen_bool(cfg.repeat_rate) && gap >= burst + 4 {
            let start = span.end + 2 + rng.gen_range(0..=gap - burst - 4);
            for f in start..start + burst {
                intensity[f] = (topic, 1.0);
            }
        }
    }
    VideoPlan { events, intensity }
}

/// Generates `cfg.n_videos` records; the last `cfg.val_videos` of them form
/// the validation pool, split in half with the same seed.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dirs = topic_directions(cfg.topics, cfg.feature_dim, &mut rng);
    let mut plans = Vec::with_capacity(cfg.n_videos);
    for _ in 0..cfg.n_videos {
        plans.push(plan_video(cfg, &mut rng));
    }
    if cfg.foreground > 0.0 {
        // Drawn after the topics and plans so the plain stream is unchanged.
        let shared = orthogonal_draw(&dirs, cfg.feature_dim, &mut rng);
        for d in &mut dirs {
            d.iter_mut().zip(&shared).for_each(|(x, e)| *x += cfg.foreground * e);
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            d.iter_mut().for_each(|x| *x /= norm);
        }
    }

    let word_lists: Vec<Vec<Vec<String>>> = plans
        .iter()
        .map(|p| {
            p.events
                .iter()
                .enumerate()
                .map(|(k, &(_, topic, slot))| sentence_words(topic, slot, k == 0))
                .collect()
        })
        .collect();
    let vocab = template_vocabulary(cfg.topics);

    let width = (cfg.n_videos.max(1) - 1).to_string().len();
    let mut videos = Vec::with_capacity(cfg.n_videos);
    for (i, (plan, words)) in plans.iter().zip(&word_lists).enumerate() {
        let mut features = Matrix::zeros(cfg.frames, cfg.feature_dim);
        for (t, &(topic, amp)) in plan.intensity.iter().enumerate() {
            let row = features.row_mut(t);
            if topic != usize::MAX {
                row.iter_mut().zip(&dirs[topic]).for_each(|(x, d)| *x = amp * d);
            }
            if cfg.noise > 0.0 {
                for x in row.iter_mut() {
                    *x += cfg.noise * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        let gt_events: Vec<GroundTruthEvent> = plan
            .events
            .iter()
            .zip(words)
            .map(|(&(span, _, _), w)| GroundTruthEvent {
                span,
                sentence: vocab.encode_words(w),
            })
            .collect();
        let paragraph = gt_events.iter().map(|e| e.sentence.clone()).collect();
        videos.push(VideoRecord {
            id: format!("synth_{i:0width$}"),
            features,
            gt_events,
            references: vec![paragraph],
            split: Split::Train,
        });
    }

    let first_val = cfg.n_videos - cfg.val_videos;
    let val_ids: Vec<usize> = (first_val..cfg.n_videos).collect();
    if val_ids.len() >= 2 {
        let (tuning, _) = super::split_validation(&val_ids, cfg.seed);
        for &i in &val_ids {
            videos[i].split = if tuning.contains(&i) { Split::Tuning } else { Split::Eval };
        }
    } else {
        for &i in &val_ids {
            videos[i].split = Split::Eval;
        }
    }
    Ok(Dataset { vocab, videos })
}

/// Every word the first `topics` templates can produce, in a fixed order.
pub fn template_vocabulary(topics: usize) -> Vocabulary {
    let mut words: Vec<String> = vec![CONNECTIVE.to_string()];
    for (template, fillers) in TEMPLATES.iter().take(topics) {
        words.extend(template.split_whitespace().filter(|w| *w != "{}").map(str::to_string));
        words.extend(fillers.iter().map(|w| w.to_string()));
    }
    let mut seen = std::collections::HashSet::new();
    words.retain(|w| seen.insert(w.clone()));
    Vocabulary::from_words(words)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caption::UNK;

    #[test]
    fn templates_have_six_to_ten_tokens() {
        for (t, fillers) in TEMPLATES {
            for f in fillers {
                let n = t.replace("{}", f).split_whitespace().count();
                assert!((6..=10).contains(&n), "{t}: {n}");
            }
        }
    }

    #[test]
    fn default_vocabulary_size() {
        let v = template_vocabulary(8);
        assert!((55..=70).contains(&v.len()), "{}", v.len());
    }

    #[test]
    fn zero_noise_frames_equal_topic_direction() {
        let cfg = SynthConfig {
            n_videos: 3,
            val_videos: 0,
            noise: 0.0,
            ..SynthConfig::plain()
        };
        let ds = synth_generate(&cfg).unwrap();
        for v in &ds.videos {
            let e = &v.gt_events[0];
            let first = v.features.row(e.span.start).to_vec();
            for t in e.span.start..e.span.end {
                assert_eq!(v.features.row(t), first.as_slice());
            }
            let norm: f64 = first.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
            assert!(v.features.row(0).iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let cfg = SynthConfig {
            n_videos: 10,
            val_videos: 4,
            ..Default::default()
        };
        let a = synth_generate(&cfg).unwrap();
        let b = synth_generate(&cfg).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(&SynthConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn events_are_ordered_separated_and_in_vocab() {
        let ds = synth_generate(&SynthConfig::default()).unwrap();
        assert_eq!(ds.videos.len(), 200);
        for v in &ds.videos {
            assert!((2..=5).contains(&v.gt_events.len()));
            for w in v.gt_events.windows(2) {
                assert!(w[0].span.end + 4 <= w[1].span.start);
            }
            for e in &v.gt_events {
                assert!(!e.sentence.contains(&UNK));
                assert!((8..=16).contains(&e.span.len()));
            }
        }
        let counts = ds.split_counts();
        assert_eq!(counts, [150, 25, 25]);
    }

    #[test]
    fn infeasible_budget_rejected() {
        let cfg = SynthConfig {
            frames: 40,
            ..Default::default()
        };
        assert!(matches!(synth_generate(&cfg), Err(MftError::Config(_))));
        let cfg = SynthConfig {
            topics: 13,
            ..Default::default()
        };
        assert!(synth_generate(&cfg).is_err());
    }
}
