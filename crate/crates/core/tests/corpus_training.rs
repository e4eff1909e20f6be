mod common;

use mft::config::RunConfig;
use mft::corpus::{synth_generate, Split, SynthConfig};
use mft::experiment::{candidate_stats, CandidateStats, Prepared};
use mft::localize::{train_frame_scorer, ScorerConfig};
use mft::numcore::encode_params;
use mft::pipeline::{label_videos, Localizer};
use mft::select::SelectorInputs;
use mft::train::{train_selector, Scheme};

fn small(noise: f64, plain: bool) -> RunConfig {
    let base = RunConfig {
        synth_videos: 60,
        synth_val_videos: 20,
        synth_noise: noise,
        ..RunConfig::desk()
    };
    if plain {
        RunConfig {
            synth_lead_in: 0,
            synth_texture_block: 0,
            synth_repeat_rate: 0.0,
            ..base
        }
    } else {
        base
    }
}

fn localized(cfg: &RunConfig) -> Vec<(Split, CandidateStats)> {
    let ds = synth_generate(&cfg.synth()).unwrap();
    let train = ds.split(Split::Train);
    let loc = Localizer::train(&train, &cfg.scorer(), cfg.watershed()).unwrap();
    [Split::Train, Split::Eval]
        .into_iter()
        .map(|split| {
            let videos = ds.split(split);
            let labels = label_videos(&loc, &videos).unwrap();
            assert_eq!(labels.len(), videos.len(), "a video lost all candidates");
            (split, candidate_stats(&videos, &labels))
        })
        .collect()
}

#[test]
fn plain_events_are_localized_up_to_noise_point_one() {
    for noise in [0.0, 0.02, 0.05, 0.1] {
        for (split, stats) in localized(&small(noise, true)) {
            assert_eq!(stats.localized, 1.0, "σ={noise} {split:?}: {stats:?}");
        }
    }
}

#[test]
fn textured_events_are_localized_up_to_noise_point_oh_five() {
    // Texture blocks dip to 0.6 intensity; past σ ≈ 0.05 a dip can fall
    // under the lowest flooding level and split the event.
    for noise in [0.0, 0.02, 0.05] {
        for (split, stats) in localized(&small(noise, false)) {
            assert_eq!(stats.localized, 1.0, "σ={noise} {split:?}: {stats:?}");
            // Redundant candidates exist for the selector to skip.
            assert!(stats.mean_candidates > stats.mean_positives + 2.0, "{stats:?}");
        }
    }
}

#[test]
fn two_topic_frames_are_linearly_separable_at_noise_point_one() {
    let cfg = SynthConfig {
        n_videos: 40,
        val_videos: 0,
        topics: 2,
        min_events: 2,
        max_events: 2,
        noise: 0.1,
        ..SynthConfig::plain()
    };
    let ds = synth_generate(&cfg).unwrap();
    let scorer = train_frame_scorer(&ds.videos, &ScorerConfig { l2: 0.0, epochs: 1000, lr: 0.1 }).unwrap();
    let (mut right, mut total) = (0usize, 0usize);
    for v in &ds.videos {
        for (t, s) in scorer.score_frames(&v.features).into_iter().enumerate() {
            let inside = v.gt_events.iter().any(|e| e.span.contains(t));
            right += usize::from((s > 0.5) == inside);
            total += 1;
        }
    }
    assert_eq!(right, total, "{} of {total} frames misclassified", total - right);
}

#[test]
fn zero_advantage_leaves_the_captioner_unchanged() {
    let (skipped, changed) = common::zero_advantage_scst();
    assert!(skipped > 0);
    assert!(!changed);
}

fn quick() -> RunConfig {
    RunConfig {
        synth_videos: 24,
        synth_val_videos: 8,
        xe_epochs: 2,
        scst_epochs: 1,
        selector_epochs: 1,
        scorer_epochs: 50,
        ..RunConfig::desk()
    }
}

#[test]
fn selector_training_does_not_touch_the_captioner() {
    let cfg = quick();
    let ds = synth_generate(&cfg.synth()).unwrap();
    let prep = Prepared::new(&cfg, &ds).unwrap();
    let captioner = prep.captioner().clone();
    let before = encode_params(&captioner.store);
    let dim = ds.feature_dim().unwrap();
    let out = train_selector(cfg.new_selector(dim), &captioner, &prep.train, &prep.train_labels, &cfg.selector_training())
        .unwrap();
    assert_eq!(encode_params(&captioner.store), before);
    assert!(out.final_loss.is_finite());
}

#[test]
fn same_seed_runs_are_byte_identical() {
    let cfg = quick();
    let run = || {
        let ds = synth_generate(&cfg.synth()).unwrap();
        let prep = Prepared::new(&cfg, &ds).unwrap();
        let variant = prep
            .selector_variant("s3", prep.captioner(), Scheme::S3, SelectorInputs::default())
            .unwrap();
        (
            encode_params(&prep.xe.net.store),
            encode_params(&prep.captioner().store),
            serde_json::to_string(&prep.localizer.scorer).unwrap(),
            variant.cider.to_bits(),
            variant.selection,
        )
    };
    let (a, b) = (run(), run());
    assert!(a.0 == b.0, "XE checkpoints differ");
    assert!(a.1 == b.1, "SCST checkpoints differ");
    assert_eq!(a.2, b.2);
    assert_eq!((a.3, a.4), (b.3, b.4));
    let other = RunConfig { seed: cfg.seed + 1, ..cfg.clone() };
    let ds = synth_generate(&other.synth()).unwrap();
    let prep = Prepared::new(&other, &ds).unwrap();
    assert!(encode_params(&prep.xe.net.store) != a.0);
}
