//! Video records, the synthetic corpus, annotation ingestion and the on-disk
//! dataset layout (manifest + vocabulary + annotations + feature files).

pub mod annotations;
pub mod features;
pub mod synth;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use annotations::{annotations_to_json, load_annotations, parse_annotations, AnnotatedVideo};
pub use features::{decode_features, encode_features, read_features, write_features};
pub use synth::{synth_generate, template_vocabulary, SynthConfig};

use crate::caption::Vocabulary;
use crate::error::{MftError, Result};
use crate::localize::{GroundTruthEvent, Span};
use crate::numcore::Matrix;
use crate::Token;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    /// Validation half used for checkpoint selection.
    Tuning,
    /// Validation half used for reporting.
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    /// `frames × D`.
    pub features: Matrix,
    /// Chronological.
    pub gt_events: Vec<GroundTruthEvent>,
    /// One or more reference paragraphs, each a list of sentences.
    pub references: Vec<Vec<Vec<Token>>>,
    pub split: Split,
}

impl VideoRecord {
    pub fn frames(&self) -> usize {
        self.features.rows()
    }

    pub fn gt_spans(&self) -> Vec<Span> {
        self.gt_events.iter().map(|e| e.span).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub videos: Vec<VideoRecord>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<VideoRecord> {
        self.videos.iter().filter(|v| v.split == split).cloned().collect()
    }

    /// `[train, tuning, eval]` counts.
    pub fn split_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for v in &self.videos {
            c[match v.split {
                Split::Train => 0,
                Split::Tuning => 1,
                Split::Eval => 2,
            }] += 1;
        }
        c
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.videos.first().map(|v| v.features.cols())
    }
}

/// Seeded shuffle, then the first `⌊n/2⌋` items form the tuning half.
pub fn split_validation<T: Clone>(items: &[T], seed: u64) -> (Vec<T>, Vec<T>) {
    let mut v = items.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let eval = v.split_off(items.len() / 2);
    (v, eval)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub features: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub fps: f64,
    pub feature_dim: usize,
    pub vocab: String,
    pub annotations: String,
    pub videos: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| MftError::io(path, e))
}

/// Writes `manifest.json`, `vocab.json`, `annotations.json` and one feature
/// file per video under `dir`.
pub fn save_dataset(dir: &Path, ds: &Dataset, fps: f64) -> Result<PathBuf> {
    let feat_dir = dir.join("features");
    fs::create_dir_all(&feat_dir).map_err(|e| MftError::io(&feat_dir, e))?;
    let mut entries = Vec::with_capacity(ds.videos.len());
    let mut annotated = Vec::with_capacity(ds.videos.len());
    for v in &ds.videos {
        let rel = format!("features/{}.mftf", v.id);
        write_features(&dir.join(&rel), &v.features)?;
        entries.push(ManifestEntry {
            id: v.id.clone(),
            features: rel,
            split: v.split,
        });
        annotated.push(AnnotatedVideo {
            id: v.id.clone(),
            duration: v.frames() as f64 / fps,
            frames: v.frames(),
            spans: v.gt_spans(),
            sentences: v
                .gt_events
                .iter()
                .map(|e| {
                    e.sentence
                        .iter()
                        .map(|&t| ds.vocab.word(t).unwrap_or("<unk>").to_string())
                        .collect()
                })
                .collect(),
        });
    }
    write_text(&dir.join("vocab.json"), &ds.vocab.to_json())?;
    write_text(&dir.join("annotations.json"), &annotations_to_json(&annotated, fps))?;
    let manifest = Manifest {
        fps,
        feature_dim: ds.feature_dim().unwrap_or(0),
        vocab: "vocab.json".into(),
        annotations: "annotations.json".into(),
        videos: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    write_text(&path, &serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Accepts either a manifest file or a directory containing `manifest.json`.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(&manifest_path).map_err(|e| MftError::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| MftError::parse(manifest_path.display().to_string(), e.to_string()))?;

    let vocab_path = dir.join(&manifest.vocab);
    let vocab_text = fs::read_to_string(&vocab_path).map_err(|e| MftError::io(&vocab_path, e))?;
    let vocab = Vocabulary::from_json(&vocab_text)?;
    let annotated = load_annotations(&dir.join(&manifest.annotations), manifest.fps)?;
    let by_id: HashMap<&str, &AnnotatedVideo> =
        annotated.iter().map(|a| (a.id.as_str(), a)).collect();

    let mut videos = Vec::with_capacity(manifest.videos.len());
    for entry in &manifest.videos {
        let ann = by_id.get(entry.id.as_str()).ok_or_else(|| MftError::IdMismatch {
            missing: vec![entry.id.clone()],
        })?;
        let features = read_features(&dir.join(&entry.features))?;
        if features.cols() != manifest.feature_dim {
            return Err(MftError::parse(
                entry.features.clone(),
                format!("feature dim {} but manifest says {}", features.cols(), manifest.feature_dim),
            ));
        }
        videos.push(record_from_annotation(ann, features, &vocab, entry.split)?);
    }
    Ok(Dataset { vocab, videos })
}

/// Joins an annotation with its features. Spans are clipped to the feature
/// length; a span that starts past the last frame is an error.
pub fn record_from_annotation(
    ann: &AnnotatedVideo,
    features: Matrix,
    vocab: &Vocabulary,
    split: Split,
) -> Result<VideoRecord> {
    let frames = features.rows();
    let mut gt_events = Vec::with_capacity(ann.spans.len());
    for (span, words) in ann.spans.iter().zip(&ann.sentences) {
        if span.start >= frames {
            return Err(MftError::parse(
                format!("annotations[{}]", ann.id),
                format!("event starts at frame {} but features have {frames} frames", span.start),
            ));
        }
        gt_events.push(GroundTruthEvent {
            span: Span {
                start: span.start,
                end: span.end.min(frames),
            },
            sentence: vocab.encode_words(words),
        });
    }
    gt_events.sort_by_key(|e| e.span);
    let paragraph = gt_events.iter().map(|e| e.sentence.clone()).collect();
    Ok(VideoRecord {
        id: ann.id.clone(),
        features,
        gt_events,
        references: vec![paragraph],
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        let ids: Vec<usize> = (0..4917).collect();
        let (a, b) = split_validation(&ids, 3);
        assert_eq!((a.len(), b.len()), (2458, 2459));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, ids);
        assert_eq!(split_validation(&ids, 3), (a, b));
        let (a, b) = split_validation(&["x", "y"], 0);
        assert_eq!((a.len(), b.len()), (1, 1));
    }

    #[test]
    fn dataset_roundtrips_through_disk() {
        let cfg = SynthConfig {
            n_videos: 6,
            val_videos: 2,
            ..Default::default()
        };
        let ds = synth_generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = save_dataset(dir.path(), &ds, 1.0).unwrap();
        let back = load_dataset(&manifest).unwrap();
        assert_eq!(back.vocab, ds.vocab);
        assert_eq!(back.videos.len(), 6);
        for (a, b) in ds.videos.iter().zip(&back.videos) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.split, b.split);
            assert_eq!(a.gt_events, b.gt_events);
            for (x, y) in a.features.as_slice().iter().zip(b.features.as_slice()) {
                assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0));
            }
        }
        assert_eq!(load_dataset(dir.path()).unwrap(), back);
    }
}
