//! ActivityNet-Captions style annotation files:
//! `{ video_id: { "duration": secs, "timestamps": [[s, e], ...], "sentences": [...] } }`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::caption::vocab::tokenize;
use crate::error::{MftError, Result};
use crate::localize::Span;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawAnnotation {
    pub duration: f64,
    pub timestamps: Vec<[f64; 2]>,
    pub sentences: Vec<String>,
}

/// One annotated video after validation and frame conversion.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedVideo {
    pub id: String,
    pub duration: f64,
    pub frames: usize,
    pub spans: Vec<Span>,
    pub sentences: Vec<Vec<String>>,
}

fn seconds_to_frame(t: f64, fps: f64) -> usize {
    (t * fps).round().max(0.0) as usize
}

pub fn parse_annotations(text: &str, fps: f64) -> Result<Vec<AnnotatedVideo>> {
    if !(fps > 0.0) {
        return Err(MftError::Config(format!("fps must be positive, got {fps}")));
    }
    let raw: BTreeMap<String, RawAnnotation> = serde_json::from_str(text)
        .map_err(|e| MftError::parse("annotations", e.to_string()))?;
    raw.into_iter()
        .map(|(id, a)| {
            let bad = |m: String| MftError::parse(format!("annotations[{id}]"), m);
            if !(a.duration > 0.0) || !a.duration.is_finite() {
                return Err(bad(format!("invalid duration {}", a.duration)));
            }
            if a.timestamps.len() != a.sentences.len() {
                return Err(bad(format!(
                    "{} timestamps but {} sentences",
                    a.timestamps.len(),
                    a.sentences.len()
                )));
            }
            let frames = seconds_to_frame(a.duration, fps).max(1);
            let mut spans = Vec::with_capacity(a.timestamps.len());
            for [s, e] in &a.timestamps {
                if !(*s >= 0.0 && s < e && *e <= a.duration) {
                    return Err(bad(format!(
                        "timestamp [{s}, {e}] outside [0, {}] or empty",
                        a.duration
                    )));
                }
                let start = seconds_to_frame(*s, fps).min(frames - 1);
                let end = seconds_to_frame(*e, fps).clamp(start + 1, frames);
                spans.push(Span { start, end });
            }
            let sentences: Vec<Vec<String>> = a.sentences.iter().map(|s| tokenize(s)).collect();
            if let Some(k) = sentences.iter().position(|s| s.is_empty()) {
                return Err(bad(format!("sentence {k} is empty")));
            }
            Ok(AnnotatedVideo {
                id,
                duration: a.duration,
                frames,
                spans,
                sentences,
            })
        })
        .collect()
}

pub fn load_annotations(path: &Path, fps: f64) -> Result<Vec<AnnotatedVideo>> {
    let text = fs::read_to_string(path).map_err(|e| MftError::io(path, e))?;
    parse_annotations(&text, fps)
}

/// Emits the same JSON layout `parse_annotations` reads.
pub fn annotations_to_json(videos: &[AnnotatedVideo], fps: f64) -> String {
    let map: BTreeMap<&str, RawAnnotation> = videos
        .iter()
        .map(|v| {
            (
                v.id.as_str(),
                RawAnnotation {
                    duration: v.duration,
                    timestamps: v
                        .spans
                        .iter()
                        .map(|s| [s.start as f64 / fps, s.end as f64 / fps])
                        .collect(),
                    sentences: v.sentences.iter().map(|s| s.join(" ")).collect(),
                },
            )
        })
        .collect();
    serde_json::to_string_pretty(&map).expect("annotations serialize")
}
