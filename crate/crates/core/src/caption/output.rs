//! Generated paragraphs as JSON-lines, one object per video:
//! `{"video_id": ..., "sentences": [...], "spans": [[start, end], ...]}`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::Paragraph;
use super::vocab::Vocabulary;
use crate::error::{MftError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParagraphRecord {
    pub video_id: String,
    pub sentences: Vec<String>,
    pub spans: Vec<[usize; 2]>,
}

impl ParagraphRecord {
    pub fn from_paragraph(video_id: &str, para: &Paragraph, vocab: &Vocabulary) -> Self {
        ParagraphRecord {
            video_id: video_id.to_string(),
            sentences: para.sentences.iter().map(|s| vocab.decode(&s.tokens)).collect(),
            spans: para.spans.iter().map(|s| [s.start, s.end]).collect(),
        }
    }
}

pub fn paragraphs_to_jsonl(records: &[ParagraphRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("paragraph record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_paragraphs(path: &Path, records: &[ParagraphRecord]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| MftError::io(path, e))?;
    f.write_all(paragraphs_to_jsonl(records).as_bytes())
        .map_err(|e| MftError::io(path, e))
}

pub fn parse_paragraphs(text: &str) -> Result<Vec<ParagraphRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            serde_json::from_str(l)
                .map_err(|e| MftError::parse(format!("paragraph line {}", k + 1), e.to_string()))
        })
        .collect()
}

pub fn read_paragraphs(path: &Path) -> Result<Vec<ParagraphRecord>> {
    let text = fs::read_to_string(path).map_err(|e| MftError::io(path, e))?;
    parse_paragraphs(&text)
}
