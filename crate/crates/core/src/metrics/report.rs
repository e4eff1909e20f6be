use serde::{Deserialize, Serialize};

use super::bleu::corpus_bleu;
use super::cider::CiderD;
use super::repetition::{corpus_re, DEFAULT_RE_N};
use super::rouge::rouge_l;
use super::self_bleu::self_bleu;
use crate::error::{MftError, Result};
use crate::Token;

/// One generated paragraph with its reference paragraphs, all as sentence lists.
#[derive(Clone, Debug)]
pub struct EvalItem {
    pub id: String,
    pub hypothesis: Vec<Vec<Token>>,
    pub references: Vec<Vec<Vec<Token>>>,
}

/// Corpus-level scores in `[0, 1]` (CIDEr-D divided by 10).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cider: f64,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub self_bleu: f64,
    pub re: f64,
}

/// Display row: percentages with two decimals, in table column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(rename = "CIDEr")]
    pub cider: f64,
    #[serde(rename = "BLEU@4")]
    pub bleu4: f64,
    #[serde(rename = "BLEU@3")]
    pub bleu3: f64,
    #[serde(rename = "BLEU@2")]
    pub bleu2: f64,
    #[serde(rename = "BLEU@1")]
    pub bleu1: f64,
    #[serde(rename = "Rouge-L")]
    pub rouge_l: f64,
    #[serde(rename = "RE")]
    pub re: f64,
    #[serde(rename = "Self-BLEU")]
    pub self_bleu: f64,
}

pub const REPORT_COLUMNS: [&str; 8] = [
    "CIDEr", "BLEU@4", "BLEU@3", "BLEU@2", "BLEU@1", "Rouge-L", "RE", "Self-BLEU",
];

fn percent(x: f64) -> f64 {
    (x * 100.0 * 100.0).round() / 100.0
}

impl MetricReport {
    pub fn row(&self) -> ReportRow {
        ReportRow {
            cider: percent(self.cider),
            bleu4: percent(self.bleu4),
            bleu3: percent(self.bleu3),
            bleu2: percent(self.bleu2),
            bleu1: percent(self.bleu1),
            rouge_l: percent(self.rouge_l),
            re: percent(self.re),
            self_bleu: percent(self.self_bleu),
        }
    }

    pub fn to_text(&self, label: &str) -> String {
        let r = self.row();
        let values = [
            r.cider, r.bleu4, r.bleu3, r.bleu2, r.bleu1, r.rouge_l, r.re, r.self_bleu,
        ];
        let label_width = label.len().max(5);
        let mut out = format!("{:<label_width$}", "Model");
        for c in REPORT_COLUMNS {
            out.push_str(&format!(" | {c:>9}"));
        }
        out.push('\n');
        out.push_str(&format!("{label:<label_width$}"));
        for v in values {
            out.push_str(&format!(" | {v:>9.2}"));
        }
        out.push('\n');
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.row()).expect("report row serializes")
    }
}

fn join(sentences: &[Vec<Token>]) -> Vec<Token> {
    sentences.iter().flatten().copied().collect()
}

/// Paragraph-level evaluation: each paragraph is scored as one joined token
/// sequence; Self-BLEU looks at the individual generated sentences.
pub fn evaluate(items: &[EvalItem]) -> Result<MetricReport> {
    if items.is_empty() {
        return Err(MftError::contract("evaluation over an empty corpus"));
    }
    let hyps: Vec<Vec<Token>> = items.iter().map(|it| join(&it.hypothesis)).collect();
    let refs: Vec<Vec<Vec<Token>>> = items
        .iter()
        .map(|it| it.references.iter().map(|p| join(p)).collect())
        .collect();
    if let Some(bad) = items.iter().find(|it| it.references.is_empty()) {
        return Err(MftError::contract(format!("item {} has no references", bad.id)));
    }
    let cider = CiderD::new(&refs)?.corpus_score(&hyps, &refs)? / 10.0;
    let bleu = corpus_bleu(&hyps, &refs, 4)?;
    let rouge = hyps
        .iter()
        .zip(&refs)
        .map(|(h, r)| rouge_l(h, r))
        .sum::<f64>()
        / items.len() as f64;
    let sb = items.iter().map(|it| self_bleu(&it.hypothesis)).sum::<f64>() / items.len() as f64;
    let re = corpus_re(&hyps, DEFAULT_RE_N)?;
    Ok(MetricReport {
        cider,
        bleu1: bleu[0],
        bleu2: bleu[1],
        bleu3: bleu[2],
        bleu4: bleu[3],
        rouge_l: rouge,
        self_bleu: sb,
        re,
    })
}
