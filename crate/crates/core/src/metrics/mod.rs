//! N-gram captioning metrics: BLEU@1–4, CIDEr-D, Rouge-L, Self-BLEU and
//! Repetition Evaluation (RE), plus the corpus report emitter.

pub mod bleu;
pub mod cider;
pub mod ngram;
pub mod repetition;
pub mod report;
pub mod rouge;
pub mod self_bleu;

pub use bleu::{bleu, corpus_bleu};
pub use cider::{cider, CiderD};
pub use ngram::{ngram_counts, NGramMultiset};
pub use repetition::{corpus_re, re_score, DEFAULT_RE_N};
pub use report::{evaluate, EvalItem, MetricReport, ReportRow, REPORT_COLUMNS};
pub use rouge::{lcs_len, rouge_l};
pub use self_bleu::self_bleu;
