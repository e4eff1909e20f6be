//! Sentence generation for events.

pub mod net;
pub mod output;
pub mod vocab;

pub use net::{
    pool_subsegments, target_tokens, Attention, CaptionNet, CaptionShape, DecodeMode,
    DecoderState, EventContext, Paragraph, Sentence, StepOutput, SubsegmentFeatures,
    DEFAULT_MAX_LEN, DEFAULT_SUBSEGMENTS,
};
pub use output::{parse_paragraphs, paragraphs_to_jsonl, read_paragraphs, write_paragraphs, ParagraphRecord};
pub use vocab::{tokenize, Vocabulary, BOS, EOS, PAD, UNK};
