use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MftError>;

#[derive(Debug, Error)]
pub enum MftError {
    /// A caller broke an operation's precondition (shape mismatch, bad index, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("localization produced no candidates for a video with {gt_events} ground-truth events")]
    LocalizationFailure { gt_events: usize },

    #[error("missing upstream checkpoint {path:?}: run `train --phase {phase}` first")]
    MissingCheckpoint { phase: String, path: PathBuf },

    #[error("vocabulary mismatch: checkpoint has {checkpoint} tokens, data has {data}")]
    VocabMismatch { checkpoint: usize, data: usize },

    #[error("video ids do not match between inputs; missing: {missing:?}")]
    IdMismatch { missing: Vec<String> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl MftError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        MftError::Contract(msg.into())
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        MftError::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MftError::Io {
            path: path.into(),
            source,
        }
    }
}
