pub mod caption;
pub mod checks;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod localize;
pub mod metrics;
pub mod numcore;
pub mod pipeline;
pub mod select;
pub mod train;

pub use error::{MftError, Result};

/// Vocabulary index of a word.
pub type Token = u32;
