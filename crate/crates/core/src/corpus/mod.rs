//! Instruction records, parallel data, and contrastive negative synthesis.

mod client;
mod corrupt;
mod prompts;
mod records;
mod synth;
mod toy;
mod types;

pub use client::{
    llm_generate_negative, ClientError, ExternalTextClient, HttpChatClient, HttpClientConfig, MockClient,
    RetryPolicy, AUTH_TOKEN_ENV,
};
pub use corrupt::{corrupt_offline, AlignerSet, CorruptError, MISS_SHARE, OVER_FRAGMENT};
pub use prompts::{render_llm_prompt, LlmPrompts};
pub use records::{
    build_overmiss_records, concat_adjacent, format_parallel, load_jsonl, load_parallel, load_records, parse_jsonl,
    parse_parallel, save_jsonl, save_parallel, save_records, to_jsonl, RecordModes,
};
pub use synth::{
    filter_by_coverage, synthesize, Candidate, CategoryStats, NegativeSource, Rejections, SynthesisPolicy,
    SynthesisReport,
};
pub use toy::toy_corpus;
pub use types::{
    ErrorType, HintType, InstructionRecord, Language, NegativeSample, ParallelPair, Provenance,
    RecordKind,
};

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("text is empty")]
    EmptyText,
    #[error("unknown language tag {0:?}")]
    UnknownLanguage(String),
    #[error("unknown error type {0:?}")]
    UnknownErrorType(String),
    #[error("unknown hint {given:?}; expected one of {valid}")]
    UnknownHint { given: String, valid: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(String, String),
    #[error("line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error("line {line}: {message}")]
    Tsv { line: usize, message: String },
    #[error("group size range [{0}, {1}] is empty or starts at 0")]
    InvalidRange(usize, usize),
    #[error("pairs span more than one language direction")]
    MixedLanguages,
}

impl CorpusError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CorpusError::Io(path.display().to_string(), e.to_string())
    }
}
