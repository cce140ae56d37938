//! Lexical word alignment, coverage-based faithfulness and corpus BLEU.

mod ibm1;
mod metrics;

pub use ibm1::{train_ibm1, train_ibm1_tokens, Ibm1Result, TranslationTable, NULL_WORD};
pub use metrics::{bleu, coverage, faithfulness_score, text_coverage, CoverageScore};

use std::collections::BTreeSet;

use thiserror::Error;

use crate::numerics::Real;

pub const DEFAULT_LINK_THRESHOLD: Real = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("alignment corpus is empty")]
    EmptyCorpus,
    #[error("at least one EM iteration is required")]
    ZeroIterations,
    #[error("source sentence is empty")]
    EmptySource,
    #[error("link ({src}, {tgt}) is out of range")]
    LinkOutOfRange { src: usize, tgt: usize },
    #[error("test set is empty")]
    EmptyTestset,
    #[error("no hypotheses given")]
    EmptyHypotheses,
    #[error("{left} hypotheses but {right} references")]
    LengthMismatch { left: usize, right: usize },
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
    #[error("table line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}: {1}")]
    Io(String, String),
}

/// `(source index, target index)` links for one sentence pair.
pub type AlignmentLinks = BTreeSet<(usize, usize)>;

/// Lowercased whitespace tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Anything that can link tokens of a sentence pair.
pub trait WordAligner: Sync {
    fn align(&self, source: &[String], target: &[String]) -> AlignmentLinks;
}

/// Union of source-side and target-side argmax links over a trained table.
#[derive(Debug, Clone, PartialEq)]
pub struct LexicalAligner {
    pub table: TranslationTable,
    pub threshold: Real,
}

impl LexicalAligner {
    pub fn new(table: TranslationTable) -> Self {
        Self { table, threshold: DEFAULT_LINK_THRESHOLD }
    }
}

impl WordAligner for LexicalAligner {
    fn align(&self, source: &[String], target: &[String]) -> AlignmentLinks {
        align_pair(source, target, &self.table, self.threshold)
    }
}

/// Each source token links to its most probable target token, and each
/// target token to its most probable source token,
/// when that probability reaches `threshold`. Ties go to the lower index.
pub fn align_pair(source: &[String], target: &[String], table: &TranslationTable, threshold: Real) -> AlignmentLinks {
    let mut links = AlignmentLinks::new();
    for (i, s) in source.iter().enumerate() {
        let mut best: Option<(usize, Real)> = None;
        for (j, t) in target.iter().enumerate() {
            let p = table.prob(s, t);
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((j, p));
            }
        }
        if let Some((j, p)) = best {
            if p >= threshold && p > 0.0 {
                links.insert((i, j));
            }
        }
    }
    for (j, t) in target.iter().enumerate() {
        let mut best: Option<(usize, Real)> = None;
        for (i, s) in source.iter().enumerate() {
            let p = table.prob(s, t);
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((i, p));
            }
        }
        if let Some((i, p)) = best {
            if p >= threshold && p > 0.0 {
                links.insert((i, j));
            }
        }
    }
    links
}
