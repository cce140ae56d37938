//! Data shipped with the tool.

use swie_core::corpus::{parse_jsonl, parse_parallel, InstructionRecord, ParallelPair};

/// Seed and size that produced [`TOY_CORPUS`].
pub const TOY_CORPUS_SEED: u64 = 2024;
pub const TOY_CORPUS_PAIRS: usize = 500;

/// English→German pairs followed by English→French pairs.
pub const TOY_CORPUS: &str = include_str!("../data/toy_corpus.tsv");

/// 32 short translation records: 16 plain, 8 contrastive, 8 hinted.
pub const TOY_RECORDS: &str = include_str!("../data/toy_records.jsonl");

/// Starting configuration for the toy pipeline.
pub const TOY_CONFIG: &str = include_str!("../data/toy.toml");

pub fn toy_corpus() -> Vec<ParallelPair> {
    parse_parallel(TOY_CORPUS).expect("bundled corpus parses")
}

pub fn toy_records() -> Vec<InstructionRecord> {
    parse_jsonl(TOY_RECORDS).expect("bundled records parse")
}
