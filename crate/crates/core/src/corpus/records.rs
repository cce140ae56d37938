//! Record assembly and file formats.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{CorpusError, ErrorType, HintType, InstructionRecord, Language, NegativeSample, ParallelPair, RecordKind};
use crate::segmenter::PromptTemplate;

/// Which records [`build_overmiss_records`] emits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecordModes {
    pub plain: bool,
    pub contrastive: bool,
    /// Add a hinted record whose hint names the negative's error type.
    pub matched_hint: bool,
    /// Further hints emitted for every negative.
    pub hints: Vec<HintType>,
}

impl Default for RecordModes {
    fn default() -> Self {
        Self { plain: true, contrastive: true, matched_hint: true, hints: Vec::new() }
    }
}

impl RecordModes {
    pub fn plain_only() -> Self {
        Self { plain: true, contrastive: false, matched_hint: false, hints: Vec::new() }
    }

    pub fn negatives_only() -> Self {
        Self { plain: false, ..Self::default() }
    }
}

fn matched(error: ErrorType) -> HintType {
    match error {
        ErrorType::Miss => HintType::NoMiss,
        ErrorType::Over => HintType::NoOver,
    }
}

/// Builds the instruction records for one pair.
///
/// The plain record needs no negative. Contrastive and hinted records are
/// emitted only when `negative` is given; all of them answer with the
/// reference translation.
pub fn build_overmiss_records(
    pair: &ParallelPair,
    negative: Option<&NegativeSample>,
    modes: &RecordModes,
    template: &PromptTemplate,
) -> Vec<InstructionRecord> {
    let (src, tgt) = (pair.source_lang, pair.target_lang);
    let record = |instruction: String, input: String, hint_type, record_kind| InstructionRecord {
        instruction,
        input,
        response: pair.target.clone(),
        hint_type,
        record_kind,
    };
    let mut out = Vec::new();
    if modes.plain {
        out.push(record(template.instruction(src, tgt, HintType::None), pair.source.clone(), HintType::None, RecordKind::Plain));
    }
    let Some(neg) = negative else { return out };
    if modes.contrastive {
        out.push(record(
            template.contrastive_instruction(src, tgt, neg.error_type),
            template.contrastive_input(&pair.source, &neg.corrupted),
            HintType::None,
            RecordKind::Contrastive,
        ));
    }
    let mut hints = Vec::new();
    if modes.matched_hint {
        hints.push(matched(neg.error_type));
    }
    hints.extend(modes.hints.iter().copied().filter(|h| *h != HintType::None));
    let mut seen = Vec::new();
    for h in hints {
        if seen.contains(&h) {
            continue;
        }
        seen.push(h);
        out.push(record(template.instruction(src, tgt, h), pair.source.clone(), h, RecordKind::Hinted));
    }
    out
}

/// Parses JSON Lines, skipping blank lines. Errors carry 1-based line numbers.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, CorpusError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CorpusError::Jsonl { line: i + 1, message: e.to_string() }))
        .collect()
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    parse_jsonl(&std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?)
}

pub fn save_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    std::fs::write(path, to_jsonl(items)).map_err(|e| CorpusError::io(path, e))
}

pub fn load_records(path: &Path) -> Result<Vec<InstructionRecord>, CorpusError> {
    load_jsonl(path)
}

pub fn save_records(path: &Path, records: &[InstructionRecord]) -> Result<(), CorpusError> {
    save_jsonl(path, records)
}

/// Merges runs of adjacent pairs into long items.
///
/// Group sizes are drawn uniformly from `k_range` (inclusive); a final run
/// shorter than the drawn size becomes its own group. All pairs must share
/// one language direction.
pub fn concat_adjacent(pairs: &[ParallelPair], k_range: (usize, usize), seed: u64) -> Result<Vec<ParallelPair>, CorpusError> {
    let (lo, hi) = k_range;
    if lo == 0 || lo > hi {
        return Err(CorpusError::InvalidRange(lo, hi));
    }
    if let Some(first) = pairs.first() {
        if pairs.iter().any(|p| (p.source_lang, p.target_lang) != (first.source_lang, first.target_lang)) {
            return Err(CorpusError::MixedLanguages);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut start = 0;
    while start < pairs.len() {
        let k = rng.random_range(lo..=hi);
        let group = &pairs[start..(start + k).min(pairs.len())];
        let join = |f: fn(&ParallelPair) -> &str| group.iter().map(f).collect::<Vec<_>>().join(" ");
        out.push(ParallelPair {
            source: join(|p| p.source.trim()),
            target: join(|p| p.target.trim()),
            source_lang: group[0].source_lang,
            target_lang: group[0].target_lang,
        });
        start += group.len();
    }
    Ok(out)
}

const LANGS_HEADER: &str = "#langs";

/// Parses tab-separated pairs. A `#langs<TAB>src<TAB>tgt` line sets the
/// direction for the lines after it.
pub fn parse_parallel(text: &str) -> Result<Vec<ParallelPair>, CorpusError> {
    let mut langs: Option<(Language, Language)> = None;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| CorpusError::Tsv { line: i + 1, message };
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields[0] == LANGS_HEADER {
            if fields.len() != 3 {
                return Err(err("header needs two language tags".into()));
            }
            let parse = |s: &str| s.trim().parse::<Language>().map_err(|e| err(e.to_string()));
            langs = Some((parse(fields[1])?, parse(fields[2])?));
            continue;
        }
        let (src, tgt) = langs.ok_or_else(|| err("pair before any #langs header".into()))?;
        if fields.len() != 2 {
            return Err(err(format!("expected 2 tab-separated fields, got {}", fields.len())));
        }
        out.push(ParallelPair::new(fields[0], fields[1], src, tgt).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}

pub fn format_parallel(pairs: &[ParallelPair]) -> String {
    let mut out = String::new();
    let mut current = None;
    for p in pairs {
        let dir = (p.source_lang, p.target_lang);
        if current != Some(dir) {
            let _ = writeln!(out, "{LANGS_HEADER}\t{}\t{}", dir.0, dir.1);
            current = Some(dir);
        }
        let _ = writeln!(out, "{}\t{}", p.source, p.target);
    }
    out
}

pub fn load_parallel(path: &Path) -> Result<Vec<ParallelPair>, CorpusError> {
    parse_parallel(&std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?)
}

pub fn save_parallel(path: &Path, pairs: &[ParallelPair]) -> Result<(), CorpusError> {
    std::fs::write(path, format_parallel(pairs)).map_err(|e| CorpusError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{toy_corpus, Provenance};
    use proptest::prelude::*;

    fn negative(pair: &ParallelPair, error: ErrorType) -> NegativeSample {
        NegativeSample {
            pair: pair.clone(),
            corrupted: "ganz falsch".into(),
            error_type: error,
            provenance: Provenance::OfflineCorruptor,
            source_coverage: 0.5,
            target_coverage: 0.9,
        }
    }

    #[test]
    fn plain_mode_gives_one_record_per_pair() {
        let pairs = toy_corpus(1, 7);
        let t = PromptTemplate::default();
        let n: usize = pairs
            .iter()
            .map(|p| build_overmiss_records(p, Some(&negative(p, ErrorType::Miss)), &RecordModes::plain_only(), &t).len())
            .sum();
        assert_eq!(n, 7);
    }

    #[test]
    fn contrastive_and_hinted_records() {
        let p = &toy_corpus(1, 1)[0];
        let t = PromptTemplate::default();
        let modes = RecordModes { hints: vec![HintType::NoMiss, HintType::NoOverMiss], ..Default::default() };
        let recs = build_overmiss_records(p, Some(&negative(p, ErrorType::Miss)), &modes, &t);
        assert_eq!(recs.len(), 4);
        assert!(recs.iter().all(|r| r.response == p.target));
        let c = recs.iter().find(|r| r.record_kind == RecordKind::Contrastive).unwrap();
        assert!(c.input.contains("ganz falsch") && c.input.contains(&p.source));
        assert!(c.instruction.contains(t.error_name(ErrorType::Miss)));
        let clause = t.hint_clause(HintType::NoMiss).unwrap();
        let hinted = recs.iter().find(|r| r.hint_type == HintType::NoMiss).unwrap();
        assert_eq!(hinted.instruction.matches(clause).count(), 1);
        assert_eq!(recs.iter().filter(|r| r.hint_type == HintType::NoMiss).count(), 1);
    }

    #[test]
    fn jsonl_errors_name_the_line() {
        let good = r#"{"instruction":"a","input":"b","response":"c","hint_type":"none","record_kind":"plain"}"#;
        let missing = r#"{"instruction":"a","input":"b","hint_type":"none","record_kind":"plain"}"#;
        let extra = r#"{"instruction":"a","input":"b","response":"c","hint_type":"none","record_kind":"plain","x":1}"#;
        let text = format!("{good}\n\n{missing}\n");
        match parse_jsonl::<InstructionRecord>(&text) {
            Err(CorpusError::Jsonl { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_jsonl::<InstructionRecord>(extra), Err(CorpusError::Jsonl { line: 1, .. })));
        assert!(parse_jsonl::<InstructionRecord>("").unwrap().is_empty());
    }

    #[test]
    fn file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = toy_corpus(2, 9);
        let path = dir.path().join("pairs.tsv");
        save_parallel(&path, &pairs).unwrap();
        assert_eq!(load_parallel(&path).unwrap(), pairs);
        let t = PromptTemplate::default();
        let recs: Vec<_> = pairs.iter().flat_map(|p| build_overmiss_records(p, Some(&negative(p, ErrorType::Over)), &RecordModes::default(), &t)).collect();
        let path = dir.path().join("r.jsonl");
        save_records(&path, &recs).unwrap();
        assert_eq!(load_records(&path).unwrap(), recs);
    }

    #[test]
    fn tsv_needs_a_header() {
        assert!(matches!(parse_parallel("a\tb\n"), Err(CorpusError::Tsv { line: 1, .. })));
        assert!(matches!(parse_parallel("#langs\ten\tde\na b\n"), Err(CorpusError::Tsv { line: 2, .. })));
    }

    fn german(n: usize) -> Vec<ParallelPair> {
        toy_corpus(4, 2 * n).into_iter().take(n).collect()
    }

    #[test]
    fn forced_group_size() {
        let merged = concat_adjacent(&german(10), (5, 5), 0).unwrap();
        assert_eq!(merged.len(), 2);
        let merged = concat_adjacent(&german(11), (5, 5), 0).unwrap();
        assert_eq!(merged.len(), 3);
        assert!(concat_adjacent(&toy_corpus(1, 6), (3, 5), 0).is_err());
        assert!(concat_adjacent(&german(3), (0, 2), 0).is_err());
    }

    proptest! {
        #[test]
        fn concat_preserves_tokens(n in 0usize..30, seed: u64) {
            let pairs = german(n);
            let merged = concat_adjacent(&pairs, (3, 5), seed).unwrap();
            let count = |v: &[ParallelPair], f: fn(&ParallelPair) -> &str| -> usize {
                v.iter().map(|p| f(p).split_whitespace().count()).sum()
            };
            prop_assert_eq!(count(&merged, |p| &p.source), count(&pairs, |p| &p.source));
            prop_assert_eq!(count(&merged, |p| &p.target), count(&pairs, |p| &p.target));
            let joined: Vec<&str> = merged.iter().flat_map(|p| p.source.split_whitespace()).collect();
            let orig: Vec<&str> = pairs.iter().flat_map(|p| p.source.split_whitespace()).collect();
            prop_assert_eq!(joined, orig);
            prop_assert_eq!(&merged, &concat_adjacent(&pairs, (3, 5), seed).unwrap());
        }
    }
}
