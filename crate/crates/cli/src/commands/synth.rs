use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use swie_core::align::LexicalAligner;
use swie_core::corpus::{
    build_overmiss_records, format_parallel, load_parallel, save_jsonl, synthesize, to_jsonl, AlignerSet,
    HttpChatClient, InstructionRecord, LlmPrompts, NegativeSample, NegativeSource, ParallelPair, RecordModes,
    SynthesisReport,
};

use super::{align_table_path, direction_tag, out_dir, templates};
use crate::config::NegativeMode;
use crate::{data, write_text, Result, RunConfig};

#[derive(Debug, Clone, Default)]
pub struct SynthArgs {
    pub out_dir: Option<PathBuf>,
    pub dry_run: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSummary {
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub negatives: usize,
    pub plain_records: usize,
    pub hinted_records: usize,
    pub report: SynthesisReport,
}

/// Splits off the last `n` pairs of each direction as a test set.
fn split(pairs: Vec<ParallelPair>, n: usize) -> (Vec<ParallelPair>, Vec<ParallelPair>) {
    let mut per_dir: BTreeMap<_, usize> = BTreeMap::new();
    for p in &pairs {
        *per_dir.entry((p.source_lang, p.target_lang)).or_default() += 1;
    }
    let mut seen: BTreeMap<_, usize> = BTreeMap::new();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for p in pairs {
        let dir = (p.source_lang, p.target_lang);
        let k = seen.entry(dir).or_default();
        *k += 1;
        if *k + n > per_dir[&dir] {
            test.push(p);
        } else {
            train.push(p);
        }
    }
    (train, test)
}

/// The coverage table in the layout of a data-statistics table.
pub fn format_report(r: &SynthesisReport) -> String {
    let mut out = format!("{:<10} {:>6} {:>10} {:>10}\n", "category", "count", "src-cov", "tgt-cov");
    for (name, c) in [("reference", &r.reference), ("miss", &r.miss), ("over", &r.over)] {
        out.push_str(&format!("{name:<10} {:>6} {:>10.4} {:>10.4}\n", c.count, c.mean_source, c.mean_target));
    }
    out.push_str(&format!("rejected   {:>6}\n", r.rejected.total()));
    out
}

/// Trains aligners, synthesizes negatives and assembles the record files.
///
/// Writes `align.<dir>.tsv`, `negatives.jsonl`, `plain.jsonl`,
/// `hinted.jsonl`, `train.tsv`, `test.tsv`, `test.<dir>.src`/`.ref` and
/// `synth_report.json` into the output directory.
pub fn cmd_synth(config: &RunConfig, args: &SynthArgs) -> Result<SynthSummary> {
    let pairs = match &config.paths.corpus {
        Some(p) => load_parallel(p)?,
        None => data::toy_corpus(),
    };
    let (train, test) = split(pairs, config.corpus.test_per_direction);
    let mut aligners = AlignerSet::train(&train, config.align.iterations)?;
    let dirs: Vec<_> = aligners.directions().copied().collect();
    for &(s, t) in &dirs {
        let a = aligners.get(s, t).expect("direction listed").clone();
        aligners.insert(s, t, LexicalAligner { threshold: config.align.threshold, ..a });
    }

    let client;
    let prompts;
    let source = match config.corpus.mode {
        NegativeMode::Offline => NegativeSource::Offline,
        NegativeMode::Llm => {
            client = HttpChatClient::from_env(config.corpus.llm.clone())?;
            prompts = match &config.paths.llm_prompts {
                Some(p) => LlmPrompts::load(p)?,
                None => LlmPrompts::default(),
            };
            NegativeSource::Llm { client: &client, retry: &config.corpus.retry, prompts: &prompts }
        }
    };
    let (negatives, report) = synthesize(&train, &aligners, &config.corpus.policy, source, config.seed)?;

    let template = templates(config)?;
    let plain: Vec<InstructionRecord> = train
        .iter()
        .flat_map(|p| build_overmiss_records(p, None, &RecordModes::plain_only(), &template))
        .collect();
    let hinted_modes = RecordModes { plain: false, ..config.corpus.records.clone() };
    let hinted: Vec<InstructionRecord> = negatives
        .iter()
        .flat_map(|n: &NegativeSample| build_overmiss_records(&n.pair, Some(n), &hinted_modes, &template))
        .collect();

    let summary = SynthSummary {
        train_pairs: train.len(),
        test_pairs: test.len(),
        negatives: negatives.len(),
        plain_records: plain.len(),
        hinted_records: hinted.len(),
        report,
    };
    if args.dry_run {
        return Ok(summary);
    }

    let dir = out_dir(config, args.out_dir.as_deref());
    for &(s, t) in &dirs {
        let table = &aligners.get(s, t).expect("direction listed").table;
        write_text(&align_table_path(&dir, s, t), &table.to_text())?;
    }
    write_text(&dir.join("negatives.jsonl"), &to_jsonl(&negatives))?;
    save_jsonl(&dir.join("plain.jsonl"), &plain)?;
    save_jsonl(&dir.join("hinted.jsonl"), &hinted)?;
    write_text(&dir.join("train.tsv"), &format_parallel(&train))?;
    write_text(&dir.join("test.tsv"), &format_parallel(&test))?;
    write_test_sides(&dir, &test)?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_text(&dir.join("synth_report.json"), &format!("{json}\n"))?;
    Ok(summary)
}

fn write_test_sides(dir: &Path, test: &[ParallelPair]) -> Result<()> {
    let mut by_dir: BTreeMap<_, (String, String)> = BTreeMap::new();
    for p in test {
        let e = by_dir.entry(direction_tag(p.source_lang, p.target_lang)).or_default();
        e.0.push_str(&p.source);
        e.0.push('\n');
        e.1.push_str(&p.target);
        e.1.push('\n');
    }
    for (tag, (src, reference)) in by_dir {
        write_text(&dir.join(format!("test.{tag}.src")), &src)?;
        write_text(&dir.join(format!("test.{tag}.ref")), &reference)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use swie_core::corpus::{toy_corpus, Language};

    #[test]
    fn split_holds_out_the_tail_of_each_direction() {
        let pairs = toy_corpus(0, 20);
        let (train, test) = split(pairs.clone(), 3);
        assert_eq!((train.len(), test.len()), (14, 6));
        assert_eq!(test.iter().filter(|p| p.target_lang == Language::De).count(), 3);
        assert_eq!(test.last(), pairs.last());
    }
}
