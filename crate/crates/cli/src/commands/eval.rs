use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use swie_core::align::{bleu, faithfulness_score, text_coverage, CoverageScore, LexicalAligner, TranslationTable};
use swie_core::corpus::Language;

use super::{align_table_path, out_dir, require};
use crate::{read_lines, write_text, CliError, Result, RunConfig};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default)]
pub struct EvalArgs {
    pub out_dir: Option<PathBuf>,
    pub hyps: PathBuf,
    pub refs: PathBuf,
    pub sources: PathBuf,
    pub source_lang: Option<Language>,
    pub target_lang: Option<Language>,
    /// Defaults to `<hyps>.metrics.json`.
    pub output: Option<PathBuf>,
    pub per_sentence: Option<bool>,
    pub dry_run: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    pub schema_version: u32,
    pub sentences: usize,
    pub bleu: f64,
    /// `100 × mean` of per-sentence source and target coverage.
    pub faithfulness: f64,
    pub source_coverage: f64,
    pub target_coverage: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_sentence: Option<Vec<CoverageScore>>,
}

/// BLEU against the references plus coverage of the hypotheses against the
/// sources, written as JSON.
pub fn cmd_eval(config: &RunConfig, args: &EvalArgs) -> Result<Metrics> {
    let dir = out_dir(config, args.out_dir.as_deref());
    let src = args.source_lang.unwrap_or(config.translate.source_lang);
    let tgt = args.target_lang.unwrap_or(config.translate.target_lang);
    let hyps = read_lines(&args.hyps)?;
    let refs = read_lines(&args.refs)?;
    let sources = read_lines(&args.sources)?;
    if hyps.len() != refs.len() {
        return Err(CliError::LineMismatch { what: "hypotheses vs references", left: hyps.len(), right: refs.len() });
    }
    if hyps.len() != sources.len() {
        return Err(CliError::LineMismatch { what: "hypotheses vs sources", left: hyps.len(), right: sources.len() });
    }
    let table_path = align_table_path(&dir, src, tgt);
    require(&table_path, "synth")?;
    let aligner = LexicalAligner { table: TranslationTable::load(&table_path)?, threshold: config.align.threshold };

    let items: Vec<(String, String)> = sources.iter().cloned().zip(hyps.iter().cloned()).collect();
    let scores = items.iter().map(|(s, h)| text_coverage(&aligner, s, h)).collect::<std::result::Result<Vec<_>, _>>()?;
    let n = scores.len() as f64;
    let metrics = Metrics {
        schema_version: METRICS_SCHEMA_VERSION,
        sentences: hyps.len(),
        bleu: bleu(&hyps, &refs, config.eval.max_order)?,
        faithfulness: faithfulness_score(&aligner, &items)?,
        source_coverage: scores.iter().map(|c| c.source).sum::<f64>() / n,
        target_coverage: scores.iter().map(|c| c.target).sum::<f64>() / n,
        per_sentence: args.per_sentence.unwrap_or(config.eval.per_sentence).then_some(scores),
    };
    if !args.dry_run {
        let output = args.output.clone().unwrap_or_else(|| args.hyps.with_extension("metrics.json"));
        let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
        write_text(&output, &format!("{json}\n"))?;
    }
    Ok(metrics)
}
