use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swie_core::corpus::{load_parallel, HintType, InstructionRecord, RecordKind};
use swie_core::model::Model;
use swie_core::probe::{attention_ratio, export_report, record_attention, RatioReport};
use swie_core::segmenter::{assemble_record, Vocab};

use super::{out_dir, require, templates};
use crate::config::TaggedCheckpoint;
use crate::{CliError, Result, RunConfig};

#[derive(Debug, Clone, Default)]
pub struct ProbeArgs {
    pub out_dir: Option<PathBuf>,
    /// Overrides the configured checkpoints. Without either, probes
    /// `<out>/model.json` and, when present, `<out>/baseline.json`.
    pub checkpoints: Vec<TaggedCheckpoint>,
    pub vocab: Option<PathBuf>,
    /// Parallel file to sample from; defaults to `<out>/test.tsv`.
    pub samples: Option<PathBuf>,
    /// Defaults to `<out>/probe.csv`.
    pub output: Option<PathBuf>,
    pub dry_run: bool,
}

/// Records attention on one seeded sample for every checkpoint and writes
/// the per-layer comparison CSV.
///
/// The CSV is written even when a ratio is undefined; the error lists the
/// offending tag/layer pairs.
pub fn cmd_probe(config: &RunConfig, args: &ProbeArgs) -> Result<Vec<(String, Vec<RatioReport>)>> {
    let dir = out_dir(config, args.out_dir.as_deref());
    let mut checkpoints =
        if args.checkpoints.is_empty() { config.probe.checkpoints.clone() } else { args.checkpoints.clone() };
    if checkpoints.is_empty() {
        checkpoints.push(TaggedCheckpoint { tag: "swie".into(), path: dir.join("model.json") });
        let baseline = dir.join("baseline.json");
        if baseline.exists() {
            checkpoints.push(TaggedCheckpoint { tag: "baseline".into(), path: baseline });
        }
    }
    for c in &checkpoints {
        require(&c.path, "train")?;
    }
    let vocab_path = args.vocab.clone().unwrap_or_else(|| dir.join("vocab.txt"));
    require(&vocab_path, "train")?;
    let samples_path = args.samples.clone().unwrap_or_else(|| dir.join("test.tsv"));
    require(&samples_path, "synth")?;

    let pairs = load_parallel(&samples_path)?;
    if pairs.is_empty() {
        return Err(CliError::Config(format!("{} holds no pairs", samples_path.display())));
    }
    let pick = ChaCha8Rng::seed_from_u64(config.seed).random_range(0..pairs.len());
    let pair = &pairs[pick];
    log::info!("probing sample {pick}: {}", pair.source);
    let template = templates(config)?;
    let record = InstructionRecord {
        instruction: template.instruction(pair.source_lang, pair.target_lang, HintType::None),
        input: pair.source.clone(),
        response: pair.target.clone(),
        hint_type: HintType::None,
        record_kind: RecordKind::Plain,
    };
    let vocab = Vocab::load(&vocab_path)?;
    let sample = assemble_record(&record, &vocab)?;
    if args.dry_run {
        return Ok(Vec::new());
    }

    let mut reports = Vec::new();
    for c in &checkpoints {
        let model = Model::load(&c.path)?;
        let (_, trace) = record_attention(&model, &sample.tokens, &sample.layout)?;
        reports.push((c.tag.clone(), attention_ratio(&trace, config.probe.head, config.probe.inverse)?));
    }
    let output = args.output.clone().unwrap_or_else(|| dir.join("probe.csv"));
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    export_report(&reports, &output)?;
    let undefined: Vec<String> = reports
        .iter()
        .flat_map(|(tag, rs)| rs.iter().filter(|r| r.ratio.is_none()).map(move |r| format!("{tag}/layer {}", r.layer)))
        .collect();
    if !undefined.is_empty() {
        for u in &undefined {
            log::warn!("undefined ratio: {u}");
        }
        return Err(CliError::UndefinedRatios(undefined.join(", ")));
    }
    Ok(reports)
}
