use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;
use swie_core::corpus::{load_records, InstructionRecord};
use swie_core::model::{Model, ModelConfig};
use swie_core::segmenter::{assemble_record, Vocab};
use swie_core::trainer::{write_log, Datasets, LogEntry, TrainCheckpoint, TrainConfig, Trainer};

use super::{out_dir, require};
use crate::{CliError, Result, RunConfig};

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub out_dir: Option<PathBuf>,
    /// Run only this 1-based stage, starting from the previous stage's
    /// checkpoint when there is one.
    pub stage: Option<usize>,
    /// Continue from `<name>.state.json`.
    pub resume: bool,
    /// Stop (and save state) once this many steps have run in total.
    pub max_steps: Option<usize>,
    /// File stem of the written checkpoints.
    pub name: String,
    pub no_swie: bool,
    pub dry_run: bool,
}

impl Default for TrainArgs {
    fn default() -> Self {
        Self { out_dir: None, stage: None, resume: false, max_steps: None, name: "model".into(), no_swie: false, dry_run: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub records: usize,
    pub skipped_too_long: usize,
    pub vocab_size: usize,
    pub parameters: usize,
    pub steps: usize,
    pub final_eval_loss: Option<f64>,
    pub finished: bool,
}

/// Reads `<dir>/<name>.jsonl` for every dataset named by the stages.
pub fn load_datasets(dir: &Path, config: &TrainConfig) -> Result<Vec<(String, Vec<InstructionRecord>)>> {
    let names: BTreeSet<&str> = config.stages.iter().flat_map(|s| s.datasets.iter().map(String::as_str)).collect();
    names
        .into_iter()
        .map(|name| {
            let path = dir.join(format!("{name}.jsonl"));
            require(&path, "synth")?;
            Ok((name.to_string(), load_records(&path)?))
        })
        .collect()
}

fn vocab_for(raw: &[(String, Vec<InstructionRecord>)]) -> Vocab {
    Vocab::from_texts(
        raw.iter()
            .flat_map(|(_, recs)| recs)
            .flat_map(|r| [r.instruction.as_str(), r.input.as_str(), r.response.as_str()]),
    )
}

fn assemble(raw: &[(String, Vec<InstructionRecord>)], vocab: &Vocab, max_len: usize) -> Result<(Datasets, usize)> {
    let mut sets = Datasets::new();
    let mut skipped = 0;
    for (name, recs) in raw {
        let mut out = Vec::with_capacity(recs.len());
        for r in recs {
            let a = assemble_record(r, vocab)?;
            if a.tokens.len() > max_len {
                skipped += 1;
            } else {
                out.push(a);
            }
        }
        sets.insert(name.clone(), out);
    }
    Ok((sets, skipped))
}

fn final_eval(log: &[LogEntry]) -> Option<f64> {
    log.iter().rev().find_map(|e| match e {
        LogEntry::StageEval { loss, .. } => Some(*loss),
        _ => None,
    })
}

/// Runs the curriculum over the record files written by `synth`.
///
/// Writes `vocab.txt`, `<name>.json` (final weights), `<name>.stage<k>.json`
/// after each stage, `<name>.log.jsonl` and the resumable
/// `<name>.state.json`.
pub fn cmd_train(config: &RunConfig, args: &TrainArgs) -> Result<TrainSummary> {
    let dir = out_dir(config, args.out_dir.as_deref());
    let mut train_cfg = TrainConfig { seed: config.seed, ..config.trainer.clone() };
    let stage_offset = match args.stage {
        Some(k) if k == 0 || k > train_cfg.stages.len() => {
            return Err(CliError::Config(format!("stage {k} not in 1..={}", train_cfg.stages.len())))
        }
        Some(k) => {
            train_cfg.stages = vec![train_cfg.stages[k - 1].clone()];
            k - 1
        }
        None => 0,
    };
    // The vocabulary spans every stage so single-stage runs share it.
    let mut raw = load_datasets(&dir, &config.trainer)?;
    let vocab = vocab_for(&raw);
    raw.retain(|(name, _)| train_cfg.stages.iter().any(|s| s.datasets.contains(name)));
    let model_cfg = ModelConfig {
        vocab_size: vocab.len(),
        swie_enabled: config.model.swie_enabled && !args.no_swie,
        ..config.model.clone()
    };
    let (datasets, skipped) = assemble(&raw, &vocab, model_cfg.max_seq_len)?;
    if skipped > 0 {
        log::warn!("skipped {skipped} records longer than {} tokens", model_cfg.max_seq_len);
    }
    let records = datasets.values().map(Vec::len).sum();
    let state_path = dir.join(format!("{}.state.json", args.name));

    let model = if stage_offset > 0 {
        let prev = dir.join(format!("{}.stage{stage_offset}.json", args.name));
        require(&prev, "train")?;
        let m = Model::load(&prev)?;
        if m.config != model_cfg {
            return Err(CliError::Config(format!("{} was trained with a different model config", prev.display())));
        }
        m
    } else {
        Model::new(model_cfg, config.seed)?
    };
    let parameters = model.params.num_parameters();
    if args.dry_run {
        return Ok(TrainSummary {
            records,
            skipped_too_long: skipped,
            vocab_size: vocab.len(),
            parameters,
            steps: 0,
            final_eval_loss: None,
            finished: false,
        });
    }

    let mut trainer = if args.resume {
        require(&state_path, "train")?;
        Trainer::resume(train_cfg.clone(), &datasets, TrainCheckpoint::load(&state_path)?)?
    } else {
        Trainer::new(train_cfg.clone(), &datasets, model)?
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    vocab.save(&dir.join("vocab.txt"))?;
    let limit = args.max_steps.unwrap_or(usize::MAX);
    while !trainer.is_done() && trainer.global_step() < limit {
        let stage = trainer.stage();
        trainer.step()?;
        if trainer.stage() != stage {
            let k = stage_offset + stage + 1;
            trainer.model().save(&dir.join(format!("{}.stage{k}.json", args.name)))?;
        }
    }
    trainer.checkpoint().save(&state_path)?;
    write_log(&dir.join(format!("{}.log.jsonl", args.name)), trainer.log())?;
    let finished = trainer.is_done();
    if finished {
        trainer.model().save(&dir.join(format!("{}.json", args.name)))?;
    }
    Ok(TrainSummary {
        records,
        skipped_too_long: skipped,
        vocab_size: vocab.len(),
        parameters,
        steps: trainer.global_step(),
        final_eval_loss: final_eval(trainer.log()),
        finished,
    })
}
