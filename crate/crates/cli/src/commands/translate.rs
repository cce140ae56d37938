use std::path::PathBuf;

use swie_core::corpus::{HintType, InstructionRecord, Language, RecordKind};
use swie_core::model::Model;
use swie_core::segmenter::{assemble_record, PromptTemplate, Vocab};

use super::{direction_tag, out_dir, require, templates};
use crate::{read_lines, write_text, Result, RunConfig};

#[derive(Debug, Clone, Default)]
pub struct TranslateArgs {
    pub out_dir: Option<PathBuf>,
    /// Defaults to `<out>/model.json`.
    pub checkpoint: Option<PathBuf>,
    /// Defaults to `<out>/vocab.txt`.
    pub vocab: Option<PathBuf>,
    /// One source sentence per line.
    pub input: PathBuf,
    /// Defaults to `<out>/hyp.<src>-<tgt>.<hint>.txt`.
    pub output: Option<PathBuf>,
    pub hint: Option<HintType>,
    pub source_lang: Option<Language>,
    pub target_lang: Option<Language>,
    pub dry_run: bool,
}

/// Greedy translations of `lines`, one output line per input line. Blank
/// inputs give blank outputs.
#[allow(clippy::too_many_arguments)]
pub fn translate_lines(
    model: &Model,
    vocab: &Vocab,
    template: &PromptTemplate,
    lines: &[String],
    src: Language,
    tgt: Language,
    hint: HintType,
    max_new: usize,
) -> Result<Vec<String>> {
    let instruction = template.instruction(src, tgt, hint);
    lines
        .iter()
        .map(|line| {
            if line.trim().is_empty() {
                return Ok(String::new());
            }
            let record = InstructionRecord {
                instruction: instruction.clone(),
                input: line.clone(),
                response: String::new(),
                hint_type: hint,
                record_kind: RecordKind::Plain,
            };
            let prompt = assemble_record(&record, vocab)?;
            let out = model.generate(&prompt.tokens, &prompt.layout, max_new)?;
            Ok(vocab.detokenize(&out))
        })
        .collect()
}

pub fn cmd_translate(config: &RunConfig, args: &TranslateArgs) -> Result<PathBuf> {
    let dir = out_dir(config, args.out_dir.as_deref());
    let src = args.source_lang.unwrap_or(config.translate.source_lang);
    let tgt = args.target_lang.unwrap_or(config.translate.target_lang);
    let hint = args.hint.unwrap_or(config.translate.hint);
    let ckpt = args.checkpoint.clone().unwrap_or_else(|| dir.join("model.json"));
    let vocab_path = args.vocab.clone().unwrap_or_else(|| dir.join("vocab.txt"));
    require(&ckpt, "train")?;
    require(&vocab_path, "train")?;
    let output = args.output.clone().unwrap_or_else(|| {
        dir.join(format!("hyp.{}.{}.txt", direction_tag(src, tgt), hint.as_str().replace('/', "-")))
    });
    let lines = read_lines(&args.input)?;
    let template = templates(config)?;
    if args.dry_run {
        return Ok(output);
    }
    let model = Model::load(&ckpt)?;
    let vocab = Vocab::load(&vocab_path)?;
    let hyps = translate_lines(&model, &vocab, &template, &lines, src, tgt, hint, config.translate.max_new_tokens)?;
    let mut text = hyps.join("\n");
    if !hyps.is_empty() {
        text.push('\n');
    }
    write_text(&output, &text)?;
    Ok(output)
}
