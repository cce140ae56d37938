//! One function per subcommand.

mod concat;
mod eval;
mod probe;
mod synth;
mod train;
mod translate;

pub use concat::{cmd_concat, ConcatArgs};
pub use eval::{cmd_eval, EvalArgs, Metrics, METRICS_SCHEMA_VERSION};
pub use probe::{cmd_probe, ProbeArgs};
pub use synth::{cmd_synth, format_report, SynthArgs, SynthSummary};
pub use train::{cmd_train, load_datasets, TrainArgs};
pub use translate::{cmd_translate, translate_lines, TranslateArgs};

use std::path::{Path, PathBuf};

use swie_core::corpus::Language;
use swie_core::segmenter::PromptTemplate;

use crate::{CliError, Result, RunConfig};

/// Output directory: the flag, then the config, then `./swie-run`.
pub fn out_dir(config: &RunConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.paths.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("swie-run"))
}

pub(crate) fn templates(config: &RunConfig) -> Result<PromptTemplate> {
    match &config.paths.templates {
        Some(p) => Ok(PromptTemplate::load(p)?),
        None => Ok(PromptTemplate::default()),
    }
}

pub(crate) fn direction_tag(src: Language, tgt: Language) -> String {
    format!("{src}-{tgt}")
}

pub(crate) fn align_table_path(dir: &Path, src: Language, tgt: Language) -> PathBuf {
    dir.join(format!("align.{}.tsv", direction_tag(src, tgt)))
}

pub(crate) fn require(path: &Path, producer: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact(path.display().to_string(), producer))
    }
}
