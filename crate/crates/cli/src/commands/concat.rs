use std::path::PathBuf;

use swie_core::corpus::{concat_adjacent, format_parallel, load_parallel, ParallelPair};

use crate::{write_text, Result, RunConfig};

#[derive(Debug, Clone, Default)]
pub struct ConcatArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    pub dry_run: bool,
}

/// Merges adjacent sentences into long items, separately for each language
/// direction and in file order.
pub fn cmd_concat(config: &RunConfig, args: &ConcatArgs) -> Result<Vec<ParallelPair>> {
    let range = (args.k_min.unwrap_or(config.corpus.concat_min), args.k_max.unwrap_or(config.corpus.concat_max));
    let pairs = load_parallel(&args.input)?;
    let mut dirs = Vec::new();
    for p in &pairs {
        let d = (p.source_lang, p.target_lang);
        if !dirs.contains(&d) {
            dirs.push(d);
        }
    }
    let mut merged = Vec::new();
    for d in dirs {
        let group: Vec<ParallelPair> = pairs.iter().filter(|p| (p.source_lang, p.target_lang) == d).cloned().collect();
        merged.extend(concat_adjacent(&group, range, config.seed)?);
    }
    if !args.dry_run {
        write_text(&args.output, &format_parallel(&merged))?;
    }
    Ok(merged)
}
