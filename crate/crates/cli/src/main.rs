use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swie_cli::commands::{
    cmd_concat, cmd_eval, cmd_probe, cmd_synth, cmd_train, cmd_translate, ConcatArgs, EvalArgs, ProbeArgs, SynthArgs,
    TrainArgs, TranslateArgs,
};
use swie_cli::config::TaggedCheckpoint;
use swie_cli::{CliError, RunConfig};
use swie_core::corpus::{HintType, Language};

#[derive(Parser)]
#[command(name = "swie", version, about = "Instruction-fused translation models on toy data")]
struct Cli {
    /// Run configuration (TOML). Built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Validate inputs and report what would happen without writing.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize negatives and instruction records from a parallel corpus.
    Synth,
    /// Run the training curriculum.
    Train(TrainOpts),
    /// Translate a file of source sentences.
    Translate(TranslateOpts),
    /// Score hypotheses with BLEU and alignment coverage.
    Eval(EvalOpts),
    /// Compare attention accumulation across checkpoints.
    Probe(ProbeOpts),
    /// Merge adjacent sentences of a parallel file into long items.
    Concat(ConcatOpts),
}

#[derive(Args)]
struct TrainOpts {
    /// Run only this stage (1-based).
    #[arg(long)]
    stage: Option<usize>,
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Checkpoint file stem.
    #[arg(long, default_value = "model")]
    name: String,
    /// Train without instruction fusion.
    #[arg(long)]
    no_swie: bool,
}

#[derive(Args)]
struct LangOpts {
    #[arg(long)]
    src_lang: Option<Language>,
    #[arg(long)]
    tgt_lang: Option<Language>,
}

#[derive(Args)]
struct TranslateOpts {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// none, no-error, no-over, no-miss or no-over/miss.
    #[arg(long)]
    hint: Option<HintType>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[command(flatten)]
    langs: LangOpts,
}

#[derive(Args)]
struct EvalOpts {
    #[arg(long)]
    hyps: PathBuf,
    #[arg(long)]
    refs: PathBuf,
    #[arg(long)]
    sources: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    per_sentence: bool,
    #[command(flatten)]
    langs: LangOpts,
}

#[derive(Args)]
struct ProbeOpts {
    /// `tag=path`, repeatable.
    #[arg(long = "checkpoint", value_parser = parse_tagged)]
    checkpoints: Vec<TaggedCheckpoint>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ConcatOpts {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
}

fn parse_tagged(s: &str) -> Result<TaggedCheckpoint, String> {
    let (tag, path) = s.split_once('=').ok_or_else(|| format!("expected tag=path, got {s:?}"))?;
    if tag.is_empty() {
        return Err("empty tag".into());
    }
    Ok(TaggedCheckpoint { tag: tag.into(), path: path.into() })
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("summaries serialize")
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out_dir = cli.out_dir.clone();
    let dry_run = cli.dry_run;
    match cli.command {
        Command::Synth => {
            let s = cmd_synth(&config, &SynthArgs { out_dir, dry_run })?;
            print!("{}", swie_cli::commands::format_report(&s.report));
            println!(
                "pairs: {} train, {} test; negatives: {}; records: {} plain, {} hinted",
                s.train_pairs, s.test_pairs, s.negatives, s.plain_records, s.hinted_records
            );
        }
        Command::Train(o) => {
            let args = TrainArgs {
                out_dir,
                stage: o.stage,
                resume: o.resume,
                max_steps: o.max_steps,
                name: o.name,
                no_swie: o.no_swie,
                dry_run,
            };
            println!("{}", json(&cmd_train(&config, &args)?));
        }
        Command::Translate(o) => {
            let args = TranslateArgs {
                out_dir,
                checkpoint: o.checkpoint,
                vocab: o.vocab,
                input: o.input,
                output: o.output,
                hint: o.hint,
                source_lang: o.langs.src_lang,
                target_lang: o.langs.tgt_lang,
                dry_run,
            };
            let path = cmd_translate(&config, &args)?;
            println!("{}{}", if dry_run { "would write " } else { "wrote " }, path.display());
        }
        Command::Eval(o) => {
            let args = EvalArgs {
                out_dir,
                hyps: o.hyps,
                refs: o.refs,
                sources: o.sources,
                source_lang: o.langs.src_lang,
                target_lang: o.langs.tgt_lang,
                output: o.output,
                per_sentence: o.per_sentence.then_some(true),
                dry_run,
            };
            println!("{}", json(&cmd_eval(&config, &args)?));
        }
        Command::Probe(o) => {
            let args = ProbeArgs {
                out_dir,
                checkpoints: o.checkpoints,
                vocab: o.vocab,
                samples: o.samples,
                output: o.output,
                dry_run,
            };
            for (tag, reports) in cmd_probe(&config, &args)? {
                for r in reports {
                    let ratio = r.ratio.map_or("undefined".to_string(), |v| format!("{v:.6}"));
                    println!("{tag} layer {}: ratio {ratio}", r.layer);
                }
            }
        }
        Command::Concat(o) => {
            let args = ConcatArgs { input: o.input, output: o.output, k_min: o.k_min, k_max: o.k_max, dry_run };
            println!("{} merged items", cmd_concat(&config, &args)?.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
