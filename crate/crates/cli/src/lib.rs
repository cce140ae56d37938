//! Library side of the `swie` command-line tool.
//!
//! Each subcommand is a plain function over a [`RunConfig`] so tests can
//! drive the pipeline without spawning processes.

pub mod commands;
pub mod config;
pub mod data;

pub use config::RunConfig;

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(String, String),
    #[error("{0} is missing; run `swie {1}` first")]
    MissingArtifact(String, &'static str),
    #[error("{what}: {left} lines vs {right} lines")]
    LineMismatch { what: &'static str, left: usize, right: usize },
    #[error("undefined attention ratio for {0}")]
    UndefinedRatios(String),
    #[error(transparent)]
    Corpus(#[from] swie_core::corpus::CorpusError),
    #[error(transparent)]
    Segmenter(#[from] swie_core::segmenter::SegmenterError),
    #[error(transparent)]
    Model(#[from] swie_core::model::ModelError),
    #[error(transparent)]
    Train(#[from] swie_core::trainer::TrainError),
    #[error(transparent)]
    Align(#[from] swie_core::align::AlignError),
    #[error(transparent)]
    Probe(#[from] swie_core::probe::ProbeError),
    #[error(transparent)]
    Client(#[from] swie_core::corpus::ClientError),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(path.display().to_string(), e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?.lines().map(str::to_string).collect())
}
