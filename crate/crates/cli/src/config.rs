//! The run configuration document.
//!
//! One TOML file with a section per concern. Every section has defaults, so
//! an empty file is valid; unknown keys are rejected. Relative paths are
//! resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use swie_core::corpus::{HintType, HttpClientConfig, Language, RecordModes, RetryPolicy, SynthesisPolicy};
use swie_core::model::ModelConfig;
use swie_core::probe::HeadMode;
use swie_core::trainer::{StageConfig, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Drives model init, data order, synthesis and probe sampling.
    pub seed: u64,
    pub paths: PathsConfig,
    pub model: ModelConfig,
    pub trainer: TrainConfig,
    pub corpus: CorpusConfig,
    pub align: AlignConfig,
    pub translate: TranslateConfig,
    pub eval: EvalConfig,
    pub probe: ProbeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: PathsConfig::default(),
            model: ModelConfig { max_seq_len: 160, adapter_dim: 16, ..ModelConfig::default() },
            trainer: TrainConfig {
                stages: vec![
                    StageConfig { name: "plain".into(), datasets: vec!["plain".into()], steps: 150 },
                    StageConfig { name: "hinted".into(), datasets: vec!["plain".into(), "hinted".into()], steps: 150 },
                ],
                ..TrainConfig::default()
            },
            corpus: CorpusConfig::default(),
            align: AlignConfig::default(),
            translate: TranslateConfig::default(),
            eval: EvalConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Parallel corpus; the bundled toy corpus when absent.
    pub corpus: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Instruction templates; the built-in ones when absent.
    pub templates: Option<PathBuf>,
    /// External-model prompt templates; the built-in ones when absent.
    pub llm_prompts: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeMode {
    #[default]
    Offline,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub mode: NegativeMode,
    pub policy: SynthesisPolicy,
    pub records: RecordModes,
    /// Pairs per language direction held out as a test set.
    pub test_per_direction: usize,
    pub llm: HttpClientConfig,
    pub retry: RetryPolicy,
    /// Group size range for `concat`.
    pub concat_min: usize,
    pub concat_max: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            mode: NegativeMode::Offline,
            policy: SynthesisPolicy::default(),
            records: RecordModes::default(),
            test_per_direction: 12,
            llm: HttpClientConfig::default(),
            retry: RetryPolicy::default(),
            concat_min: 3,
            concat_max: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignConfig {
    pub iterations: usize,
    pub threshold: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self { iterations: 10, threshold: swie_core::align::DEFAULT_LINK_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TranslateConfig {
    pub max_new_tokens: usize,
    pub hint: HintType,
    pub source_lang: Language,
    pub target_lang: Language,
}

impl Default for TranslateConfig {
    fn default() -> Self {
        Self { max_new_tokens: 32, hint: HintType::None, source_lang: Language::En, target_lang: Language::De }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub max_order: usize,
    pub per_sentence: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { max_order: 4, per_sentence: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaggedCheckpoint {
    pub tag: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub checkpoints: Vec<TaggedCheckpoint>,
    pub head: HeadMode,
    /// Report `S(instruction end) / S(input end)` instead.
    pub inverse: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` and anchors its relative paths at the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let anchor = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        anchor(&mut config.paths.corpus);
        anchor(&mut config.paths.out_dir);
        anchor(&mut config.paths.templates);
        anchor(&mut config.paths.llm_prompts);
        for c in &mut config.probe.checkpoints {
            if c.path.is_relative() {
                c.path = base.join(&c.path);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.trainer.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let p = &self.corpus.policy;
        if !(0.0..=1.0).contains(&p.delta) || !(0.0..=1.0).contains(&p.rho) {
            return bad("corpus.policy.delta and rho must lie in [0, 1]".into());
        }
        if self.corpus.concat_min == 0 || self.corpus.concat_min > self.corpus.concat_max {
            return bad(format!("concat range [{}, {}] is invalid", self.corpus.concat_min, self.corpus.concat_max));
        }
        if self.align.iterations == 0 {
            return bad("align.iterations must be at least 1".into());
        }
        if self.eval.max_order == 0 {
            return bad("eval.max_order must be at least 1".into());
        }
        if self.translate.max_new_tokens == 0 {
            return bad("translate.max_new_tokens must be at least 1".into());
        }
        Ok(())
    }
}
