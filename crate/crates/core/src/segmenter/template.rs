use std::path::Path;

use serde::Deserialize;

use super::SegmenterError;
use crate::corpus::{ErrorType, HintType, Language};

const DEFAULT_TEMPLATES: &str = include_str!("../../assets/templates.toml");

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HintClauses {
    #[serde(rename = "no-error")]
    pub no_error: String,
    #[serde(rename = "no-over")]
    pub no_over: String,
    #[serde(rename = "no-miss")]
    pub no_miss: String,
    #[serde(rename = "no-over-miss")]
    pub no_over_miss: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastiveTemplate {
    pub instruction: String,
    pub input: String,
    pub miss: String,
    pub over: String,
}

/// Instruction wording for plain, hinted and contrastive records.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub base: String,
    pub hints: HintClauses,
    pub contrastive: ContrastiveTemplate,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TEMPLATES).expect("bundled templates parse")
    }
}

fn languages(text: &str, src: Language, tgt: Language) -> String {
    text.replace("[SRC]", src.name()).replace("[TGT]", tgt.name())
}

impl PromptTemplate {
    pub fn from_toml(text: &str) -> Result<Self, SegmenterError> {
        toml::from_str(text).map_err(|e| SegmenterError::Template(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SegmenterError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SegmenterError::Io(path.display().to_string(), e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn hint_clause(&self, hint: HintType) -> Option<&str> {
        match hint {
            HintType::None => None,
            HintType::NoError => Some(&self.hints.no_error),
            HintType::NoOver => Some(&self.hints.no_over),
            HintType::NoMiss => Some(&self.hints.no_miss),
            HintType::NoOverMiss => Some(&self.hints.no_over_miss),
        }
    }

    /// Base instruction with an optional hint clause appended.
    pub fn instruction(&self, src: Language, tgt: Language, hint: HintType) -> String {
        let base = languages(&self.base, src, tgt);
        match self.hint_clause(hint) {
            Some(clause) => format!("{base} {clause}"),
            None => base,
        }
    }

    pub fn error_name(&self, error: ErrorType) -> &str {
        match error {
            ErrorType::Miss => &self.contrastive.miss,
            ErrorType::Over => &self.contrastive.over,
        }
    }

    pub fn contrastive_instruction(&self, src: Language, tgt: Language, error: ErrorType) -> String {
        languages(&self.contrastive.instruction, src, tgt).replace("[ERROR]", self.error_name(error))
    }

    pub fn contrastive_input(&self, source: &str, negative: &str) -> String {
        self.contrastive.input.replace("[SOURCE]", source).replace("[NEGATIVE]", negative)
    }
}
