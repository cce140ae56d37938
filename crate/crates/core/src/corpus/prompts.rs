use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, ErrorType, ParallelPair};

/// Prompt bodies for asking an external model to produce flawed translations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmPrompts {
    pub miss: String,
    pub over: String,
}

impl Default for LlmPrompts {
    fn default() -> Self {
        Self::from_toml(include_str!("../../assets/llm_prompts.toml")).expect("bundled prompts parse")
    }
}

impl LlmPrompts {
    pub fn from_toml(text: &str) -> Result<Self, CorpusError> {
        toml::from_str(text).map_err(|e| CorpusError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn template(&self, error: ErrorType) -> &str {
        match error {
            ErrorType::Miss => &self.miss,
            ErrorType::Over => &self.over,
        }
    }

    /// Fills the placeholders by plain string replacement.
    pub fn render(&self, pair: &ParallelPair, error: ErrorType) -> String {
        self.template(error)
            .replace("[source language]", pair.source_lang.name())
            .replace("[target language]", pair.target_lang.name())
            .replace("[source sentence]", &pair.source)
            .replace("[target sentence]", &pair.target)
    }
}

/// Renders the bundled prompt for `error`.
pub fn render_llm_prompt(pair: &ParallelPair, error: ErrorType) -> String {
    LlmPrompts::default().render(pair, error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Language;

    fn pair() -> ParallelPair {
        ParallelPair::new("the old house", "das alte haus", Language::En, Language::De).unwrap()
    }

    #[test]
    fn miss_prompt_asks_for_omissions() {
        let p = render_llm_prompt(&pair(), ErrorType::Miss);
        assert!(p.contains("leaves out some of its content"));
        assert!(p.starts_with("Act as a careless English-to-German translator"));
        assert!(!p.contains('['));
    }

    #[test]
    fn over_prompt_asks_for_additions() {
        let p = render_llm_prompt(&pair(), ErrorType::Over);
        assert!(p.contains("content the source does not contain"));
        assert!(p.contains("reference translation (German):"));
    }

    #[test]
    fn substitution_round_trips() {
        let prompts = LlmPrompts::default();
        for e in ErrorType::ALL {
            let p = prompts.render(&pair(), e);
            let lines: Vec<&str> = p.lines().collect();
            let src = lines.iter().position(|l| l.starts_with("Source sentence")).unwrap() + 1;
            assert_eq!(lines[src], "the old house");
            assert_eq!(lines[src + 2], "das alte haus");
        }
    }
}
