use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Closed set of language tags accepted in parallel corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    De,
    Fr,
    Zh,
    Cs,
    Ru,
    Uk,
}

impl Language {
    pub const ALL: [Language; 7] =
        [Language::En, Language::De, Language::Fr, Language::Zh, Language::Cs, Language::Ru, Language::Uk];

    pub fn tag(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::De => "de",
            Language::Fr => "fr",
            Language::Zh => "zh",
            Language::Cs => "cs",
            Language::Ru => "ru",
            Language::Uk => "uk",
        }
    }

    /// English name used in prompts.
    pub fn name(self) -> &'static str {
        match self {
            Language::En => "English",
            Language::De => "German",
            Language::Fr => "French",
            Language::Zh => "Chinese",
            Language::Cs => "Czech",
            Language::Ru => "Russian",
            Language::Uk => "Ukrainian",
        }
    }
}

impl FromStr for Language {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Language::ALL
            .into_iter()
            .find(|l| l.tag() == s)
            .ok_or_else(|| CorpusError::UnknownLanguage(s.to_string()))
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A source sentence with its reference translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelPair {
    pub source: String,
    pub target: String,
    pub source_lang: Language,
    pub target_lang: Language,
}

impl ParallelPair {
    pub fn new(
        source: impl Into<String>,
        target: impl Into<String>,
        source_lang: Language,
        target_lang: Language,
    ) -> Result<Self, CorpusError> {
        let (source, target) = (source.into(), target.into());
        if source.trim().is_empty() || target.trim().is_empty() {
            return Err(CorpusError::EmptyText);
        }
        Ok(Self { source, target, source_lang, target_lang })
    }
}

/// The two unfaithfulness categories targeted by negative samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorType {
    /// Miss-translation: content of the source is omitted.
    Miss,
    /// Over-translation: content absent from the source is added.
    Over,
}

impl ErrorType {
    pub const ALL: [ErrorType; 2] = [ErrorType::Miss, ErrorType::Over];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorType::Miss => "miss",
            ErrorType::Over => "over",
        }
    }
}

impl FromStr for ErrorType {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "miss" => Ok(ErrorType::Miss),
            "over" => Ok(ErrorType::Over),
            other => Err(CorpusError::UnknownErrorType(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ExternalLlm,
    OfflineCorruptor,
}

/// Inference or training hint appended to the base instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HintType {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "no-error")]
    NoError,
    #[serde(rename = "no-over")]
    NoOver,
    #[serde(rename = "no-miss")]
    NoMiss,
    #[serde(rename = "no-over/miss")]
    NoOverMiss,
}

impl HintType {
    pub const ALL: [HintType; 5] =
        [HintType::None, HintType::NoError, HintType::NoOver, HintType::NoMiss, HintType::NoOverMiss];

    pub fn as_str(self) -> &'static str {
        match self {
            HintType::None => "none",
            HintType::NoError => "no-error",
            HintType::NoOver => "no-over",
            HintType::NoMiss => "no-miss",
            HintType::NoOverMiss => "no-over/miss",
        }
    }
}

impl FromStr for HintType {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HintType::ALL.into_iter().find(|h| h.as_str() == s).ok_or_else(|| {
            let valid: Vec<_> = HintType::ALL.iter().map(|h| h.as_str()).collect();
            CorpusError::UnknownHint { given: s.to_string(), valid: valid.join(", ") }
        })
    }
}

impl fmt::Display for HintType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Plain,
    Contrastive,
    Hinted,
}

/// One instruction-tuning example. An empty response marks an
/// inference-time prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionRecord {
    pub instruction: String,
    pub input: String,
    pub response: String,
    pub hint_type: HintType,
    pub record_kind: RecordKind,
}

/// A corrupted translation of a parallel pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegativeSample {
    pub pair: ParallelPair,
    pub corrupted: String,
    pub error_type: ErrorType,
    pub provenance: Provenance,
    pub source_coverage: f64,
    pub target_coverage: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hint_names_round_trip() {
        for h in HintType::ALL {
            assert_eq!(h.as_str().parse::<HintType>().unwrap(), h);
            assert_eq!(serde_json::to_string(&h).unwrap(), format!("\"{}\"", h.as_str()));
        }
        let err = "no-typos".parse::<HintType>().unwrap_err().to_string();
        assert!(err.contains("no-over/miss"), "{err}");
    }

    #[test]
    fn languages_are_closed() {
        assert_eq!("de".parse::<Language>().unwrap(), Language::De);
        assert!("xx".parse::<Language>().is_err());
    }

    #[test]
    fn pair_texts_must_be_non_empty() {
        assert_eq!(ParallelPair::new(" ", "x", Language::En, Language::De), Err(CorpusError::EmptyText));
    }
}
