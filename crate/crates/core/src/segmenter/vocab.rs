use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use super::{SegmenterError, TokenId};

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;

const RESERVED: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Word vocabulary with four reserved ids (pad, begin, end, unknown).
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from_words(std::iter::empty::<&str>())
    }
}

impl Vocab {
    /// Builds a vocabulary from words in the given order, skipping duplicates
    /// and the reserved spellings.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, TokenId> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        for w in words {
            let w = w.as_ref();
            if !index.contains_key(w) {
                index.insert(w.to_string(), tokens.len());
                tokens.push(w.to_string());
            }
        }
        Self { tokens, index }
    }

    /// Sorted vocabulary of every whitespace-delimited word in `texts`.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<&str> = texts.into_iter().flat_map(str::split_whitespace).collect();
        Self::from_words(words)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == RESERVED.len()
    }

    pub fn id(&self, word: &str) -> TokenId {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.get(word).is_some_and(|&id| id >= RESERVED.len())
    }

    /// Whitespace tokenization; unknown words map to [`UNK`].
    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace().map(|w| self.id(w)).collect()
    }

    /// Joins word tokens with single spaces, dropping pad/begin/end markers.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&id| !matches!(id, PAD | BOS | EOS))
            .filter_map(|&id| self.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One non-reserved token per line; line `n` holds id `n + 4`.
    pub fn save(&self, path: &Path) -> Result<(), SegmenterError> {
        let mut body = String::new();
        for t in &self.tokens[RESERVED.len()..] {
            body.push_str(t);
            body.push('\n');
        }
        fs::write(path, body).map_err(|e| SegmenterError::Io(path.display().to_string(), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SegmenterError> {
        let body = fs::read_to_string(path)
            .map_err(|e| SegmenterError::Io(path.display().to_string(), e.to_string()))?;
        Self::parse(&body)
    }

    pub fn parse(body: &str) -> Result<Self, SegmenterError> {
        let mut seen = BTreeSet::new();
        for (n, line) in body.lines().enumerate() {
            if line.is_empty() || line.split_whitespace().count() != 1 || RESERVED.contains(&line) {
                return Err(SegmenterError::BadVocabLine(n + 1));
            }
            if !seen.insert(line) {
                return Err(SegmenterError::DuplicateToken(line.to_string()));
            }
        }
        Ok(Self::from_words(body.lines()))
    }
}
