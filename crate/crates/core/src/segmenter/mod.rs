//! Tokenization and segment layouts for instruction/input/response records.

mod layout;
mod template;
mod vocab;

pub use layout::{
    segment_weights, segment_weights_with, SegmentLayout, WeightNormalization, INPUT, INSTRUCTION,
    RESPONSE,
};
pub use template::{ContrastiveTemplate, HintClauses, PromptTemplate};
pub use vocab::{Vocab, BOS, EOS, PAD, UNK};

use thiserror::Error;

use crate::corpus::InstructionRecord;

pub type TokenId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SegmenterError {
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("input span is empty")]
    EmptyInput,
    #[error("input span length L is zero")]
    ZeroInputLength,
    #[error("layout covers {layout} tokens but the sequence has {tokens}")]
    LengthMismatch { layout: usize, tokens: usize },
    #[error("invalid segment layout: {0}")]
    InvalidLayout(String),
    #[error("vocabulary line {0} is not a single token")]
    BadVocabLine(usize),
    #[error("vocabulary lists {0:?} twice")]
    DuplicateToken(String),
    #[error("template: {0}")]
    Template(String),
    #[error("{0}: {1}")]
    Io(String, String),
}

/// Token sequence, layout and loss mask for one record.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledRecord {
    pub tokens: Vec<TokenId>,
    pub layout: SegmentLayout,
    /// True on tokens the model is trained to predict: the response and its
    /// end marker.
    pub loss_mask: Vec<bool>,
}

impl AssembledRecord {
    /// Next-token targets and their mask: position `t` predicts token `t+1`.
    pub fn shifted_targets(&self) -> (Vec<TokenId>, Vec<bool>) {
        let n = self.tokens.len();
        let mut targets = vec![PAD; n];
        let mut mask = vec![false; n];
        for t in 0..n.saturating_sub(1) {
            targets[t] = self.tokens[t + 1];
            mask[t] = self.loss_mask[t + 1];
        }
        (targets, mask)
    }

    pub fn prompt_len(&self) -> usize {
        self.layout.begins().get(RESPONSE).copied().unwrap_or(self.tokens.len())
    }
}

/// Lays out `<s> instruction | input | response </s>`.
///
/// An empty response yields an inference prompt: no end marker and an
/// all-false loss mask.
pub fn assemble_record(record: &InstructionRecord, vocab: &Vocab) -> Result<AssembledRecord, SegmenterError> {
    let instruction = vocab.tokenize(&record.instruction);
    if instruction.is_empty() {
        return Err(SegmenterError::EmptyInstruction);
    }
    let input = vocab.tokenize(&record.input);
    if input.is_empty() {
        return Err(SegmenterError::EmptyInput);
    }
    let mut response = vocab.tokenize(&record.response);
    if !response.is_empty() {
        response.push(EOS);
    }

    let mut tokens = Vec::with_capacity(1 + instruction.len() + input.len() + response.len());
    tokens.push(BOS);
    tokens.extend(&instruction);
    let ins_len = tokens.len();
    tokens.extend(&input);
    tokens.extend(&response);

    let layout = SegmentLayout::from_spans(ins_len, input.len(), response.len())?;
    let loss_mask = layout.segment_ids().iter().map(|&s| s == RESPONSE).collect();
    Ok(AssembledRecord { tokens, layout, loss_mask })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{HintType, RecordKind};

    fn record(instruction: &str, input: &str, response: &str) -> InstructionRecord {
        InstructionRecord {
            instruction: instruction.into(),
            input: input.into(),
            response: response.into(),
            hint_type: HintType::None,
            record_kind: RecordKind::Plain,
        }
    }

    #[test]
    fn four_five_four_layout() {
        let r = record("translate en de", "a b c d e", "x y z");
        let v = Vocab::from_texts([r.instruction.as_str(), &r.input, &r.response]);
        let a = assemble_record(&r, &v).unwrap();
        assert_eq!(a.layout.segment_ids(), &[0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2]);
        assert_eq!(a.layout.begins(), &[0, 4, 9]);
        assert_eq!((a.layout.instruction_id(), a.layout.input_len()), (0, 5));
        assert_eq!(a.tokens[0], BOS);
        assert_eq!(*a.tokens.last().unwrap(), EOS);
        let expected: Vec<bool> = (0..13).map(|i| i >= 9).collect();
        assert_eq!(a.loss_mask, expected);
        assert_eq!(v.detokenize(&a.tokens[9..]), "x y z");
    }

    #[test]
    fn inference_record_has_no_response() {
        let r = record("go", "a b", "");
        let v = Vocab::from_texts(["go a b"]);
        let a = assemble_record(&r, &v).unwrap();
        assert_eq!(a.tokens.len(), 4);
        assert_eq!(a.layout.begins(), &[0, 2, 4]);
        assert!(a.loss_mask.iter().all(|m| !m));
        assert_eq!(a.prompt_len(), 4);
    }

    #[test]
    fn empty_instruction_is_rejected() {
        let v = Vocab::default();
        assert_eq!(assemble_record(&record("  ", "a", "b"), &v), Err(SegmenterError::EmptyInstruction));
        assert_eq!(assemble_record(&record("x", "", "b"), &v), Err(SegmenterError::EmptyInput));
    }

    #[test]
    fn shifted_targets_cover_response_and_end() {
        let r = record("i", "a", "b c");
        let v = Vocab::from_texts(["i a b c"]);
        let a = assemble_record(&r, &v).unwrap();
        // <s> i a b c </s>
        let (targets, mask) = a.shifted_targets();
        assert_eq!(mask, vec![false, false, true, true, true, false]);
        assert_eq!(&targets[2..5], &[v.id("b"), v.id("c"), EOS]);
    }
}
