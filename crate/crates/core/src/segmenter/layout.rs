use serde::{Deserialize, Serialize};

use super::SegmenterError;
use crate::numerics::Real;

pub const INSTRUCTION: usize = 0;
pub const INPUT: usize = 1;
pub const RESPONSE: usize = 2;

/// Per-token segment assignment for an instruction/input/response sequence.
///
/// Segment ids are contiguous and nondecreasing, so `begins[s]` is the first
/// position with id `s` or later (the sequence length for an empty trailing
/// segment).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentLayout {
    segment_ids: Vec<usize>,
    begins: Vec<usize>,
    instruction_id: usize,
    input_len: usize,
}

/// How the weight ramp inside a segment is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightNormalization {
    /// Every ramp has slope `1/L` where `L` is the input-span length.
    #[default]
    InputLength,
    /// Each segment's ramp is divided by that segment's own length.
    SegmentLength,
}

impl SegmentLayout {
    pub fn new(
        segment_ids: Vec<usize>,
        begins: Vec<usize>,
        instruction_id: usize,
        input_len: usize,
    ) -> Result<Self, SegmenterError> {
        let layout = Self { segment_ids, begins, instruction_id, input_len };
        layout.validate()?;
        Ok(layout)
    }

    /// Canonical instruction → input → response layout.
    pub fn from_spans(instruction: usize, input: usize, response: usize) -> Result<Self, SegmenterError> {
        let mut ids = vec![INSTRUCTION; instruction];
        ids.extend(std::iter::repeat_n(INPUT, input));
        ids.extend(std::iter::repeat_n(RESPONSE, response));
        Self::new(ids, vec![0, instruction, instruction + input], INSTRUCTION, input)
    }

    fn validate(&self) -> Result<(), SegmenterError> {
        let bad = |m: String| Err(SegmenterError::InvalidLayout(m));
        if self.segment_ids.windows(2).any(|w| w[1] < w[0]) {
            return bad("segment ids must be nondecreasing".into());
        }
        let t = self.segment_ids.len();
        for (s, &b) in self.begins.iter().enumerate() {
            let first = self.segment_ids.iter().position(|&id| id >= s).unwrap_or(t);
            if first != b {
                return bad(format!("segment {s} begins at {first}, recorded {b}"));
            }
        }
        if let Some(&max) = self.segment_ids.last() {
            if max >= self.begins.len() {
                return bad(format!("segment id {max} has no begin index"));
            }
        }
        if !self.segment_ids.contains(&self.instruction_id) {
            return bad("instruction segment is empty".into());
        }
        let input_count = self.segment_ids.iter().filter(|&&id| id == INPUT).count();
        if input_count != self.input_len {
            return bad(format!("input length {} but {input_count} input tokens", self.input_len));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.segment_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segment_ids.is_empty()
    }

    pub fn segment_ids(&self) -> &[usize] {
        &self.segment_ids
    }

    pub fn begins(&self) -> &[usize] {
        &self.begins
    }

    pub fn instruction_id(&self) -> usize {
        self.instruction_id
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn instruction_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.segment_ids[i] == self.instruction_id).collect()
    }

    /// Index of the last token of `segment`, if it has any tokens.
    pub fn segment_end(&self, segment: usize) -> Option<usize> {
        self.segment_ids.iter().rposition(|&id| id == segment)
    }

    pub fn segment_len(&self, segment: usize) -> usize {
        self.segment_ids.iter().filter(|&&id| id == segment).count()
    }

    /// Appends one response token (used while decoding).
    pub fn push_response(&mut self) {
        while self.begins.len() <= RESPONSE {
            self.begins.push(self.segment_ids.len());
        }
        self.segment_ids.push(RESPONSE);
    }

    /// Weight of position `i` under the segment ramp. `i` may lie past the
    /// recorded tokens, in which case it is treated as a response token.
    pub fn weight_at(&self, i: usize, norm: WeightNormalization) -> Result<Real, SegmenterError> {
        if self.input_len == 0 {
            return Err(SegmenterError::ZeroInputLength);
        }
        let seg = self.segment_ids.get(i).copied().unwrap_or(RESPONSE);
        if seg == self.instruction_id {
            return Ok(0.0);
        }
        let begin = self.begins.get(seg).copied().unwrap_or(self.segment_ids.len());
        let denom = match norm {
            WeightNormalization::InputLength => self.input_len,
            WeightNormalization::SegmentLength => self.segment_len(seg).max(1),
        };
        Ok((i - begin) as Real / denom as Real)
    }
}

/// Segment weights for every position of a `total_len`-token sequence.
///
/// Zero on the instruction span; elsewhere `(i - B[I_s[i]]) / L`, a ramp
/// restarting at each segment begin. No clamping is applied, so response
/// tokens far past their begin get weights above 1.
pub fn segment_weights(layout: &SegmentLayout, total_len: usize) -> Result<Vec<Real>, SegmenterError> {
    segment_weights_with(layout, total_len, WeightNormalization::InputLength)
}

pub fn segment_weights_with(
    layout: &SegmentLayout,
    total_len: usize,
    norm: WeightNormalization,
) -> Result<Vec<Real>, SegmenterError> {
    if layout.len() != total_len {
        return Err(SegmenterError::LengthMismatch { layout: layout.len(), tokens: total_len });
    }
    (0..total_len).map(|i| layout.weight_at(i, norm)).collect()
}
