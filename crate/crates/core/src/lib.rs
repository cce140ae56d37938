//! Segment-weighted instruction embedding (SWIE) in a small causal decoder,
//! plus the contrastive over-/miss-translation data pipeline, a lexical
//! alignment faithfulness metric, and an attention-accumulation probe.

pub mod numerics;
pub mod segmenter;
pub mod corpus;
pub mod model;
pub mod trainer;
pub mod align;
pub mod probe;

pub use align::{CoverageScore, LexicalAligner, TranslationTable, WordAligner};
pub use corpus::{ErrorType, InstructionRecord, Language, NegativeSample, ParallelPair};
pub use model::{Model, ModelConfig};
pub use numerics::{Real, Tensor};
pub use probe::AttentionTrace;
pub use segmenter::{SegmentLayout, Vocab};
pub use trainer::{TrainConfig, Trainer};
