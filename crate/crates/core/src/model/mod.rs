//! Causal decoder with segment-weighted instruction fusion.
//!
//! Each configured layer max-pools its instruction rows, passes the result
//! through a bottleneck adapter, and adds it to every later row scaled by
//! that row's segment weight. Instruction rows get weight zero and are never
//! modified, so causality holds.

mod config;
mod decode;
mod forward;
mod params;

pub use config::{middle_three_layers, ModelConfig};
pub use decode::{generate, IncrementalDecoder, KvCache};
pub use forward::{
    causal_attention, causal_mask, forward_graph, graph_adapter, graph_causal_attention,
    graph_instruction_embedding, graph_swie_fuse, instruction_embedding, swie_fuse, AttentionMaps,
};
pub use params::{is_embedding, AdapterParams, LayerParams, ModelParams};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{Graph, NumericsError, Tensor};
use crate::segmenter::{SegmentLayout, SegmenterError, TokenId};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Segmenter(#[from] SegmenterError),
    #[error("sequence of {len} tokens exceeds the maximum length {max}")]
    TooLong { len: usize, max: usize },
    #[error("empty token sequence")]
    EmptySequence,
    #[error("layout covers {layout} tokens but the sequence has {tokens}")]
    LayoutMismatch { layout: usize, tokens: usize },
    #[error("token {token} outside vocabulary of {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },
    #[error("instruction span is empty")]
    EmptyInstruction,
    #[error("instruction span must lie entirely inside the prompt")]
    InstructionNotInPrompt,
    #[error("cached decoding supports only input-length weight normalization")]
    UnsupportedNormalization,
    #[error("decoder produced non-finite logits")]
    NonFinite,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}: {1}")]
    Io(String, String),
}

/// Named parameter tensor as stored in a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub config: ModelConfig,
    pub params: Vec<NamedTensor>,
}

/// Configuration plus weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    /// Seeded fresh model.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let params = ModelParams::init(&config, seed);
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Self, ModelError> {
        config.validate()?;
        let reference = ModelParams::init(&config, 0);
        check_shapes(&reference, &params)?;
        Ok(Self { config, params })
    }

    /// `T×V` next-token logits.
    pub fn logits(&self, tokens: &[TokenId], layout: &SegmentLayout) -> Result<Tensor, ModelError> {
        self.run(tokens, layout, None)
    }

    /// Logits together with every layer's per-head attention maps.
    pub fn logits_with_attention(
        &self,
        tokens: &[TokenId],
        layout: &SegmentLayout,
    ) -> Result<(Tensor, AttentionMaps), ModelError> {
        let mut maps = Vec::new();
        let logits = self.run(tokens, layout, Some(&mut maps))?;
        Ok((logits, maps))
    }

    fn run(&self, tokens: &[TokenId], layout: &SegmentLayout, trace: Option<&mut AttentionMaps>) -> Result<Tensor, ModelError> {
        let mut g = Graph::new();
        let vars = forward::constants(&mut g, &self.params);
        let out = forward_graph(&mut g, &vars, &self.config, tokens, layout, trace)?;
        Ok(g.value(out).clone())
    }

    /// Greedy cached continuation; see [`generate`].
    pub fn generate(&self, prompt: &[TokenId], layout: &SegmentLayout, max_new: usize) -> Result<Vec<TokenId>, ModelError> {
        generate(self, prompt, layout, max_new)
    }

    /// Copy with fusion switched off, sharing all weights.
    pub fn without_swie(&self) -> Self {
        Self { config: ModelConfig { swie_enabled: false, ..self.config.clone() }, params: self.params.clone() }
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint { version: CHECKPOINT_VERSION, config: self.config.clone(), params: params_to_named(&self.params) }
    }

    pub fn from_checkpoint(ckpt: ModelCheckpoint) -> Result<Self, ModelError> {
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        ckpt.config.validate()?;
        let params = params_from_named(&ckpt.config, ckpt.params)?;
        Ok(Self { config: ckpt.config, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let text = serde_json::to_string(&self.to_checkpoint()).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(|e| ModelError::Io(path.display().to_string(), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|e| ModelError::Io(path.display().to_string(), e.to_string()))?;
        let ckpt: ModelCheckpoint = serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(ckpt)
    }
}

/// Flattens parameters into `(name, tensor)` entries in canonical order.
pub fn params_to_named(params: &ModelParams) -> Vec<NamedTensor> {
    let mut out = Vec::new();
    params.for_each(|name, t| out.push(NamedTensor { name: name.to_string(), tensor: t.clone() }));
    out
}

/// Rebuilds parameters for `config` from named entries. Every expected name
/// must be present exactly once with the expected shape.
pub fn params_from_named(config: &ModelConfig, named: Vec<NamedTensor>) -> Result<ModelParams, ModelError> {
    let mut params = ModelParams::init(config, 0);
    let mut stored = std::collections::BTreeMap::new();
    for nt in named {
        let name = nt.name.clone();
        if stored.insert(nt.name, nt.tensor).is_some() {
            return Err(ModelError::Checkpoint(format!("duplicate parameter {name}")));
        }
    }
    let mut problem = None;
    params.for_each_mut(|name, slot| match stored.remove(name) {
        Some(t) if t.shape() == slot.shape() && t.is_finite() => *slot = t,
        Some(t) => {
            problem.get_or_insert(format!("{name}: shape {:?}, expected {:?}", t.shape(), slot.shape()));
        }
        None => {
            problem.get_or_insert(format!("missing parameter {name}"));
        }
    });
    if let Some(p) = problem {
        return Err(ModelError::Checkpoint(p));
    }
    if let Some(extra) = stored.keys().next() {
        return Err(ModelError::Checkpoint(format!("unknown parameter {extra}")));
    }
    Ok(params)
}

fn check_shapes(reference: &ModelParams, params: &ModelParams) -> Result<(), ModelError> {
    let mut want = Vec::new();
    reference.for_each(|n, t| want.push((n.to_string(), t.shape().to_vec())));
    let mut got = Vec::new();
    params.for_each(|n, t| got.push((n.to_string(), t.shape().to_vec())));
    if want != got {
        return Err(ModelError::Checkpoint("parameter names or shapes do not match the config".into()));
    }
    Ok(())
}
