use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::numerics::Real;
use crate::segmenter::WeightNormalization;

/// Shape and fusion settings of the decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    /// Bottleneck width of each instruction adapter.
    pub adapter_dim: usize,
    /// Layers that fuse the instruction representation. `None` selects the
    /// middle three layers.
    pub swie_layers: Option<Vec<usize>>,
    pub swie_enabled: bool,
    pub weight_normalization: WeightNormalization,
    pub norm_eps: Real,
    pub init_std: Real,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 4,
            n_heads: 2,
            model_dim: 32,
            ffn_dim: 64,
            vocab_size: 64,
            max_seq_len: 128,
            adapter_dim: 32,
            swie_layers: None,
            swie_enabled: true,
            weight_normalization: WeightNormalization::InputLength,
            norm_eps: 1e-5,
            init_std: 0.02,
        }
    }
}

/// `⌊n/2⌋-1, ⌊n/2⌋, ⌊n/2⌋+1`, clipped to `[0, n)`.
pub fn middle_three_layers(n_layers: usize) -> Vec<usize> {
    let mid = (n_layers / 2) as isize;
    (mid - 1..=mid + 1)
        .filter(|&l| l >= 0 && (l as usize) < n_layers)
        .map(|l| l as usize)
        .collect()
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.model_dim / self.n_heads
    }

    /// Layers carrying an adapter, sorted and deduplicated.
    pub fn adapter_layers(&self) -> Vec<usize> {
        let mut layers = self.swie_layers.clone().unwrap_or_else(|| middle_three_layers(self.n_layers));
        layers.sort_unstable();
        layers.dedup();
        layers
    }

    pub fn has_adapter(&self, layer: usize) -> bool {
        self.adapter_layers().contains(&layer)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.n_layers == 0 || self.n_heads == 0 || self.model_dim == 0 || self.ffn_dim == 0 {
            return bad("layer, head, model and feed-forward sizes must be positive".into());
        }
        if self.model_dim % self.n_heads != 0 {
            return bad(format!("model_dim {} not divisible by n_heads {}", self.model_dim, self.n_heads));
        }
        if self.adapter_dim == 0 {
            return bad("adapter_dim must be at least 1".into());
        }
        if self.vocab_size == 0 || self.max_seq_len == 0 {
            return bad("vocab_size and max_seq_len must be positive".into());
        }
        if let Some(l) = self.adapter_layers().into_iter().find(|&l| l >= self.n_layers) {
            return bad(format!("swie layer {l} outside 0..{}", self.n_layers));
        }
        if !(self.norm_eps > 0.0) {
            return bad("norm_eps must be positive".into());
        }
        Ok(())
    }
}
