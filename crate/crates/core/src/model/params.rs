use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::numerics::Tensor;

/// Down/up projection pair that re-parameterizes the pooled instruction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams<T = Tensor> {
    pub down: T,
    pub down_bias: T,
    pub up: T,
    pub up_bias: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T = Tensor> {
    pub attn_norm_gain: T,
    pub attn_norm_bias: T,
    pub query: T,
    pub key: T,
    pub value: T,
    pub output: T,
    pub ffn_norm_gain: T,
    pub ffn_norm_bias: T,
    pub ffn_in: T,
    pub ffn_in_bias: T,
    pub ffn_out: T,
    pub ffn_out_bias: T,
    pub adapter: Option<AdapterParams<T>>,
}

/// Every parameter of the decoder. `T` is [`Tensor`] for stored weights and
/// [`crate::numerics::Var`] once the weights are registered on a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = Tensor> {
    pub token_embedding: T,
    pub position_embedding: T,
    pub layers: Vec<LayerParams<T>>,
    pub final_norm_gain: T,
    pub final_norm_bias: T,
    pub lm_head: T,
}

/// True for parameters that stay fixed when embeddings are frozen.
pub fn is_embedding(name: &str) -> bool {
    name == "token_embedding" || name == "position_embedding"
}

impl<T> ModelParams<T> {
    /// Maps every parameter in canonical order, passing its dotted name.
    pub fn try_map<U, E>(&self, mut f: impl FnMut(&str, &T) -> Result<U, E>) -> Result<ModelParams<U>, E> {
        let mut layers = Vec::with_capacity(self.layers.len());
        let token_embedding = f("token_embedding", &self.token_embedding)?;
        let position_embedding = f("position_embedding", &self.position_embedding)?;
        for (l, p) in self.layers.iter().enumerate() {
            let mut g = |suffix: &str, t: &T| f(&format!("layers.{l}.{suffix}"), t);
            let layer = LayerParams {
                attn_norm_gain: g("attn_norm.gain", &p.attn_norm_gain)?,
                attn_norm_bias: g("attn_norm.bias", &p.attn_norm_bias)?,
                query: g("attn.query", &p.query)?,
                key: g("attn.key", &p.key)?,
                value: g("attn.value", &p.value)?,
                output: g("attn.output", &p.output)?,
                ffn_norm_gain: g("ffn_norm.gain", &p.ffn_norm_gain)?,
                ffn_norm_bias: g("ffn_norm.bias", &p.ffn_norm_bias)?,
                ffn_in: g("ffn.in", &p.ffn_in)?,
                ffn_in_bias: g("ffn.in_bias", &p.ffn_in_bias)?,
                ffn_out: g("ffn.out", &p.ffn_out)?,
                ffn_out_bias: g("ffn.out_bias", &p.ffn_out_bias)?,
                adapter: match &p.adapter {
                    Some(a) => Some(AdapterParams {
                        down: g("adapter.down", &a.down)?,
                        down_bias: g("adapter.down_bias", &a.down_bias)?,
                        up: g("adapter.up", &a.up)?,
                        up_bias: g("adapter.up_bias", &a.up_bias)?,
                    }),
                    None => None,
                },
            };
            layers.push(layer);
        }
        Ok(ModelParams {
            token_embedding,
            position_embedding,
            layers,
            final_norm_gain: f("final_norm.gain", &self.final_norm_gain)?,
            final_norm_bias: f("final_norm.bias", &self.final_norm_bias)?,
            lm_head: f("lm_head", &self.lm_head)?,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> ModelParams<U> {
        self.try_map(|n, t| Ok::<U, std::convert::Infallible>(f(n, t))).unwrap_or_else(|e| match e {})
    }

    /// Visits every parameter in canonical order.
    pub fn for_each(&self, mut f: impl FnMut(&str, &T)) {
        self.map(|n, t| f(n, t));
    }

    /// Mutable visit in canonical order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut T)) {
        f("token_embedding", &mut self.token_embedding);
        f("position_embedding", &mut self.position_embedding);
        for (l, p) in self.layers.iter_mut().enumerate() {
            let mut g = |suffix: &str, t: &mut T| f(&format!("layers.{l}.{suffix}"), t);
            g("attn_norm.gain", &mut p.attn_norm_gain);
            g("attn_norm.bias", &mut p.attn_norm_bias);
            g("attn.query", &mut p.query);
            g("attn.key", &mut p.key);
            g("attn.value", &mut p.value);
            g("attn.output", &mut p.output);
            g("ffn_norm.gain", &mut p.ffn_norm_gain);
            g("ffn_norm.bias", &mut p.ffn_norm_bias);
            g("ffn.in", &mut p.ffn_in);
            g("ffn.in_bias", &mut p.ffn_in_bias);
            g("ffn.out", &mut p.ffn_out);
            g("ffn.out_bias", &mut p.ffn_out_bias);
            if let Some(a) = &mut p.adapter {
                g("adapter.down", &mut a.down);
                g("adapter.down_bias", &mut a.down_bias);
                g("adapter.up", &mut a.up);
                g("adapter.up_bias", &mut a.up_bias);
            }
        }
        f("final_norm.gain", &mut self.final_norm_gain);
        f("final_norm.bias", &mut self.final_norm_bias);
        f("lm_head", &mut self.lm_head);
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.for_each(|n, _| out.push(n.to_string()));
        out
    }
}

impl ModelParams<Tensor> {
    /// Seeded initialization: Gaussian weights, unit norm gains, zero biases,
    /// and zero adapter up-projections so fusion starts as the identity.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, f, v, a) = (config.model_dim, config.ffn_dim, config.vocab_size, config.adapter_dim);
        let std = config.init_std;
        let mut randn = |shape: Vec<usize>| Tensor::randn(shape, std, &mut rng);
        let token_embedding = randn(vec![v, d]);
        let position_embedding = randn(vec![config.max_seq_len, d]);
        let mut layers = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let query = randn(vec![d, d]);
            let key = randn(vec![d, d]);
            let value = randn(vec![d, d]);
            let output = randn(vec![d, d]);
            let ffn_in = randn(vec![d, f]);
            let ffn_out = randn(vec![f, d]);
            let adapter = config.has_adapter(l).then(|| AdapterParams {
                down: randn(vec![d, a]),
                down_bias: Tensor::zeros(vec![a]),
                up: Tensor::zeros(vec![a, d]),
                up_bias: Tensor::zeros(vec![d]),
            });
            layers.push(LayerParams {
                attn_norm_gain: Tensor::filled(vec![d], 1.0),
                attn_norm_bias: Tensor::zeros(vec![d]),
                query,
                key,
                value,
                output,
                ffn_norm_gain: Tensor::filled(vec![d], 1.0),
                ffn_norm_bias: Tensor::zeros(vec![d]),
                ffn_in,
                ffn_in_bias: Tensor::zeros(vec![f]),
                ffn_out,
                ffn_out_bias: Tensor::zeros(vec![d]),
                adapter,
            });
        }
        let lm_head = randn(vec![d, v]);
        Self {
            token_embedding,
            position_embedding,
            layers,
            final_norm_gain: Tensor::filled(vec![d], 1.0),
            final_norm_bias: Tensor::zeros(vec![d]),
            lm_head,
        }
    }

    pub fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, t| n += t.numel());
        n
    }
}
