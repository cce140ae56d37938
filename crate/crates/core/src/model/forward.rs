use super::{AdapterParams, LayerParams, ModelConfig, ModelError, ModelParams};
use crate::numerics::{Graph, Real, Tensor, Var};
use crate::segmenter::{segment_weights_with, SegmentLayout, TokenId};

/// Per-layer, per-head attention probabilities (`T×T`) recorded during a
/// forward pass.
pub type AttentionMaps = Vec<Vec<Tensor>>;

/// `mask[i*T + j]` is true when query `i` may attend to key `j` (`j ≤ i`).
pub fn causal_mask(t: usize) -> Vec<bool> {
    let mut mask = vec![false; t * t];
    for i in 0..t {
        for j in 0..=i {
            mask[i * t + j] = true;
        }
    }
    mask
}

pub(crate) fn attention_scale(head_dim: usize) -> Real {
    1.0 / (head_dim as Real).sqrt()
}

/// Multi-head causal self-attention over the rows of `x`, including the
/// output projection.
pub fn graph_causal_attention(
    g: &mut Graph,
    x: Var,
    layer: &LayerParams<Var>,
    n_heads: usize,
    mut trace: Option<&mut Vec<Tensor>>,
) -> Result<Var, ModelError> {
    let (t, d) = (g.value(x).rows(), g.value(x).cols());
    if n_heads == 0 || d % n_heads != 0 {
        return Err(ModelError::Config(format!("model_dim {d} not divisible by {n_heads} heads")));
    }
    let hd = d / n_heads;
    let q = g.matmul(x, layer.query)?;
    let k = g.matmul(x, layer.key)?;
    let v = g.matmul(x, layer.value)?;
    let mask = causal_mask(t);
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = g.slice_cols(q, h * hd, hd)?;
        let kh = g.slice_cols(k, h * hd, hd)?;
        let vh = g.slice_cols(v, h * hd, hd)?;
        let kt = g.transpose(kh)?;
        let scores = g.matmul(qh, kt)?;
        let scores = g.scale(scores, attention_scale(hd))?;
        let probs = g.masked_softmax_rows(scores, &mask)?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(g.value(probs).clone());
        }
        heads.push(g.matmul(probs, vh)?);
    }
    let cat = g.concat_cols(&heads)?;
    Ok(g.matmul(cat, layer.output)?)
}

/// Per-dimension maximum of `h` over the instruction rows.
pub fn graph_instruction_embedding(g: &mut Graph, h: Var, layout: &SegmentLayout) -> Result<Var, ModelError> {
    let positions = layout.instruction_positions();
    if positions.is_empty() {
        return Err(ModelError::EmptyInstruction);
    }
    Ok(g.max_pool_positions(h, &positions)?)
}

/// Adapter `up(relu(down(x)))` applied to a `d`-vector.
pub fn graph_adapter(g: &mut Graph, x: Var, adapter: &AdapterParams<Var>) -> Result<Var, ModelError> {
    let z = g.matmul(x, adapter.down)?;
    let z = g.add_row(z, adapter.down_bias)?;
    let z = g.relu(z)?;
    let f = g.matmul(z, adapter.up)?;
    Ok(g.add_row(f, adapter.up_bias)?)
}

/// `h[i] + w[i] · f(h_ins)` where `h_ins` is the pooled instruction.
pub fn graph_swie_fuse(
    g: &mut Graph,
    h: Var,
    weights: &[Real],
    layout: &SegmentLayout,
    adapter: &AdapterParams<Var>,
) -> Result<Var, ModelError> {
    let pooled = graph_instruction_embedding(g, h, layout)?;
    let f = graph_adapter(g, pooled, adapter)?;
    Ok(g.add_scaled_rows(h, f, weights)?)
}

fn check_inputs(config: &ModelConfig, tokens: &[TokenId], layout: &SegmentLayout) -> Result<(), ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    if tokens.len() > config.max_seq_len {
        return Err(ModelError::TooLong { len: tokens.len(), max: config.max_seq_len });
    }
    if layout.len() != tokens.len() {
        return Err(ModelError::LayoutMismatch { layout: layout.len(), tokens: tokens.len() });
    }
    if let Some(&token) = tokens.iter().find(|&&t| t >= config.vocab_size) {
        return Err(ModelError::TokenOutOfRange { token, vocab: config.vocab_size });
    }
    Ok(())
}

/// Records the decoder on `g` and returns the `T×V` logits.
///
/// When `trace` is given, each layer's per-head attention maps are appended.
pub fn forward_graph(
    g: &mut Graph,
    params: &ModelParams<Var>,
    config: &ModelConfig,
    tokens: &[TokenId],
    layout: &SegmentLayout,
    mut trace: Option<&mut AttentionMaps>,
) -> Result<Var, ModelError> {
    check_inputs(config, tokens, layout)?;
    let t = tokens.len();
    let positions: Vec<usize> = (0..t).collect();
    let tok = g.gather_rows(params.token_embedding, tokens)?;
    let pos = g.gather_rows(params.position_embedding, &positions)?;
    let mut h = g.add(tok, pos)?;

    let weights = if config.swie_enabled {
        Some(segment_weights_with(layout, t, config.weight_normalization)?)
    } else {
        None
    };

    for layer in &params.layers {
        let a = g.layer_norm(h, layer.attn_norm_gain, layer.attn_norm_bias, config.norm_eps)?;
        let mut maps = Vec::new();
        let att = graph_causal_attention(g, a, layer, config.n_heads, trace.is_some().then_some(&mut maps))?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(maps);
        }
        h = g.add(h, att)?;

        let b = g.layer_norm(h, layer.ffn_norm_gain, layer.ffn_norm_bias, config.norm_eps)?;
        let f = g.matmul(b, layer.ffn_in)?;
        let f = g.add_row(f, layer.ffn_in_bias)?;
        let f = g.gelu(f)?;
        let f = g.matmul(f, layer.ffn_out)?;
        let f = g.add_row(f, layer.ffn_out_bias)?;
        h = g.add(h, f)?;

        if let (Some(w), Some(adapter)) = (&weights, &layer.adapter) {
            h = graph_swie_fuse(g, h, w, layout, adapter)?;
        }
    }
    let h = g.layer_norm(h, params.final_norm_gain, params.final_norm_bias, config.norm_eps)?;
    Ok(g.matmul(h, params.lm_head)?)
}

/// Registers every tensor as a graph constant.
pub(crate) fn constants(g: &mut Graph, params: &ModelParams) -> ModelParams<Var> {
    params.map(|_, t| g.constant(t.clone()))
}

fn constant_layer(g: &mut Graph, layer: &LayerParams) -> LayerParams<Var> {
    let mut c = |t: &Tensor| g.constant(t.clone());
    LayerParams {
        attn_norm_gain: c(&layer.attn_norm_gain),
        attn_norm_bias: c(&layer.attn_norm_bias),
        query: c(&layer.query),
        key: c(&layer.key),
        value: c(&layer.value),
        output: c(&layer.output),
        ffn_norm_gain: c(&layer.ffn_norm_gain),
        ffn_norm_bias: c(&layer.ffn_norm_bias),
        ffn_in: c(&layer.ffn_in),
        ffn_in_bias: c(&layer.ffn_in_bias),
        ffn_out: c(&layer.ffn_out),
        ffn_out_bias: c(&layer.ffn_out_bias),
        adapter: layer.adapter.as_ref().map(|a| constant_adapter(g, a)),
    }
}

fn constant_adapter(g: &mut Graph, a: &AdapterParams) -> AdapterParams<Var> {
    AdapterParams {
        down: g.constant(a.down.clone()),
        down_bias: g.constant(a.down_bias.clone()),
        up: g.constant(a.up.clone()),
        up_bias: g.constant(a.up_bias.clone()),
    }
}

/// Causal multi-head attention (with output projection) on a `T×d` input.
pub fn causal_attention(h: &Tensor, layer: &LayerParams, config: &ModelConfig) -> Result<Tensor, ModelError> {
    if h.rows() > config.max_seq_len {
        return Err(ModelError::TooLong { len: h.rows(), max: config.max_seq_len });
    }
    let mut g = Graph::new();
    let x = g.constant(h.clone());
    let layer = constant_layer(&mut g, layer);
    let out = graph_causal_attention(&mut g, x, &layer, config.n_heads, None)?;
    Ok(g.value(out).clone())
}

/// Max-pooled instruction representation of a `T×d` hidden state.
pub fn instruction_embedding(h: &Tensor, layout: &SegmentLayout) -> Result<Tensor, ModelError> {
    let mut g = Graph::new();
    let x = g.constant(h.clone());
    let out = graph_instruction_embedding(&mut g, x, layout)?;
    Ok(g.value(out).clone())
}

/// Fuses the adapted instruction representation into the rows of `h`
/// using input-length normalized segment weights.
pub fn swie_fuse(h: &Tensor, layout: &SegmentLayout, adapter: &AdapterParams) -> Result<Tensor, ModelError> {
    let weights = crate::segmenter::segment_weights(layout, h.rows())?;
    let mut g = Graph::new();
    let x = g.constant(h.clone());
    let adapter = constant_adapter(&mut g, adapter);
    let out = graph_swie_fuse(&mut g, x, &weights, layout, &adapter)?;
    Ok(g.value(out).clone())
}
