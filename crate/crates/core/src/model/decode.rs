use super::forward::attention_scale;
use super::{Model, ModelError};
use crate::numerics::kernels;
use crate::numerics::Real;
use crate::segmenter::{SegmentLayout, TokenId, WeightNormalization, EOS};

/// Keys, values and adapter outputs for the positions consumed so far.
#[derive(Debug, Clone, Default)]
pub struct KvCache {
    keys: Vec<Vec<Real>>,
    values: Vec<Vec<Real>>,
    adapter_out: Vec<Option<Vec<Real>>>,
    len: usize,
}

impl KvCache {
    fn new(n_layers: usize) -> Self {
        Self {
            keys: vec![Vec::new(); n_layers],
            values: vec![Vec::new(); n_layers],
            adapter_out: vec![None; n_layers],
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Cached `f(H_ins)` for `layer`, once the prompt has been consumed.
    pub fn adapter_output(&self, layer: usize) -> Option<&[Real]> {
        self.adapter_out.get(layer)?.as_deref()
    }
}

/// Row-at-a-time decoder that reuses cached keys, values and instruction
/// adapter outputs. It applies the same kernels in the same order as the
/// graph forward, so its logits match a full re-forward bit for bit.
#[derive(Debug)]
pub struct IncrementalDecoder<'m> {
    model: &'m Model,
    cache: KvCache,
    layout: SegmentLayout,
}

fn layer_norm_rows(x: &[Real], gain: &[Real], bias: &[Real], eps: Real, d: usize) -> Vec<Real> {
    let mut out = vec![0.0; x.len()];
    for (row, o) in x.chunks(d).zip(out.chunks_mut(d)) {
        kernels::layer_norm_row(row, gain, bias, eps, o);
    }
    out
}

fn add(a: &[Real], b: &[Real]) -> Vec<Real> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

impl<'m> IncrementalDecoder<'m> {
    /// Consumes the prompt and returns the logits of its last position.
    pub fn prefill(model: &'m Model, tokens: &[TokenId], layout: &SegmentLayout) -> Result<(Self, Vec<Real>), ModelError> {
        let config = &model.config;
        if config.swie_enabled && config.weight_normalization != WeightNormalization::InputLength {
            return Err(ModelError::UnsupportedNormalization);
        }
        if layout.len() != tokens.len() {
            return Err(ModelError::LayoutMismatch { layout: layout.len(), tokens: tokens.len() });
        }
        let mut dec = Self { model, cache: KvCache::new(config.n_layers), layout: layout.clone() };
        let logits = dec.run(tokens)?;
        let v = config.vocab_size;
        let last = logits[logits.len() - v..].to_vec();
        Ok((dec, last))
    }

    /// Appends one response token and returns its next-token logits.
    pub fn step(&mut self, token: TokenId) -> Result<Vec<Real>, ModelError> {
        self.layout.push_response();
        self.run(&[token])
    }

    pub fn cache(&self) -> &KvCache {
        &self.cache
    }

    pub fn layout(&self) -> &SegmentLayout {
        &self.layout
    }

    fn run(&mut self, tokens: &[TokenId]) -> Result<Vec<Real>, ModelError> {
        let config = &self.model.config;
        let params = &self.model.params;
        let start = self.cache.len;
        let n = tokens.len();
        if n == 0 {
            return Err(ModelError::EmptySequence);
        }
        if start + n > config.max_seq_len {
            return Err(ModelError::TooLong { len: start + n, max: config.max_seq_len });
        }
        let (d, f_dim, v) = (config.model_dim, config.ffn_dim, config.vocab_size);
        let hd = config.head_dim();
        let scale = attention_scale(hd);
        let eps = config.norm_eps;

        let mut h = Vec::with_capacity(n * d);
        for (r, &tok) in tokens.iter().enumerate() {
            if tok >= v {
                return Err(ModelError::TokenOutOfRange { token: tok, vocab: v });
            }
            h.extend(add(params.token_embedding.row(tok), params.position_embedding.row(start + r)));
        }

        for (l, layer) in params.layers.iter().enumerate() {
            let a = layer_norm_rows(&h, layer.attn_norm_gain.data(), layer.attn_norm_bias.data(), eps, d);
            let q = kernels::matmul(&a, layer.query.data(), n, d, d);
            let k = kernels::matmul(&a, layer.key.data(), n, d, d);
            let val = kernels::matmul(&a, layer.value.data(), n, d, d);
            self.cache.keys[l].extend_from_slice(&k);
            self.cache.values[l].extend_from_slice(&val);
            let (keys, values) = (&self.cache.keys[l], &self.cache.values[l]);

            let mut cat = vec![0.0; n * d];
            for r in 0..n {
                let i = start + r;
                for head in 0..config.n_heads {
                    let off = head * hd;
                    let qrow = &q[r * d + off..r * d + off + hd];
                    let mut scores = vec![0.0; i + 1];
                    for (p, &qp) in qrow.iter().enumerate() {
                        if qp == 0.0 {
                            continue;
                        }
                        for (j, s) in scores.iter_mut().enumerate() {
                            *s += qp * keys[j * d + off + p];
                        }
                    }
                    for s in &mut scores {
                        *s *= scale;
                    }
                    let mut probs = vec![0.0; i + 1];
                    kernels::softmax_visible(&scores, &vec![true; i + 1], &mut probs);
                    let out = &mut cat[r * d + off..r * d + off + hd];
                    for (j, &pj) in probs.iter().enumerate() {
                        if pj == 0.0 {
                            continue;
                        }
                        for (o, &vv) in out.iter_mut().zip(&values[j * d + off..j * d + off + hd]) {
                            *o += pj * vv;
                        }
                    }
                }
            }
            let att = kernels::matmul(&cat, layer.output.data(), n, d, d);
            h = add(&h, &att);

            let b = layer_norm_rows(&h, layer.ffn_norm_gain.data(), layer.ffn_norm_bias.data(), eps, d);
            let mut ff = kernels::matmul(&b, layer.ffn_in.data(), n, d, f_dim);
            kernels::add_row_inplace(&mut ff, layer.ffn_in_bias.data());
            for x in &mut ff {
                *x = kernels::gelu(*x);
            }
            let mut ff = kernels::matmul(&ff, layer.ffn_out.data(), n, f_dim, d);
            kernels::add_row_inplace(&mut ff, layer.ffn_out_bias.data());
            h = add(&h, &ff);

            if let (true, Some(adapter)) = (config.swie_enabled, &layer.adapter) {
                if self.cache.adapter_out[l].is_none() {
                    let positions = self.layout.instruction_positions();
                    if positions.is_empty() {
                        return Err(ModelError::EmptyInstruction);
                    }
                    if positions.iter().any(|&p| p < start || p >= start + n) {
                        return Err(ModelError::InstructionNotInPrompt);
                    }
                    let mut pooled = h[(positions[0] - start) * d..(positions[0] - start + 1) * d].to_vec();
                    for &p in &positions[1..] {
                        for (o, &x) in pooled.iter_mut().zip(&h[(p - start) * d..(p - start + 1) * d]) {
                            if x > *o {
                                *o = x;
                            }
                        }
                    }
                    let a_dim = config.adapter_dim;
                    let mut z = kernels::matmul(&pooled, adapter.down.data(), 1, d, a_dim);
                    kernels::add_row_inplace(&mut z, adapter.down_bias.data());
                    for x in &mut z {
                        *x = kernels::relu(*x);
                    }
                    let mut fv = kernels::matmul(&z, adapter.up.data(), 1, a_dim, d);
                    kernels::add_row_inplace(&mut fv, adapter.up_bias.data());
                    self.cache.adapter_out[l] = Some(fv);
                }
                let fv = self.cache.adapter_out[l].as_deref().unwrap_or_default();
                for r in 0..n {
                    let w = self.layout.weight_at(start + r, WeightNormalization::InputLength)?;
                    if w == 0.0 {
                        continue;
                    }
                    for (o, &x) in h[r * d..(r + 1) * d].iter_mut().zip(fv) {
                        *o += w * x;
                    }
                }
            }
        }
        self.cache.len += n;

        let hn = layer_norm_rows(&h, params.final_norm_gain.data(), params.final_norm_bias.data(), eps, d);
        let logits = kernels::matmul(&hn, params.lm_head.data(), n, d, v);
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(logits)
    }
}

/// Greedy continuation of `prompt`, excluding the end marker.
///
/// Stops at the end marker, after `max_new` tokens, or when the sequence
/// reaches the maximum length.
pub fn generate(model: &Model, prompt: &[TokenId], layout: &SegmentLayout, max_new: usize) -> Result<Vec<TokenId>, ModelError> {
    if prompt.len() > model.config.max_seq_len {
        return Err(ModelError::TooLong { len: prompt.len(), max: model.config.max_seq_len });
    }
    let mut out = Vec::new();
    if max_new == 0 {
        return Ok(out);
    }
    let (mut dec, mut logits) = IncrementalDecoder::prefill(model, prompt, layout)?;
    loop {
        let next = kernels::argmax(&logits);
        if next == EOS {
            break;
        }
        out.push(next);
        if out.len() == max_new || prompt.len() + out.len() >= model.config.max_seq_len {
            break;
        }
        logits = dec.step(next)?;
    }
    Ok(out)
}
