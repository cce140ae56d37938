//! Attention accumulation at span boundaries.
//!
//! `S(sid) = Σ_{i>sid} a[i][sid]` measures how much attention later
//! positions pay to the token at `sid`. Comparing the end of the input span
//! against the end of the instruction span shows how much the instruction is
//! still consulted.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AttentionMaps, Model, ModelError};
use crate::numerics::{Real, Tensor};
use crate::segmenter::{SegmentLayout, TokenId, INPUT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbeError {
    #[error("boundary {sid} needs at least one later position in a {len}-token trace")]
    SidOutOfRange { sid: usize, len: usize },
    #[error("layer {layer} not in a {layers}-layer trace")]
    LayerOutOfRange { layer: usize, layers: usize },
    #[error("head {head} not in a {heads}-head layer")]
    HeadOutOfRange { head: usize, heads: usize },
    #[error("{0} span is empty")]
    EmptySpan(&'static str),
    #[error("attention maps do not match the layout")]
    BadTrace,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv: {0}")]
    Csv(String),
    #[error("{0}: {1}")]
    Io(String, String),
}

/// How per-head matrices are combined before accumulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadMode {
    #[default]
    Mean,
    Head(usize),
}

/// Attention maps of one forward pass together with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub layers: AttentionMaps,
    pub layout: SegmentLayout,
}

impl AttentionTrace {
    pub fn new(layers: AttentionMaps, layout: SegmentLayout) -> Result<Self, ProbeError> {
        let t = layout.len();
        if layers.iter().flatten().any(|m| m.shape() != [t, t]) || layers.iter().any(Vec::is_empty) {
            return Err(ProbeError::BadTrace);
        }
        Ok(Self { layers, layout })
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layout.is_empty()
    }

    /// Aggregated attention `a[i][j]` at `layer`. Head means are summed in
    /// sorted order, so permuting heads gives identical bits.
    pub fn entry(&self, layer: usize, i: usize, j: usize, mode: HeadMode) -> Result<Real, ProbeError> {
        let heads = self
            .layers
            .get(layer)
            .ok_or(ProbeError::LayerOutOfRange { layer, layers: self.layers.len() })?;
        match mode {
            HeadMode::Head(h) => {
                let m = heads.get(h).ok_or(ProbeError::HeadOutOfRange { head: h, heads: heads.len() })?;
                Ok(m.at(i, j))
            }
            HeadMode::Mean => {
                let mut vals: Vec<Real> = heads.iter().map(|m| m.at(i, j)).collect();
                vals.sort_by(|a, b| a.total_cmp(b));
                Ok(vals.iter().sum::<Real>() / vals.len() as Real)
            }
        }
    }
}

/// Runs the model once and captures its attention. The logits are returned
/// unchanged.
pub fn record_attention(
    model: &Model,
    tokens: &[TokenId],
    layout: &SegmentLayout,
) -> Result<(Tensor, AttentionTrace), ProbeError> {
    let (logits, maps) = model.logits_with_attention(tokens, layout)?;
    Ok((logits, AttentionTrace::new(maps, layout.clone())?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanScore {
    pub layer: usize,
    pub sid: usize,
    pub score: Real,
}

/// `Σ_{i=sid+1}^{T-1} a[i][sid]`.
pub fn span_accumulate(trace: &AttentionTrace, layer: usize, sid: usize, mode: HeadMode) -> Result<SpanScore, ProbeError> {
    let t = trace.len();
    if sid + 1 >= t {
        return Err(ProbeError::SidOutOfRange { sid, len: t });
    }
    let mut score = 0.0;
    for i in sid + 1..t {
        score += trace.entry(layer, i, sid, mode)?;
    }
    Ok(SpanScore { layer, sid, score })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub layer: usize,
    /// `None` when the denominator is zero.
    pub ratio: Option<Real>,
    pub numerator: SpanScore,
    pub denominator: SpanScore,
    pub head_mode: HeadMode,
}

/// Per layer, `S(end of input) / S(end of instruction)`; `inverse` swaps the
/// two. A lower ratio means relatively more attention on the instruction.
pub fn attention_ratio(trace: &AttentionTrace, mode: HeadMode, inverse: bool) -> Result<Vec<RatioReport>, ProbeError> {
    let layout = &trace.layout;
    let ins_end = layout.segment_end(layout.instruction_id()).ok_or(ProbeError::EmptySpan("instruction"))?;
    let input_end = layout.segment_end(INPUT).ok_or(ProbeError::EmptySpan("input"))?;
    let (num_sid, den_sid) = if inverse { (ins_end, input_end) } else { (input_end, ins_end) };
    (0..trace.layers.len())
        .map(|layer| {
            let numerator = span_accumulate(trace, layer, num_sid, mode)?;
            let denominator = span_accumulate(trace, layer, den_sid, mode)?;
            let ratio = (denominator.score > 0.0).then(|| numerator.score / denominator.score);
            Ok(RatioReport { layer, ratio, numerator, denominator, head_mode: mode })
        })
        .collect()
}

/// One CSV line of a probe report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub layer: usize,
    /// `instruction` or `input`: whose end token the score accumulates on.
    pub span: String,
    pub score: Real,
    pub ratio: Option<Real>,
    #[serde(rename = "model-tag")]
    pub model_tag: String,
}

/// Flattens tagged reports into rows sorted by `(tag, layer)`, instruction
/// boundary first within a layer.
pub fn report_rows(reports: &[(String, Vec<RatioReport>)]) -> Vec<ProbeRow> {
    let mut rows = Vec::new();
    for (tag, layers) in reports {
        for r in layers {
            let ins_first = r.denominator.sid <= r.numerator.sid;
            let (ins, input) = if ins_first { (r.denominator, r.numerator) } else { (r.numerator, r.denominator) };
            for (span, s) in [("instruction", ins), ("input", input)] {
                rows.push(ProbeRow { layer: r.layer, span: span.into(), score: s.score, ratio: r.ratio, model_tag: tag.clone() });
            }
        }
    }
    rows.sort_by(|a, b| (&a.model_tag, a.layer).cmp(&(&b.model_tag, b.layer)));
    rows
}

pub fn rows_to_csv(rows: &[ProbeRow]) -> Result<String, ProbeError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(["layer", "span", "score", "ratio", "model-tag"]).map_err(|e| ProbeError::Csv(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| ProbeError::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| ProbeError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ProbeError::Csv(e.to_string()))
}

pub fn parse_csv(text: &str) -> Result<Vec<ProbeRow>, ProbeError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(|e| ProbeError::Csv(e.to_string()))).collect()
}

pub fn export_report(reports: &[(String, Vec<RatioReport>)], path: &Path) -> Result<(), ProbeError> {
    let text = rows_to_csv(&report_rows(reports))?;
    fs::write(path, text).map_err(|e| ProbeError::Io(path.display().to_string(), e.to_string()))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn uniform(t: usize) -> Tensor {
        let mut m = Tensor::zeros(vec![t, t]);
        for i in 0..t {
            for j in 0..=i {
                m.data_mut()[i * t + j] = 1.0 / (i as Real + 1.0);
            }
        }
        m
    }

    fn uniform_trace(layout: SegmentLayout, layers: usize, heads: usize) -> AttentionTrace {
        let t = layout.len();
        AttentionTrace::new(vec![vec![uniform(t); heads]; layers], layout).unwrap()
    }

    #[test]
    fn uniform_span_accumulation() {
        let tr = uniform_trace(SegmentLayout::from_spans(1, 2, 1).unwrap(), 1, 2);
        let s = span_accumulate(&tr, 0, 1, HeadMode::Mean).unwrap();
        assert!((s.score - 7.0 / 12.0).abs() < 1e-12);
        let last = span_accumulate(&tr, 0, 2, HeadMode::Head(1)).unwrap();
        assert!((last.score - 0.25).abs() < 1e-15);
        assert!(matches!(span_accumulate(&tr, 0, 3, HeadMode::Mean), Err(ProbeError::SidOutOfRange { .. })));
    }

    #[test]
    fn uniform_ratio_is_a_harmonic_quotient() {
        let tr = uniform_trace(SegmentLayout::from_spans(4, 5, 4).unwrap(), 2, 2);
        let reports = attention_ratio(&tr, HeadMode::Mean, false).unwrap();
        let h = |a: usize, b: usize| (a..=b).map(|i| 1.0 / (i as Real + 1.0)).sum::<Real>();
        let want = h(9, 12) / h(4, 12);
        for r in &reports {
            assert!((r.ratio.unwrap() - want).abs() < 1e-12);
            assert_eq!((r.numerator.sid, r.denominator.sid), (8, 3));
        }
        assert!((want - 0.320_172_653_279_122).abs() < 1e-12);
        let inv = attention_ratio(&tr, HeadMode::Mean, true).unwrap();
        assert!((inv[0].ratio.unwrap() - 1.0 / want).abs() < 1e-12);
    }

    #[test]
    fn undefined_ratio_when_denominator_is_zero() {
        let layout = SegmentLayout::from_spans(2, 2, 1).unwrap();
        let mut m = Tensor::identity(5);
        m.data_mut()[4 * 5 + 3] = 0.5;
        m.data_mut()[4 * 5 + 4] = 0.5;
        let tr = AttentionTrace::new(vec![vec![m]], layout).unwrap();
        assert_eq!(attention_ratio(&tr, HeadMode::Mean, false).unwrap()[0].ratio, None);
    }

    #[test]
    fn csv_round_trip_and_ordering() {
        let tr = uniform_trace(SegmentLayout::from_spans(4, 5, 4).unwrap(), 2, 1);
        let r = attention_ratio(&tr, HeadMode::Mean, false).unwrap();
        let reports = vec![("swie".to_string(), r.clone()), ("baseline".to_string(), r)];
        let rows = report_rows(&reports);
        let tags: Vec<(&str, usize)> = rows.iter().map(|r| (r.model_tag.as_str(), r.layer)).collect();
        assert_eq!(tags[..2], [("baseline", 0), ("baseline", 0)]);
        assert_eq!(tags[6], ("swie", 1));
        let text = rows_to_csv(&rows).unwrap();
        assert!(text.starts_with("layer,span,score,ratio,model-tag\n"));
        assert_eq!(parse_csv(&text).unwrap(), rows);
        assert_eq!(rows_to_csv(&[]).unwrap(), "layer,span,score,ratio,model-tag\n");
    }

    #[test]
    fn recording_does_not_change_logits() {
        let model = Model::new(crate::model::ModelConfig::default(), 3).unwrap();
        let layout = SegmentLayout::from_spans(3, 3, 2).unwrap();
        let tokens = [1, 5, 6, 7, 8, 9, 10, 11];
        let (logits, trace) = record_attention(&model, &tokens, &layout).unwrap();
        assert_eq!(logits, model.logits(&tokens, &layout).unwrap());
        assert_eq!(trace.layers.len(), model.config.n_layers);
        assert!(trace.layers.iter().all(|l| l.len() == model.config.n_heads));
    }

    proptest! {
        #[test]
        fn mean_is_head_order_invariant(seed in any::<u64>()) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let layout = SegmentLayout::from_spans(3, 3, 2).unwrap();
            let heads: Vec<Tensor> = (0..3)
                .map(|_| {
                    let raw = Tensor::randn(vec![8, 8], 1.0, &mut rng);
                    let mut m = Tensor::zeros(vec![8, 8]);
                    for i in 0..8 {
                        let mut out = vec![0.0; 8];
                        let vis: Vec<bool> = (0..8).map(|j| j <= i).collect();
                        crate::numerics::kernels::softmax_visible(raw.row(i), &vis, &mut out);
                        m.data_mut()[i * 8..(i + 1) * 8].copy_from_slice(&out);
                    }
                    m
                })
                .collect();
            let mut rev = heads.clone();
            rev.reverse();
            let a = AttentionTrace::new(vec![heads], layout.clone()).unwrap();
            let b = AttentionTrace::new(vec![rev], layout).unwrap();
            prop_assert_eq!(
                attention_ratio(&a, HeadMode::Mean, false).unwrap(),
                attention_ratio(&b, HeadMode::Mean, false).unwrap()
            );
            // Conservation: summing accumulated mass over every column of
            // rows sid+1.. gives the row count.
            let sid = 2;
            let mass: Real = (0..8).map(|j| (sid + 1..8).map(|i| a.entry(0, i, j, HeadMode::Mean).unwrap()).sum::<Real>()).sum();
            prop_assert!((mass - (8 - sid - 1) as Real).abs() < 1e-9);
        }
    }
}
