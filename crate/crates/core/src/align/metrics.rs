use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{tokenize, AlignError, AlignmentLinks, WordAligner};
use crate::numerics::Real;

/// Fractions of source and target tokens that carry at least one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageScore {
    pub source: Real,
    pub target: Real,
}

pub fn coverage(source_len: usize, target_len: usize, links: &AlignmentLinks) -> Result<CoverageScore, AlignError> {
    if source_len == 0 {
        return Err(AlignError::EmptySource);
    }
    let mut src = vec![false; source_len];
    let mut tgt = vec![false; target_len];
    for &(i, j) in links.iter() {
        if i >= source_len || j >= target_len {
            return Err(AlignError::LinkOutOfRange { src: i, tgt: j });
        }
        src[i] = true;
        tgt[j] = true;
    }
    let frac = |v: &[bool]| if v.is_empty() { 0.0 } else { v.iter().filter(|&&b| b).count() as Real / v.len() as Real };
    Ok(CoverageScore { source: frac(&src), target: frac(&tgt) })
}

/// Aligns and scores one source/hypothesis pair of raw texts.
pub fn text_coverage(aligner: &dyn WordAligner, source: &str, target: &str) -> Result<CoverageScore, AlignError> {
    let (s, t) = (tokenize(source), tokenize(target));
    let links = aligner.align(&s, &t);
    coverage(s.len(), t.len(), &links)
}

/// `100 × mean((source + target) / 2)` over `(source, hypothesis)` items.
///
/// Item scores are summed in sorted order, so the result does not depend on
/// the order of the test set.
pub fn faithfulness_score(aligner: &dyn WordAligner, testset: &[(String, String)]) -> Result<Real, AlignError> {
    if testset.is_empty() {
        return Err(AlignError::EmptyTestset);
    }
    let mut items = Vec::with_capacity(testset.len());
    for (s, h) in testset {
        let c = text_coverage(aligner, s, h)?;
        items.push((c.source + c.target) / 2.0);
    }
    items.sort_by(|a, b| a.total_cmp(b));
    Ok(100.0 * items.iter().sum::<Real>() / items.len() as Real)
}

fn ngrams(tokens: &[&str], n: usize) -> HashMap<Vec<String>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(|s| s.to_string()).collect()).or_insert(0) += 1;
        }
    }
    out
}

/// Corpus BLEU over whitespace tokens: geometric mean of clipped n-gram
/// precisions for `n = 1..=max_n` times the brevity penalty. Any zero
/// precision makes the score 0.
pub fn bleu(hypotheses: &[String], references: &[String], max_n: usize) -> Result<Real, AlignError> {
    if hypotheses.is_empty() {
        return Err(AlignError::EmptyHypotheses);
    }
    if hypotheses.len() != references.len() {
        return Err(AlignError::LengthMismatch { left: hypotheses.len(), right: references.len() });
    }
    if max_n == 0 {
        return Err(AlignError::ZeroOrder);
    }
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        let h: Vec<&str> = h.split_whitespace().collect();
        let r: Vec<&str> = r.split_whitespace().collect();
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=max_n {
            let hc = ngrams(&h, n);
            let rc = ngrams(&r, n);
            for (g, &c) in &hc {
                matched[n - 1] += c.min(rc.get(g).copied().unwrap_or(0));
            }
            total[n - 1] += h.len().saturating_sub(n - 1);
        }
    }
    if matched.contains(&0) {
        return Ok(0.0);
    }
    let log_p: Real = matched.iter().zip(&total).map(|(&m, &t)| (m as Real / t as Real).ln()).sum::<Real>() / max_n as Real;
    let bp = if hyp_len > ref_len { 1.0 } else { (1.0 - ref_len as Real / hyp_len as Real).exp() };
    Ok(100.0 * bp * log_p.exp())
}
