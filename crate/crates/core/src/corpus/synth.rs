//! Negative generation and coverage filtering.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::client::{llm_generate_negative, ExternalTextClient, RetryPolicy};
use super::corrupt::{corrupt_offline, AlignerSet, CorruptError};
use super::prompts::LlmPrompts;
use super::{CorpusError, ErrorType, NegativeSample, ParallelPair, Provenance};
use crate::align::{text_coverage, CoverageScore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisPolicy {
    /// Minimum coverage drop on the damaged side.
    pub delta: f64,
    /// Minimum coverage kept on the other side.
    pub rho: f64,
    pub error_types: Vec<ErrorType>,
    /// Use the offline corruptor when the external client fails.
    pub fallback_offline: bool,
    /// Concurrent requests to the external client.
    pub max_in_flight: usize,
    pub align_iterations: usize,
}

impl Default for SynthesisPolicy {
    fn default() -> Self {
        Self {
            delta: 0.10,
            rho: 0.40,
            error_types: ErrorType::ALL.to_vec(),
            fallback_offline: true,
            max_in_flight: 4,
            align_iterations: 10,
        }
    }
}

/// An unfiltered corrupted translation.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub pair: ParallelPair,
    pub text: String,
    pub error_type: ErrorType,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub count: usize,
    pub mean_source: f64,
    pub mean_target: f64,
}

impl CategoryStats {
    fn from_scores(scores: &[CoverageScore]) -> Self {
        if scores.is_empty() {
            return Self::default();
        }
        let n = scores.len() as f64;
        Self {
            count: scores.len(),
            mean_source: scores.iter().map(|s| s.source).sum::<f64>() / n,
            mean_target: scores.iter().map(|s| s.target).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejections {
    pub too_short: usize,
    pub no_candidate: usize,
    pub client_error: usize,
    pub empty: usize,
    pub identical: usize,
    pub unaligned: usize,
    pub insufficient_drop: usize,
    pub low_retention: usize,
}

impl Rejections {
    pub fn total(&self) -> usize {
        self.too_short
            + self.no_candidate
            + self.client_error
            + self.empty
            + self.identical
            + self.unaligned
            + self.insufficient_drop
            + self.low_retention
    }

    fn merge(&mut self, other: &Rejections) {
        self.too_short += other.too_short;
        self.no_candidate += other.no_candidate;
        self.client_error += other.client_error;
        self.empty += other.empty;
        self.identical += other.identical;
        self.unaligned += other.unaligned;
        self.insufficient_drop += other.insufficient_drop;
        self.low_retention += other.low_retention;
    }
}

/// Coverage statistics of the references and of the kept negatives.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub reference: CategoryStats,
    pub miss: CategoryStats,
    pub over: CategoryStats,
    pub rejected: Rejections,
}

/// Where corrupted translations come from.
#[derive(Clone, Copy)]
pub enum NegativeSource<'a> {
    Offline,
    Llm { client: &'a dyn ExternalTextClient, retry: &'a RetryPolicy, prompts: &'a LlmPrompts },
}

fn keep(error: ErrorType, cand: CoverageScore, reference: CoverageScore, policy: &SynthesisPolicy) -> Result<(), bool> {
    let (damaged, ref_damaged, retained) = match error {
        ErrorType::Miss => (cand.source, reference.source, cand.target),
        ErrorType::Over => (cand.target, reference.target, cand.source),
    };
    if !(damaged < ref_damaged - policy.delta) {
        return Err(true);
    }
    if retained < policy.rho {
        return Err(false);
    }
    Ok(())
}

/// Keeps the candidates whose coverage moved the way their error type
/// predicts.
///
/// A miss must drop source coverage by more than `delta` while keeping at
/// least `rho` target coverage; an over candidate mirrors this on the target
/// side. Reference statistics are taken over the distinct pairs seen.
pub fn filter_by_coverage(
    candidates: &[Candidate],
    aligners: &AlignerSet,
    policy: &SynthesisPolicy,
) -> (Vec<NegativeSample>, SynthesisReport) {
    let mut rejected = Rejections::default();
    let mut kept = Vec::new();
    let mut seen = BTreeSet::new();
    let mut reference_scores = Vec::new();
    let (mut miss_scores, mut over_scores) = (Vec::new(), Vec::new());
    for c in candidates {
        let text = c.text.trim();
        if text.is_empty() {
            rejected.empty += 1;
            continue;
        }
        if text == c.pair.target.trim() {
            rejected.identical += 1;
            continue;
        }
        let Some(aligner) = aligners.get(c.pair.source_lang, c.pair.target_lang) else {
            rejected.unaligned += 1;
            continue;
        };
        let (Ok(reference), Ok(score)) =
            (text_coverage(aligner, &c.pair.source, &c.pair.target), text_coverage(aligner, &c.pair.source, text))
        else {
            rejected.unaligned += 1;
            continue;
        };
        let key = (c.pair.source.clone(), c.pair.target.clone(), c.pair.source_lang, c.pair.target_lang);
        if seen.insert(key) {
            reference_scores.push(reference);
        }
        match keep(c.error_type, score, reference, policy) {
            Err(true) => rejected.insufficient_drop += 1,
            Err(false) => rejected.low_retention += 1,
            Ok(()) => {
                match c.error_type {
                    ErrorType::Miss => miss_scores.push(score),
                    ErrorType::Over => over_scores.push(score),
                }
                kept.push(NegativeSample {
                    pair: c.pair.clone(),
                    corrupted: text.to_string(),
                    error_type: c.error_type,
                    provenance: c.provenance,
                    source_coverage: score.source,
                    target_coverage: score.target,
                });
            }
        }
    }
    let report = SynthesisReport {
        reference: CategoryStats::from_scores(&reference_scores),
        miss: CategoryStats::from_scores(&miss_scores),
        over: CategoryStats::from_scores(&over_scores),
        rejected,
    };
    (kept, report)
}

fn job_seed(seed: u64, index: usize, error: ErrorType) -> u64 {
    let e = match error {
        ErrorType::Miss => 1u64,
        ErrorType::Over => 2,
    };
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ e.rotate_left(40)
}

fn offline_candidate(
    pairs: &[ParallelPair],
    index: usize,
    error: ErrorType,
    aligners: &AlignerSet,
    seed: u64,
) -> Result<Candidate, Rejections> {
    let pair = &pairs[index];
    let Some(aligner) = aligners.get(pair.source_lang, pair.target_lang) else {
        return Err(Rejections { unaligned: 1, ..Default::default() });
    };
    match corrupt_offline(pair, error, aligner, pairs, job_seed(seed, index, error)) {
        Ok(text) => Ok(Candidate { pair: pair.clone(), text, error_type: error, provenance: Provenance::OfflineCorruptor }),
        Err(CorruptError::TooShort(_)) => Err(Rejections { too_short: 1, ..Default::default() }),
        Err(CorruptError::NoCandidate) => Err(Rejections { no_candidate: 1, ..Default::default() }),
    }
}

fn candidate(
    pairs: &[ParallelPair],
    index: usize,
    error: ErrorType,
    aligners: &AlignerSet,
    policy: &SynthesisPolicy,
    source: NegativeSource<'_>,
    seed: u64,
) -> Result<Candidate, Rejections> {
    match source {
        NegativeSource::Offline => offline_candidate(pairs, index, error, aligners, seed),
        NegativeSource::Llm { client, retry, prompts } => {
            let pair = &pairs[index];
            match llm_generate_negative(&prompts.render(pair, error), client, retry) {
                Ok(text) => Ok(Candidate { pair: pair.clone(), text, error_type: error, provenance: Provenance::ExternalLlm }),
                Err(e) if policy.fallback_offline && !matches!(e, super::ClientError::Malformed(_)) => {
                    log::warn!("pair {index}: {e}; using the offline corruptor");
                    offline_candidate(pairs, index, error, aligners, seed)
                }
                Err(super::ClientError::Malformed(_)) => Err(Rejections { empty: 1, ..Default::default() }),
                Err(e) => {
                    log::warn!("pair {index}: {e}");
                    Err(Rejections { client_error: 1, ..Default::default() })
                }
            }
        }
    }
}

/// Generates negatives for every pair and error type, then filters them.
///
/// Work runs in parallel over pairs and is merged in input order, so offline
/// synthesis depends only on `(pairs, aligners, policy, seed)`.
pub fn synthesize(
    pairs: &[ParallelPair],
    aligners: &AlignerSet,
    policy: &SynthesisPolicy,
    source: NegativeSource<'_>,
    seed: u64,
) -> Result<(Vec<NegativeSample>, SynthesisReport), CorpusError> {
    let run = || -> Vec<Result<Candidate, Rejections>> {
        (0..pairs.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                policy.error_types.iter().map(move |&e| candidate(pairs, i, e, aligners, policy, source, seed))
            })
            .collect()
    };
    let outcomes = match source {
        NegativeSource::Offline => run(),
        NegativeSource::Llm { .. } => rayon::ThreadPoolBuilder::new()
            .num_threads(policy.max_in_flight.max(1))
            .build()
            .map_err(|e| CorpusError::Config(e.to_string()))?
            .install(run),
    };
    let mut early = Rejections::default();
    let mut candidates = Vec::new();
    for o in outcomes {
        match o {
            Ok(c) => candidates.push(c),
            Err(r) => early.merge(&r),
        }
    }
    let (kept, mut report) = filter_by_coverage(&candidates, aligners, policy);
    report.rejected.merge(&early);
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{toy_corpus, ClientError, MockClient};

    fn setup(n: usize) -> (Vec<ParallelPair>, AlignerSet) {
        let pairs = toy_corpus(5, n);
        let set = AlignerSet::train(&pairs, 10).unwrap();
        (pairs, set)
    }

    #[test]
    fn identical_and_empty_are_rejected() {
        let (pairs, set) = setup(40);
        let mk = |text: &str| Candidate {
            pair: pairs[0].clone(),
            text: text.into(),
            error_type: ErrorType::Miss,
            provenance: Provenance::ExternalLlm,
        };
        let (kept, report) = filter_by_coverage(&[mk(&pairs[0].target), mk("  ")], &set, &SynthesisPolicy::default());
        assert!(kept.is_empty());
        assert_eq!(report.rejected.identical, 1);
        assert_eq!(report.rejected.empty, 1);
    }

    #[test]
    fn empty_input_gives_zero_report() {
        let (_, set) = setup(20);
        let (kept, report) = filter_by_coverage(&[], &set, &SynthesisPolicy::default());
        assert!(kept.is_empty());
        assert_eq!(report, SynthesisReport::default());
    }

    #[test]
    fn directional_law_on_toy_corpus() {
        let (pairs, set) = setup(240);
        let (kept, r) = synthesize(&pairs, &set, &SynthesisPolicy::default(), NegativeSource::Offline, 1).unwrap();
        assert!(kept.iter().all(|k| k.corrupted != k.pair.target));
        assert!(r.miss.count > 50 && r.over.count > 50, "{r:?}");
        assert!(r.miss.mean_source < r.reference.mean_source - 0.1, "{r:?}");
        assert!(r.over.mean_target < r.reference.mean_target - 0.1, "{r:?}");
        assert!(r.miss.mean_source < r.over.mean_source && r.over.mean_source < r.reference.mean_source, "{r:?}");
        assert!(r.over.mean_target < r.miss.mean_target && r.miss.mean_target < r.reference.mean_target, "{r:?}");
        for c in [&r.reference, &r.miss, &r.over] {
            assert!((0.0..=1.0).contains(&c.mean_source) && (0.0..=1.0).contains(&c.mean_target));
        }
    }

    #[test]
    fn offline_synthesis_is_deterministic() {
        let (pairs, set) = setup(60);
        let p = SynthesisPolicy::default();
        let a = synthesize(&pairs, &set, &p, NegativeSource::Offline, 9).unwrap();
        let b = synthesize(&pairs, &set, &p, NegativeSource::Offline, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn client_timeout_falls_back_to_offline() {
        let (pairs, set) = setup(40);
        let client = MockClient::failing(ClientError::Timeout);
        let retry = RetryPolicy { max_retries: 0, ..Default::default() };
        let prompts = LlmPrompts::default();
        let source = NegativeSource::Llm { client: &client, retry: &retry, prompts: &prompts };
        let (kept, _) = synthesize(&pairs[..4], &set, &SynthesisPolicy::default(), source, 0).unwrap();
        assert!(!kept.is_empty());
        assert!(kept.iter().all(|k| k.provenance == Provenance::OfflineCorruptor));

        let strict = SynthesisPolicy { fallback_offline: false, ..Default::default() };
        let (kept, report) = synthesize(&pairs[..4], &set, &strict, source, 0).unwrap();
        assert!(kept.is_empty());
        assert_eq!(report.rejected.client_error, 8);
    }

    #[test]
    fn canned_completion_flows_through_the_filter() {
        let (pairs, set) = setup(40);
        let p = &pairs[0];
        let words: Vec<&str> = p.target.split_whitespace().collect();
        let client = MockClient::canned(words[..2].join(" "));
        let retry = RetryPolicy::default();
        let prompts = LlmPrompts::default();
        let source = NegativeSource::Llm { client: &client, retry: &retry, prompts: &prompts };
        let policy = SynthesisPolicy { error_types: vec![ErrorType::Miss], ..Default::default() };
        let (kept, report) = synthesize(&pairs[..1], &set, &policy, source, 0).unwrap();
        assert_eq!(kept.len() + report.rejected.total(), 1);
        assert!(kept.iter().all(|k| k.provenance == Provenance::ExternalLlm));
        assert_eq!(client.calls().len(), 1);
        assert!(client.calls()[0].contains(&p.source));

        let blank = MockClient::canned("   ");
        let source = NegativeSource::Llm { client: &blank, retry: &retry, prompts: &prompts };
        let (kept, report) = synthesize(&pairs[..1], &set, &policy, source, 0).unwrap();
        assert!(kept.is_empty());
        assert_eq!(report.rejected.empty, 1);
    }
}
