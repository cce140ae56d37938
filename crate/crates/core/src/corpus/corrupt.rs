use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{ErrorType, Language, ParallelPair};
use crate::align::{coverage, tokenize, train_ibm1, AlignError, CoverageScore, LexicalAligner, WordAligner};

/// Share of source tokens a miss deletion must strip of their links.
pub const MISS_SHARE: (f64, f64) = (0.2, 0.4);
/// Length range of an over-translation fragment.
pub const OVER_FRAGMENT: (usize, usize) = (3, 8);
const MIN_TARGET_TOKENS: usize = 4;
const MAX_ATTEMPTS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorruptError {
    #[error("target has {0} tokens; at least 4 are needed")]
    TooShort(usize),
    #[error("no corruption lowers the required coverage")]
    NoCandidate,
}

/// One trained aligner per language direction.
#[derive(Debug, Clone, Default)]
pub struct AlignerSet {
    aligners: BTreeMap<(Language, Language), LexicalAligner>,
}

impl AlignerSet {
    pub fn train(pairs: &[ParallelPair], iterations: usize) -> Result<Self, AlignError> {
        let mut groups: BTreeMap<(Language, Language), Vec<ParallelPair>> = BTreeMap::new();
        for p in pairs {
            groups.entry((p.source_lang, p.target_lang)).or_default().push(p.clone());
        }
        if groups.is_empty() {
            return Err(AlignError::EmptyCorpus);
        }
        let mut aligners = BTreeMap::new();
        for (key, group) in groups {
            aligners.insert(key, LexicalAligner::new(train_ibm1(&group, iterations)?.table));
        }
        Ok(Self { aligners })
    }

    pub fn insert(&mut self, source: Language, target: Language, aligner: LexicalAligner) {
        self.aligners.insert((source, target), aligner);
    }

    pub fn get(&self, source: Language, target: Language) -> Option<&LexicalAligner> {
        self.aligners.get(&(source, target))
    }

    pub fn directions(&self) -> impl Iterator<Item = &(Language, Language)> {
        self.aligners.keys()
    }
}

fn score(aligner: &dyn WordAligner, src: &[String], tgt_raw: &[&str]) -> CoverageScore {
    let tgt: Vec<String> = tgt_raw.iter().map(|t| t.to_lowercase()).collect();
    let links = aligner.align(src, &tgt);
    coverage(src.len(), tgt.len(), &links).unwrap_or(CoverageScore { source: 0.0, target: 0.0 })
}

/// Deterministically damages `pair.target`.
///
/// Miss deletes a contiguous run of linked target tokens whose source words
/// make up 20–40% of the source. Over replaces one linked target token with a 3–8
/// token fragment from an unrelated reference in `donors`. Every candidate
/// is re-aligned, and the first one whose source (miss) or target (over)
/// coverage strictly drops is returned.
pub fn corrupt_offline(
    pair: &ParallelPair,
    error: ErrorType,
    aligner: &dyn WordAligner,
    donors: &[ParallelPair],
    seed: u64,
) -> Result<String, CorruptError> {
    let tgt_raw: Vec<&str> = pair.target.split_whitespace().collect();
    if tgt_raw.len() < MIN_TARGET_TOKENS {
        return Err(CorruptError::TooShort(tgt_raw.len()));
    }
    let src = tokenize(&pair.source);
    if src.is_empty() {
        return Err(CorruptError::NoCandidate);
    }
    let tgt: Vec<String> = tgt_raw.iter().map(|t| t.to_lowercase()).collect();
    let links = aligner.align(&src, &tgt);
    let base = score(aligner, &src, &tgt_raw);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match error {
        ErrorType::Miss => corrupt_miss(&src, &tgt_raw, &links, base, aligner, &mut rng),
        ErrorType::Over => corrupt_over(pair, &src, &tgt_raw, &links, base, aligner, donors, &mut rng),
    }
}

fn corrupt_miss(
    src: &[String],
    tgt_raw: &[&str],
    links: &BTreeSet<(usize, usize)>,
    base: CoverageScore,
    aligner: &dyn WordAligner,
    rng: &mut ChaCha8Rng,
) -> Result<String, CorruptError> {
    let n = tgt_raw.len();
    let mut by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(i, j) in links {
        by_source.entry(i).or_default().push(j);
    }
    let linked: BTreeSet<usize> = links.iter().map(|&(_, j)| j).collect();
    let mut spans = Vec::new();
    for a in 0..n {
        for b in a + 1..=n {
            if b - a >= n || !linked.contains(&(b - 1)) {
                break;
            }
            let lost = by_source.values().filter(|js| js.iter().all(|&j| (a..b).contains(&j))).count();
            let share = lost as f64 / src.len() as f64;
            if share >= MISS_SHARE.0 && share <= MISS_SHARE.1 {
                spans.push((a, b));
            }
        }
    }
    spans.shuffle(rng);
    for &(a, b) in spans.iter().take(MAX_ATTEMPTS) {
        let kept: Vec<&str> = tgt_raw[..a].iter().chain(&tgt_raw[b..]).copied().collect();
        if score(aligner, src, &kept).source < base.source {
            return Ok(kept.join(" "));
        }
    }
    Err(CorruptError::NoCandidate)
}

#[allow(clippy::too_many_arguments)]
fn corrupt_over(
    pair: &ParallelPair,
    src: &[String],
    tgt_raw: &[&str],
    links: &BTreeSet<(usize, usize)>,
    base: CoverageScore,
    aligner: &dyn WordAligner,
    donors: &[ParallelPair],
    rng: &mut ChaCha8Rng,
) -> Result<String, CorruptError> {
    let linked: Vec<usize> = links.iter().map(|&(_, j)| j).collect::<BTreeSet<_>>().into_iter().collect();
    if linked.is_empty() {
        return Err(CorruptError::NoCandidate);
    }
    let own: BTreeSet<String> = tgt_raw.iter().map(|t| t.to_lowercase()).collect();
    let usable = |d: &&ParallelPair| {
        d.target_lang == pair.target_lang && d.target != pair.target && d.target.split_whitespace().count() >= OVER_FRAGMENT.0
    };
    let unrelated: Vec<&ParallelPair> = donors
        .iter()
        .filter(usable)
        .filter(|d| d.target.split_whitespace().all(|w| !own.contains(&w.to_lowercase())))
        .collect();
    let pool: Vec<&ParallelPair> =
        if unrelated.is_empty() { donors.iter().filter(usable).collect() } else { unrelated };
    if pool.is_empty() {
        return Err(CorruptError::NoCandidate);
    }
    for _ in 0..MAX_ATTEMPTS {
        let donor: Vec<&str> = pool.choose(rng).map(|d| d.target.split_whitespace().collect()).unwrap_or_default();
        let k = rng.random_range(OVER_FRAGMENT.0..=OVER_FRAGMENT.1.min(donor.len()));
        let start = rng.random_range(0..=donor.len() - k);
        let pos = *linked.choose(rng).unwrap_or(&0);
        let mut out: Vec<&str> = tgt_raw[..pos].to_vec();
        out.extend(&donor[start..start + k]);
        out.extend(&tgt_raw[pos + 1..]);
        if score(aligner, src, &out).target < base.target {
            return Ok(out.join(" "));
        }
    }
    Err(CorruptError::NoCandidate)
}
