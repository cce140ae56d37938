use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::{tokenize, AlignError};
use crate::corpus::ParallelPair;
use crate::numerics::Real;

/// Spelling of the empty source word in serialized tables.
pub const NULL_WORD: &str = "<null>";

const CHUNK: usize = 64;

/// Lexical translation probabilities `t(target | source)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TranslationTable {
    rows: BTreeMap<String, BTreeMap<String, Real>>,
}

impl TranslationTable {
    pub fn prob(&self, source: &str, target: &str) -> Real {
        self.rows.get(source).and_then(|r| r.get(target)).copied().unwrap_or(0.0)
    }

    pub fn null_prob(&self, target: &str) -> Real {
        self.prob(NULL_WORD, target)
    }

    pub fn row(&self, source: &str) -> Option<&BTreeMap<String, Real>> {
        self.rows.get(source)
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    /// Most probable target for `source`; ties go to the smaller string.
    pub fn best_target(&self, source: &str) -> Option<(&str, Real)> {
        let mut best: Option<(&str, Real)> = None;
        for (t, &p) in self.rows.get(source)? {
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((t, p));
            }
        }
        best
    }

    /// One `source\ttarget\tprob` line per entry, sorted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (s, row) in &self.rows {
            for (t, p) in row {
                let _ = writeln!(out, "{s}\t{t}\t{p}");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, AlignError> {
        let mut rows: BTreeMap<String, BTreeMap<String, Real>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parse = |msg: &str| AlignError::Parse { line: i + 1, message: msg.to_string() };
            let fields: Vec<&str> = line.split('\t').collect();
            let [s, t, p] = fields[..] else {
                return Err(parse("expected source, target and probability"));
            };
            let p: Real = p.parse().map_err(|_| parse("bad probability"))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(parse("probability outside [0, 1]"));
            }
            if rows.entry(s.to_string()).or_default().insert(t.to_string(), p).is_some() {
                return Err(parse("duplicate entry"));
            }
        }
        Ok(Self { rows })
    }

    pub fn save(&self, path: &Path) -> Result<(), AlignError> {
        fs::write(path, self.to_text()).map_err(|e| AlignError::Io(path.display().to_string(), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, AlignError> {
        let text = fs::read_to_string(path).map_err(|e| AlignError::Io(path.display().to_string(), e.to_string()))?;
        Self::from_text(&text)
    }
}

/// Trained table plus the corpus log-likelihood before training (index 0)
/// and after each iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Ibm1Result {
    pub table: TranslationTable,
    pub log_likelihood: Vec<Real>,
}

struct Interned {
    pairs: Vec<(Vec<usize>, Vec<usize>)>,
    sources: Vec<String>,
    targets: Vec<String>,
}

fn intern(corpus: &[(Vec<String>, Vec<String>)]) -> Interned {
    let mut src: BTreeMap<&str, usize> = BTreeMap::new();
    let mut tgt: BTreeMap<&str, usize> = BTreeMap::new();
    src.insert(NULL_WORD, 0);
    for (s, t) in corpus {
        for w in s {
            src.entry(w).or_insert(0);
        }
        for w in t {
            tgt.entry(w).or_insert(0);
        }
    }
    let sources: Vec<String> = src.keys().map(|s| s.to_string()).collect();
    let targets: Vec<String> = tgt.keys().map(|s| s.to_string()).collect();
    let sid: BTreeMap<&str, usize> = sources.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let tid: BTreeMap<&str, usize> = targets.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let null = sid[NULL_WORD];
    let pairs = corpus
        .iter()
        .map(|(s, t)| {
            let mut ss = vec![null];
            ss.extend(s.iter().map(|w| sid[w.as_str()]));
            (ss, t.iter().map(|w| tid[w.as_str()]).collect())
        })
        .collect();
    Interned { pairs, sources, targets }
}

type Counts = Vec<BTreeMap<usize, Real>>;

/// Expected counts for one chunk of pairs and its log-likelihood share.
fn expect(chunk: &[(Vec<usize>, Vec<usize>)], t: &Counts, n_src: usize) -> (Counts, Real) {
    let mut counts: Counts = vec![BTreeMap::new(); n_src];
    let mut ll = 0.0;
    for (src, tgt) in chunk {
        for &f in tgt {
            let denom: Real = src.iter().map(|&e| t[e][&f]).sum();
            ll += (denom / src.len() as Real).ln();
            for &e in src {
                *counts[e].entry(f).or_insert(0.0) += t[e][&f] / denom;
            }
        }
    }
    (counts, ll)
}

fn e_step(pairs: &[(Vec<usize>, Vec<usize>)], t: &Counts) -> (Counts, Real) {
    let parts: Vec<(Counts, Real)> = pairs.par_chunks(CHUNK).map(|c| expect(c, t, t.len())).collect();
    let mut total: Counts = vec![BTreeMap::new(); t.len()];
    let mut ll = 0.0;
    for (counts, part_ll) in parts {
        ll += part_ll;
        for (row, acc) in counts.into_iter().zip(total.iter_mut()) {
            for (f, c) in row {
                *acc.entry(f).or_insert(0.0) += c;
            }
        }
    }
    (total, ll)
}

/// Expectation-maximization for the lexical model with a null source word,
/// starting from uniform probabilities. Deterministic for a given corpus.
pub fn train_ibm1_tokens(corpus: &[(Vec<String>, Vec<String>)], iterations: usize) -> Result<Ibm1Result, AlignError> {
    if corpus.is_empty() || corpus.iter().all(|(_, t)| t.is_empty()) {
        return Err(AlignError::EmptyCorpus);
    }
    if iterations == 0 {
        return Err(AlignError::ZeroIterations);
    }
    let data = intern(corpus);
    let uniform = 1.0 / data.targets.len() as Real;
    let mut t: Counts = vec![BTreeMap::new(); data.sources.len()];
    for (src, tgt) in &data.pairs {
        for &e in src {
            for &f in tgt {
                t[e].insert(f, uniform);
            }
        }
    }
    let mut lls = Vec::with_capacity(iterations + 1);
    for it in 0..=iterations {
        let (counts, ll) = e_step(&data.pairs, &t);
        lls.push(ll);
        if it == iterations {
            break;
        }
        for (row, c) in t.iter_mut().zip(counts) {
            let z: Real = c.values().sum();
            if z > 0.0 {
                *row = c.into_iter().map(|(f, v)| (f, v / z)).collect();
            }
        }
    }
    let rows = t
        .into_iter()
        .enumerate()
        .filter(|(_, row)| !row.is_empty())
        .map(|(e, row)| {
            let named = row.into_iter().map(|(f, p)| (data.targets[f].clone(), p)).collect();
            (data.sources[e].clone(), named)
        })
        .collect();
    Ok(Ibm1Result { table: TranslationTable { rows }, log_likelihood: lls })
}

/// Lowercases and tokenizes each pair, then trains.
pub fn train_ibm1(corpus: &[ParallelPair], iterations: usize) -> Result<Ibm1Result, AlignError> {
    let tokens: Vec<(Vec<String>, Vec<String>)> =
        corpus.iter().map(|p| (tokenize(&p.source), tokenize(&p.target))).collect();
    train_ibm1_tokens(&tokens, iterations)
}
