//! Corpus-level text metrics used to pick checkpoints: BLEU-2, ROUGE-1 F1
//! and exact-match METEOR. Inputs are whitespace-tokenized and lowercased.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("no candidates to score")]
    EmptyCandidateSet,
    #[error("{candidates} candidates but {references} references")]
    LengthMismatch { candidates: usize, references: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SelectionMetric {
    Bleu2,
    RougeF1,
    Meteor,
}

impl SelectionMetric {
    pub const ALL: [SelectionMetric; 3] = [SelectionMetric::Bleu2, SelectionMetric::RougeF1, SelectionMetric::Meteor];

    pub fn name(self) -> &'static str {
        match self {
            SelectionMetric::Bleu2 => "bleu2",
            SelectionMetric::RougeF1 => "rouge_f1",
            SelectionMetric::Meteor => "meteor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        SelectionMetric::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn score<C: AsRef<str>, R: AsRef<str>>(self, candidates: &[C], references: &[R]) -> Result<MetricScore, MetricError> {
        match self {
            SelectionMetric::Bleu2 => bleu2(candidates, references),
            SelectionMetric::RougeF1 => rouge_f1(candidates, references),
            SelectionMetric::Meteor => meteor_exact(candidates, references),
        }
    }
}

impl fmt::Display for SelectionMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Counts behind a score. For BLEU the value is a function of these counts;
/// ROUGE and METEOR are per-pair averages so the counts are informational.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricCounts {
    pub matched: [u64; 2],
    pub total: [u64; 2],
    pub candidate_len: u64,
    pub reference_len: u64,
    pub pairs: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricScore {
    pub metric: SelectionMetric,
    /// In `[0, 1]`.
    pub value: f64,
    pub counts: MetricCounts,
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(|w| w.to_lowercase()).collect()
}

fn pairs<C: AsRef<str>, R: AsRef<str>>(
    candidates: &[C],
    references: &[R],
) -> Result<Vec<(Vec<String>, Vec<String>)>, MetricError> {
    if candidates.is_empty() {
        return Err(MetricError::EmptyCandidateSet);
    }
    if candidates.len() != references.len() {
        return Err(MetricError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    Ok(candidates
        .iter()
        .zip(references)
        .map(|(c, r)| (words(c.as_ref()), words(r.as_ref())))
        .collect())
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], u64> {
    let mut m = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

fn clipped_matches(cand: &[String], reference: &[String], n: usize) -> (u64, u64) {
    let c = ngram_counts(cand, n);
    let r = ngram_counts(reference, n);
    let matched = c.iter().map(|(g, k)| (*k).min(r.get(g).copied().unwrap_or(0))).sum();
    (matched, cand.len().saturating_sub(n - 1) as u64)
}

impl MetricCounts {
    /// BLEU-2 from pooled counts: brevity penalty times the geometric mean
    /// of the clipped unigram and bigram precisions.
    pub fn bleu2_value(&self) -> f64 {
        if self.matched[0] == 0 || self.matched[1] == 0 {
            return 0.0;
        }
        let p1 = self.matched[0] as f64 / self.total[0] as f64;
        let p2 = self.matched[1] as f64 / self.total[1] as f64;
        let (c, r) = (self.candidate_len as f64, self.reference_len as f64);
        let bp = if c > r { 1.0 } else { math::exp(1.0 - r / c) };
        bp * math::exp(0.5 * math::ln(p1) + 0.5 * math::ln(p2))
    }
}

pub fn bleu2<C: AsRef<str>, R: AsRef<str>>(candidates: &[C], references: &[R]) -> Result<MetricScore, MetricError> {
    let mut counts = MetricCounts::default();
    for (cand, reference) in pairs(candidates, references)? {
        for n in 1..=2 {
            let (m, t) = clipped_matches(&cand, &reference, n);
            counts.matched[n - 1] += m;
            counts.total[n - 1] += t;
        }
        counts.candidate_len += cand.len() as u64;
        counts.reference_len += reference.len() as u64;
        counts.pairs += 1;
    }
    Ok(MetricScore {
        metric: SelectionMetric::Bleu2,
        value: counts.bleu2_value(),
        counts,
    })
}

pub fn rouge_f1<C: AsRef<str>, R: AsRef<str>>(candidates: &[C], references: &[R]) -> Result<MetricScore, MetricError> {
    let mut counts = MetricCounts::default();
    let mut sum = 0.0;
    for (cand, reference) in pairs(candidates, references)? {
        let (m, _) = clipped_matches(&cand, &reference, 1);
        counts.matched[0] += m;
        counts.candidate_len += cand.len() as u64;
        counts.reference_len += reference.len() as u64;
        counts.pairs += 1;
        if m > 0 {
            let p = m as f64 / cand.len() as f64;
            let r = m as f64 / reference.len() as f64;
            sum += 2.0 * p * r / (p + r);
        }
    }
    Ok(MetricScore {
        metric: SelectionMetric::RougeF1,
        value: sum / counts.pairs as f64,
        counts,
    })
}

// Searches alignments beyond this many nodes fall back to the best found.
const METEOR_NODE_BUDGET: usize = 200_000;

struct AlignSearch {
    candidates: Vec<Vec<usize>>,
    n_cand: usize,
    target: usize,
    best_chunks: usize,
    used: Vec<bool>,
    nodes: usize,
}

impl AlignSearch {
    // Positions are assigned left to right over the candidate; `last` is the
    // reference index matched by the previous matched candidate token.
    fn dfs(&mut self, pos: usize, matched: usize, chunks: usize, last: Option<(usize, usize)>) {
        self.nodes += 1;
        if chunks >= self.best_chunks || self.nodes > METEOR_NODE_BUDGET {
            return;
        }
        let remaining = self.n_cand - pos;
        if matched + remaining < self.target {
            return;
        }
        if matched == self.target {
            self.best_chunks = chunks;
            return;
        }
        let options = self.candidates[pos].clone();
        for j in options {
            if self.used[j] {
                continue;
            }
            let contiguous = matches!(last, Some((lp, lj)) if lp + 1 == pos && lj + 1 == j);
            self.used[j] = true;
            self.dfs(pos + 1, matched + 1, chunks + usize::from(!contiguous), Some((pos, j)));
            self.used[j] = false;
        }
        self.dfs(pos + 1, matched, chunks, last);
    }
}

// Maximum bipartite matching size between equal tokens (Kuhn's algorithm).
fn max_matching(options: &[Vec<usize>], n_ref: usize) -> usize {
    fn augment(u: usize, options: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &j in &options[u] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|o| augment(o, options, seen, owner)) {
                owner[j] = Some(u);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; n_ref];
    (0..options.len())
        .filter(|&u| augment(u, options, &mut vec![false; n_ref], &mut owner))
        .count()
}

/// `(matches, chunks)` of an exact-match alignment with the most matches
/// and, among those, the fewest chunks.
pub fn meteor_alignment(cand: &[String], reference: &[String]) -> (usize, usize) {
    let options: Vec<Vec<usize>> = cand
        .iter()
        .map(|w| reference.iter().enumerate().filter(|(_, r)| *r == w).map(|(j, _)| j).collect())
        .collect();
    let target = max_matching(&options, reference.len());
    if target == 0 {
        return (0, 0);
    }
    let mut search = AlignSearch {
        candidates: options,
        n_cand: cand.len(),
        target,
        best_chunks: usize::MAX,
        used: vec![false; reference.len()],
        nodes: 0,
    };
    search.dfs(0, 0, 0, None);
    let chunks = if search.best_chunks == usize::MAX { target } else { search.best_chunks };
    (target, chunks)
}

fn meteor_pair(cand: &[String], reference: &[String]) -> (f64, usize) {
    let (m, chunks) = meteor_alignment(cand, reference);
    if m == 0 {
        return (0.0, 0);
    }
    let p = m as f64 / cand.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let frag = chunks as f64 / m as f64;
    (f_mean * (1.0 - 0.5 * frag * frag * frag), m)
}

pub fn meteor_exact<C: AsRef<str>, R: AsRef<str>>(
    candidates: &[C],
    references: &[R],
) -> Result<MetricScore, MetricError> {
    let mut counts = MetricCounts::default();
    let mut sum = 0.0;
    for (cand, reference) in pairs(candidates, references)? {
        let (s, m) = meteor_pair(&cand, &reference);
        sum += s;
        counts.matched[0] += m as u64;
        counts.candidate_len += cand.len() as u64;
        counts.reference_len += reference.len() as u64;
        counts.pairs += 1;
    }
    Ok(MetricScore {
        metric: SelectionMetric::Meteor,
        value: sum / counts.pairs as f64,
        counts,
    })
}
