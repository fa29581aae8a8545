//! Pairwise human-preference annotations and the bootstrap distribution of
//! tie fractions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::math;
use crate::seed::rng_for;

pub const DEFAULT_SETS: usize = 50_000;
pub const DEFAULT_SET_SIZE: usize = 200;
/// Histogram bins of width 0.01 covering `[0, 1]`; the last bin holds 1.0.
pub const BINS: usize = 101;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Choice {
    A,
    B,
    Tie,
}

impl Choice {
    pub fn parse(s: &str) -> Result<Choice, HumanEvalError> {
        match s {
            "A" => Ok(Choice::A),
            "B" => Ok(Choice::B),
            "Tie" => Ok(Choice::Tie),
            other => Err(HumanEvalError::BadChoice(other.into())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Choice::A => "A",
            Choice::B => "B",
            Choice::Tie => "Tie",
        }
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub pair_id: String,
    /// 1, 2 or 3.
    pub pass_id: u8,
    pub choice: Choice,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum HumanEvalError {
    #[error("duplicate annotation for pair {pair_id} in pass {pass_id}")]
    DuplicateRecord { pair_id: String, pass_id: u8 },
    #[error("choice must be A, B or Tie, got {0:?}")]
    BadChoice(String),
    #[error("pass id must be 1, 2 or 3, got {0}")]
    BadPass(String),
    #[error("pass {pass_id} has {have} records, {need} needed")]
    InsufficientRecords { pass_id: u8, have: usize, need: usize },
    #[error("empty distribution")]
    Empty,
}

pub fn parse_pass(s: &str) -> Result<u8, HumanEvalError> {
    match s.trim().parse::<u8>() {
        Ok(p @ 1..=3) => Ok(p),
        _ => Err(HumanEvalError::BadPass(s.into())),
    }
}

/// Checks `(pair_id, pass_id)` uniqueness and groups choices by pass, in
/// input order.
pub fn group_by_pass(records: &[AnnotationRecord]) -> Result<BTreeMap<u8, Vec<Choice>>, HumanEvalError> {
    let mut seen = BTreeSet::new();
    let mut passes: BTreeMap<u8, Vec<Choice>> = BTreeMap::new();
    for r in records {
        if !(1..=3).contains(&r.pass_id) {
            return Err(HumanEvalError::BadPass(format!("{}", r.pass_id)));
        }
        if !seen.insert((r.pair_id.as_str(), r.pass_id)) {
            return Err(HumanEvalError::DuplicateRecord {
                pair_id: r.pair_id.clone(),
                pass_id: r.pass_id,
            });
        }
        passes.entry(r.pass_id).or_default().push(r.choice);
    }
    Ok(passes)
}

/// Bootstrap tie fractions of one pass.
#[derive(Clone, Debug, PartialEq)]
pub struct TieDistribution {
    pub pass_id: u8,
    /// Empirical tie rate of the pass itself.
    pub tie_rate: f64,
    pub fractions: Vec<f64>,
}

impl TieDistribution {
    pub fn histogram(&self) -> Vec<u64> {
        histogram(&self.fractions)
    }
}

/// Tie fraction of `sets` samples of `set_size` records drawn uniformly with
/// replacement from one pass.
pub fn bootstrap_pass(choices: &[Choice], sets: usize, set_size: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = choices.len();
    (0..sets)
        .map(|_| {
            let ties = (0..set_size).filter(|_| choices[rng.gen_range(0..n)] == Choice::Tie).count();
            ties as f64 / set_size as f64
        })
        .collect()
}

/// Bootstrap of one pass from its own sub-stream of `seed`, so passes are
/// independent of each other's size and can run in any order.
pub fn bootstrap_one(pass_id: u8, choices: &[Choice], sets: usize, set_size: usize, seed: u64) -> Result<TieDistribution, HumanEvalError> {
    if choices.len() < set_size || set_size == 0 {
        return Err(HumanEvalError::InsufficientRecords {
            pass_id,
            have: choices.len(),
            need: set_size.max(1),
        });
    }
    let mut rng = rng_for(seed, &format!("bootstrap-pass-{pass_id}"));
    let ties = choices.iter().filter(|c| **c == Choice::Tie).count();
    Ok(TieDistribution {
        pass_id,
        tie_rate: ties as f64 / choices.len() as f64,
        fractions: bootstrap_pass(choices, sets, set_size, &mut rng),
    })
}

/// One distribution per pass, ascending pass id.
pub fn bootstrap_tie_fraction(
    records: &[AnnotationRecord],
    sets: usize,
    set_size: usize,
    seed: u64,
) -> Result<Vec<TieDistribution>, HumanEvalError> {
    group_by_pass(records)?
        .into_iter()
        .map(|(pass_id, choices)| bootstrap_one(pass_id, &choices, sets, set_size, seed))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TieSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Share of samples with tie fraction ≤ 0.5.
    pub mass_at_most_half: f64,
    pub histogram: Vec<u64>,
}

fn bin_of(f: f64) -> usize {
    // Fractions k/200 sit exactly on bin edges; the epsilon keeps them there.
    (math::floor(f * 100.0 + 1e-9).max(0.0) as usize).min(BINS - 1)
}

pub fn histogram(fractions: &[f64]) -> Vec<u64> {
    let mut h = vec![0u64; BINS];
    for &f in fractions {
        h[bin_of(f)] += 1;
    }
    h
}

pub fn summarize(fractions: &[f64]) -> Result<TieSummary, HumanEvalError> {
    if fractions.is_empty() {
        return Err(HumanEvalError::Empty);
    }
    let n = fractions.len() as f64;
    let mean = fractions.iter().sum::<f64>() / n;
    let var = fractions.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / n;
    Ok(TieSummary {
        mean,
        std: math::sqrt(var),
        mass_at_most_half: fractions.iter().filter(|f| **f <= 0.5).count() as f64 / n,
        histogram: histogram(fractions),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(pair: &str, pass: u8, choice: Choice) -> AnnotationRecord {
        AnnotationRecord {
            pair_id: pair.into(),
            pass_id: pass,
            choice,
        }
    }

    #[test]
    fn duplicates_rejected() {
        let rs = [rec("p1", 1, Choice::A), rec("p1", 2, Choice::B), rec("p1", 1, Choice::Tie)];
        assert!(matches!(group_by_pass(&rs), Err(HumanEvalError::DuplicateRecord { .. })));
        assert_eq!(group_by_pass(&rs[..2]).unwrap().len(), 2);
    }

    #[test]
    fn bad_choice_and_pass() {
        assert!(matches!(Choice::parse("maybe"), Err(HumanEvalError::BadChoice(_))));
        assert!(parse_pass("4").is_err());
        assert_eq!(parse_pass("3").unwrap(), 3);
    }

    #[test]
    fn all_ties_is_point_mass_at_one() {
        let rs: Vec<_> = (0..10).map(|i| rec(&format!("p{i}"), 1, Choice::Tie)).collect();
        let d = bootstrap_tie_fraction(&rs, 100, 5, 1).unwrap();
        let s = summarize(&d[0].fractions).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.std, 0.0);
        assert_eq!(s.mass_at_most_half, 0.0);
        assert_eq!(s.histogram[100], 100);
    }

    #[test]
    fn too_few_records() {
        let rs = [rec("p", 2, Choice::A)];
        assert!(matches!(
            bootstrap_tie_fraction(&rs, 10, 5, 0),
            Err(HumanEvalError::InsufficientRecords { pass_id: 2, .. })
        ));
    }

    #[test]
    fn two_point_summary() {
        let s = summarize(&[0.3, 0.4]).unwrap();
        assert!((s.mean - 0.35).abs() < 1e-12);
        assert!((s.std - 0.05).abs() < 1e-12);
        assert_eq!(s.histogram[30] + s.histogram[40], 2);
    }
}
