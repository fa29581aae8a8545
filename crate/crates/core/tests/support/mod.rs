//! Helpers shared by integration tests: a small corpus for gradient checks
//! and brute-force oracles that re-derive probe labels from surface text.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use dprobe_core::corpus::{make_examples, synthesize_corpus, SynthConfig, CONTEXT_WINDOW};
use dprobe_core::models::{train, CheckpointTag, ModelError, TrainOptions};
use dprobe_core::analysis::pca2;
use dprobe_core::probes::{build_labels, LabelError, LabelOptions, RawLabel};
use dprobe_core::tensor::{directional_check, TensorError};
use dprobe_core::textmetrics::SelectionMetric;
use dprobe_core::{Corpus, Dialogue, Model, ModelConfig, ModelKind, ProbeTask, Split, Style, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_STEP: f64 = 1e-5;

/// Twelve short dialogues over a 2-topic schema; vocabulary under 50.
pub fn gradcheck_corpus() -> Corpus {
    let cfg = SynthConfig {
        n_dialogues: 12,
        topics: 2,
        slots_per_topic: 2,
        values_per_slot: 2,
        max_turns: 4,
        ..Default::default()
    };
    synthesize_corpus(7, &cfg).unwrap().corpus
}

pub fn tensor_only(e: ModelError) -> TensorError {
    match e {
        ModelError::Tensor(t) => t,
        other => panic!("model error during gradient check: {other}"),
    }
}

/// Worst relative error over `draws` random (initialization, example,
/// direction) triples for the tiny configuration of `kind`.
pub fn directional_worst(kind: ModelKind, draws: u64) -> f64 {
    let corpus = gradcheck_corpus();
    let examples = make_examples(&corpus, Split::Train);
    let config = ModelConfig::tiny(kind, corpus.vocab().len());
    let mut worst: f64 = 0.0;
    for draw in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let model = Model::new(config.clone(), rng.gen()).unwrap();
        let ex = &examples[rng.gen_range(0..examples.len())];
        let direction: Vec<Tensor> = model
            .params()
            .tensors()
            .iter()
            .map(|t| {
                let data = (0..t.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                Tensor::with_shape(t.shape(), data).unwrap()
            })
            .collect();
        let err = directional_check(
            |tape, store| model.loss_with(tape, store, ex).map_err(tensor_only),
            model.params(),
            &direction,
            GRAD_STEP,
        )
        .unwrap();
        worst = worst.max(err);
    }
    worst
}

pub struct Overfit {
    pub epochs: usize,
    /// Mean per-token loss of the last epoch, accumulated while training.
    pub running: f64,
    /// Mean per-token loss of the final parameters over the Train split.
    pub settled: f64,
}

/// Trains the desk configuration of `kind` on 16 short dialogues until the
/// epoch loss reaches 0.1 or 200 epochs pass.
pub fn overfit(kind: ModelKind) -> Overfit {
    let cfg = SynthConfig {
        n_dialogues: 16,
        max_turns: 4,
        ..Default::default()
    };
    let corpus = synthesize_corpus(1, &cfg).unwrap().corpus;
    let mut config = ModelConfig::desk(kind, corpus.vocab().len());
    config.epochs = 200;
    let options = TrainOptions {
        target_loss: Some(0.1),
        ..Default::default()
    };
    let record = train(&corpus, &config, 1, &options).unwrap();
    let model = record.checkpoint(CheckpointTag::LastEpoch).unwrap().model().unwrap();
    let (mut loss, mut tokens) = (0.0, 0);
    for ex in make_examples(&corpus, Split::Train) {
        let (l, n) = model.example_loss(&ex).unwrap();
        loss += l;
        tokens += n;
    }
    Overfit {
        epochs: record.train_loss.len(),
        running: *record.train_loss.last().unwrap(),
        settled: loss / tokens as f64,
    }
}

/// Annotations recovered from a templated utterance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Parsed {
    pub topic: Option<String>,
    pub pairs: Vec<(String, String)>,
    /// System turns only.
    pub act: Option<String>,
}

fn pairs_after(words: &[String], marker: &str) -> Vec<(String, String)> {
    let Some(start) = words.iter().position(|w| w == marker) else {
        return Vec::new();
    };
    words[start + 1..]
        .iter()
        .filter(|w| *w != "and" && *w != ".")
        .collect::<Vec<_>>()
        .chunks(2)
        .map(|c| (c[0].clone(), c[1].clone()))
        .collect()
}

/// "<opener> <topic> [with <slot> <value> (and <slot> <value>)*] ." or the
/// closing "thank you , that is all .".
pub fn parse_user(words: &[String]) -> Parsed {
    if words[0] == "thank" {
        return Parsed::default();
    }
    let end = words.iter().position(|w| w == "with").unwrap_or(words.len() - 1);
    Parsed {
        topic: Some(words[end - 1].clone()),
        pairs: pairs_after(words, "with"),
        act: None,
    }
}

/// "what would you like for the <topic> ?", "the <topic> i found has ..."
/// or the closing "you are welcome , goodbye .".
pub fn parse_system(words: &[String]) -> Parsed {
    match words[0].as_str() {
        "what" => Parsed {
            topic: Some(words[6].clone()),
            pairs: Vec::new(),
            act: Some(format!("{}-request", words[6])),
        },
        "the" => Parsed {
            topic: Some(words[1].clone()),
            pairs: pairs_after(words, "has"),
            act: Some(format!("{}-inform", words[1])),
        },
        _ => Parsed::default(),
    }
}

fn parse_turn(d: &Dialogue, i: usize) -> Parsed {
    if i.is_multiple_of(2) {
        parse_user(&d.turns[i].words)
    } else {
        parse_system(&d.turns[i].words)
    }
}

fn cap(n: usize, classes: usize) -> RawLabel {
    RawLabel::Count(n.min(classes - 1))
}

/// Goal-oriented label of `task` for the context before System turn `i`,
/// computed from utterance text alone. `None` means the example is skipped.
pub fn goal_label(task: ProbeTask, d: &Dialogue, i: usize) -> Option<RawLabel> {
    let parsed: Vec<Parsed> = (0..d.turns.len()).map(|k| parse_turn(d, k)).collect();
    let context = &parsed[..i];
    let users: Vec<&Parsed> = context.iter().step_by(2).collect();
    let recent = *users.last().unwrap();
    let topics_in = |ps: &[Parsed]| -> BTreeSet<String> { ps.iter().filter_map(|p| p.topic.clone()).collect() };
    let slots = |ps: &[&Parsed]| -> BTreeSet<String> { ps.iter().flat_map(|p| p.pairs.iter().map(|(s, _)| s.clone())).collect() };
    let values = |ps: &[&Parsed]| -> BTreeSet<String> { ps.iter().flat_map(|p| p.pairs.iter().map(|(_, v)| v.clone())).collect() };
    let info_count: usize = users.iter().map(|p| p.pairs.len()).sum();
    let target = &parsed[i];
    Some(match task {
        ProbeTask::UtteranceLoc => RawLabel::Count((5 * i / d.turns.len()).min(4)),
        ProbeTask::IsMultiTopic => RawLabel::Count(usize::from(topics_in(context).len() > 1)),
        ProbeTask::NumAllTopics => cap(topics_in(&parsed).len(), 6),
        ProbeTask::AllTopics => RawLabel::Names(topics_in(context)),
        ProbeTask::RecentTopic => RawLabel::Name(recent.topic.clone()?),
        ProbeTask::RecentSlots => RawLabel::Names(slots(&[recent])),
        ProbeTask::RecentValues => RawLabel::Names(values(&[recent])),
        ProbeTask::NumRecentInfo => cap(recent.pairs.len(), 10),
        ProbeTask::AllSlots => RawLabel::Names(slots(&users)),
        ProbeTask::AllValues => RawLabel::Names(values(&users)),
        ProbeTask::NumAllInfo => cap(info_count, 20),
        ProbeTask::RepeatInfo | ProbeTask::NumRepeatInfo => {
            let earlier = slots(&users[..users.len() - 1]);
            let repeated: BTreeSet<String> = slots(&[recent]).intersection(&earlier).cloned().collect();
            if task == ProbeTask::RepeatInfo {
                RawLabel::Names(repeated)
            } else {
                cap(repeated.len(), 7)
            }
        }
        ProbeTask::ActionSelect => RawLabel::Name(target.act.clone()?),
        ProbeTask::EntitySlots => {
            target.act.as_ref()?;
            RawLabel::Names(target.pairs.iter().map(|(s, _)| s.clone()).collect())
        }
        ProbeTask::EntityValues => {
            target.act.as_ref()?;
            RawLabel::Names(target.pairs.iter().map(|(_, v)| v.clone()).collect())
        }
        ProbeTask::WordCont | ProbeTask::PersonalInfo => unreachable!("chit-chat task"),
    })
}

/// Words with Train frequency in `[lo, hi]`, most frequent first (ties by
/// spelling), at most `limit` of them.
pub fn band_words(corpus: &Corpus, lo: u64, hi: u64, limit: usize) -> BTreeSet<String> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for d in corpus.dialogues().iter().filter(|d| d.split == Split::Train) {
        for t in &d.turns {
            for w in &t.words {
                *counts.entry(w.as_str()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|(w, c)| *c >= lo && *c <= hi && w.chars().any(char::is_alphanumeric))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().take(limit).map(|(w, _)| w.to_string()).collect()
}

/// Chit-chat label from the words of the dialogue; `band` as from
/// [`band_words`].
pub fn chitchat_label(task: ProbeTask, d: &Dialogue, i: usize, band: &BTreeSet<String>) -> Option<RawLabel> {
    match task {
        ProbeTask::UtteranceLoc => Some(RawLabel::Count((5 * i / d.turns.len()).min(4))),
        ProbeTask::PersonalInfo => Some(RawLabel::Names(d.persona.clone().unwrap())),
        ProbeTask::WordCont => {
            let words: Vec<&String> = d.turns[..i].iter().flat_map(|t| &t.words).collect();
            let window = &words[words.len().saturating_sub(CONTEXT_WINDOW)..];
            window.iter().rev().find(|w| band.contains(w.as_str())).map(|w| RawLabel::Name((*w).clone()))
        }
        _ => unreachable!("goal-oriented task"),
    }
}

/// Standard normal draw (Box-Muller).
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// Gaussian clusters with well separated means: `(x, class)` rows.
pub fn clustered(rng: &mut ChaCha8Rng, n: usize, classes: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let centers: Vec<Vec<f64>> = (0..classes).map(|_| (0..dim).map(|_| 6.0 * normal(rng)).collect()).collect();
    let ys: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    let xs = ys.iter().map(|&c| centers[c].iter().map(|m| m + normal(rng)).collect()).collect();
    (xs, ys)
}

/// Labels drawn independently of the embeddings with class probabilities
/// `weights`.
pub fn unrelated(rng: &mut ChaCha8Rng, n: usize, dim: usize, weights: &[f64]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let total: f64 = weights.iter().sum();
    let xs = (0..n).map(|_| (0..dim).map(|_| normal(rng)).collect()).collect();
    let ys = (0..n)
        .map(|_| {
            let mut r = rng.gen::<f64>() * total;
            weights
                .iter()
                .position(|w| {
                    r -= w;
                    r < 0.0
                })
                .unwrap_or(weights.len() - 1)
        })
        .collect();
    (xs, ys)
}

/// Pass/fail tie annotations with the given tie rate, three passes.
pub fn tie_annotations(records: usize, tie_rate: f64, seed: u64) -> Vec<dprobe_core::humaneval::AnnotationRecord> {
    use dprobe_core::humaneval::{AnnotationRecord, Choice};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ties = (records as f64 * tie_rate).round() as usize;
    let mut choices: Vec<Choice> = (0..records)
        .map(|i| if i < ties { Choice::Tie } else if i % 2 == 0 { Choice::A } else { Choice::B })
        .collect();
    use rand::seq::SliceRandom;
    choices.shuffle(&mut rng);
    choices
        .into_iter()
        .enumerate()
        .map(|(i, choice)| AnnotationRecord {
            pair_id: format!("pair{i:05}"),
            pass_id: 1,
            choice,
        })
        .collect()
}

/// Eigenpairs of the sample covariance of `points` from a dense symmetric
/// eigensolver, largest eigenvalue first.
pub fn dense_pca(points: &[Vec<f64>]) -> Vec<(f64, Vec<f64>)> {
    let n = points.len();
    let d = points[0].len();
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
    let cov = nalgebra::DMatrix::from_fn(d, d, |a, b| {
        points.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).sum::<f64>() / (n - 1) as f64
    });
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..d)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).iter().copied().collect()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// Points with a clear spectral gap between the top two directions and the
/// rest, so the leading eigenvectors are well defined.
pub fn anisotropic(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let scales: Vec<f64> = (0..dim).map(|j| match j {
        0 => 5.0,
        1 => 3.0,
        _ => 1.0 / (j as f64),
    }).collect();
    // A random rotation hides the axis alignment.
    let q = nalgebra::DMatrix::from_fn(dim, dim, |_, _| normal(rng)).qr().q();
    (0..n)
        .map(|_| {
            let z = nalgebra::DVector::from_fn(dim, |j, _| scales[j] * normal(rng));
            let x = &q * z;
            x.iter().map(|v| v + 2.0).collect()
        })
        .collect()
}

/// Number of (task, context) pairs checked against [`goal_label`], with a
/// description of each disagreement.
pub fn goal_mismatches(corpus: &Corpus) -> (usize, Vec<String>) {
    let opts = LabelOptions::default();
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for d in corpus.dialogues() {
        for i in d.system_turns() {
            for task in ProbeTask::for_style(Style::GoalOriented) {
                let ours = match build_labels(task, d, i, Style::GoalOriented, &opts) {
                    Ok(l) => Some(l),
                    Err(LabelError::Skip) => None,
                    Err(e) => {
                        mismatches.push(format!("{task} {} turn {i}: {e}", d.id));
                        continue;
                    }
                };
                let oracle = goal_label(task, d, i);
                if ours != oracle {
                    mismatches.push(format!("{task} {} turn {i}: {ours:?} vs {oracle:?}", d.id));
                }
                checked += 1;
            }
        }
    }
    (checked, mismatches)
}

/// `(name, computed, hand-counted)` for single-pair scores.
pub fn hand_examples() -> Vec<(&'static str, f64, f64)> {
    let one = |m: SelectionMetric, c: &str, r: &str| m.score(&[c], &[r]).unwrap().value;
    vec![
        ("bleu2 identical", one(SelectionMetric::Bleu2, "the cat sat on the mat", "the cat sat on the mat"), 1.0),
        ("bleu2 clipped repeats", one(SelectionMetric::Bleu2, "the the the", "the cat"), 0.0),
        ("bleu2 brevity penalty", one(SelectionMetric::Bleu2, "a b c", "a b c d e f"), (-1.0f64).exp()),
        ("rouge identical", one(SelectionMetric::RougeF1, "a b c", "a b c"), 1.0),
        ("rouge partial overlap", one(SelectionMetric::RougeF1, "a b c", "b c d"), 2.0 / 3.0),
        ("rouge disjoint", one(SelectionMetric::RougeF1, "a b", "c d"), 0.0),
        ("meteor identical six", one(SelectionMetric::Meteor, "a b c d e f", "a b c d e f"), 1.0 - 0.5 / 216.0),
        ("meteor no matches", one(SelectionMetric::Meteor, "a b", "c d"), 0.0),
        ("meteor reversed pair", one(SelectionMetric::Meteor, "a b", "b a"), 0.5),
    ]
}

/// Largest deviation of eigenvalues and (sign-aligned) axes from the dense
/// oracle, and the worst orthonormality defect of the axes.
pub fn pca_errors(points: &[Vec<f64>]) -> (f64, f64) {
    let p = pca2(points).unwrap();
    let oracle = dense_pca(points);
    let mut agree: f64 = 0.0;
    for k in 0..2 {
        let (lambda, v) = &oracle[k];
        let sign = if v.iter().zip(&p.axes[k]).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        agree = agree.max((p.eigenvalues[k] - lambda).abs() / lambda.max(1.0));
        for (a, b) in p.axes[k].iter().zip(v) {
            agree = agree.max((a - sign * b).abs());
        }
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let ortho = [
        (dot(&p.axes[0], &p.axes[0]) - 1.0).abs(),
        (dot(&p.axes[1], &p.axes[1]) - 1.0).abs(),
        dot(&p.axes[0], &p.axes[1]).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    (agree, ortho)
}
