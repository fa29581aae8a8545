//! Probe classifiers over context embeddings and micro-F1 scoring.

mod lbfgs;
mod linear;
mod mlp;

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

pub use lbfgs::{minimize, LbfgsReport};
pub use linear::{fit_logistic, fit_softmax, logistic_objective, softmax_objective, Logistic, Softmax, GRAD_TOL, MAX_ITER};
pub use mlp::Mlp;

use crate::corpus::{Corpus, Split};
use crate::models::{Checkpoint, CheckpointTag, ModelKind};
use crate::probes::{
    embed_split, probe_dataset_from_embeddings, Label, LabelKind, LabelOptions, ProbeDataset, ProbeError, ProbeTask,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProbeKind {
    Linear,
    Mlp,
}

impl ProbeKind {
    pub fn name(self) -> &'static str {
        match self {
            ProbeKind::Linear => "linear",
            ProbeKind::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Option<ProbeKind> {
        match s {
            "linear" => Some(ProbeKind::Linear),
            "mlp" => Some(ProbeKind::Mlp),
            _ => None,
        }
    }
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One (model, seed, checkpoint, task) score.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub model: ModelKind,
    pub seed: u64,
    pub checkpoint: CheckpointTag,
    pub epoch: usize,
    pub task: ProbeTask,
    /// Micro-F1 in `[0, 1]`.
    pub f1: f64,
    pub n_train: usize,
    pub n_eval: usize,
}

fn as_set(l: &Label) -> BTreeSet<usize> {
    match l {
        Label::Class(c) => [*c].into_iter().collect(),
        Label::Set(s) => s.clone(),
    }
}

/// Micro-averaged F1 with TP/FP/FN pooled over every (example, label)
/// decision; single-label predictions count as one-hot sets. `0/0 = 0`.
pub fn micro_f1(predictions: &[Label], golds: &[Label]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (p, g) in predictions.iter().zip(golds) {
        let (p, g) = (as_set(p), as_set(g));
        let hit = p.intersection(&g).count();
        tp += hit;
        fp += p.len() - hit;
        fn_ += g.len() - hit;
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Per-dimension standardization with statistics from the probe-train split.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(xs: &[Vec<f64>]) -> Self {
        let d = xs.first().map_or(0, Vec::len);
        let n = xs.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for x in xs {
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for x in xs {
            var.iter_mut().zip(x).zip(&mean).for_each(|((s, v), m)| *s += (v - m) * (v - m) / n);
        }
        // Constant dimensions are centred but not scaled.
        let scale = var.iter().map(|v| if *v > 1e-24 { crate::math::sqrt(*v) } else { 1.0 }).collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Head {
    Constant(bool),
    Fitted(Logistic),
}

#[derive(Clone, Debug, PartialEq)]
enum Predictor {
    Constant(Label),
    Softmax(Softmax),
    OneVsRest(Vec<Head>),
    MlpSingle(Mlp),
    MlpMulti(Mlp),
}

/// A fitted probe, including its input standardization.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedProbe {
    standardizer: Standardizer,
    predictor: Predictor,
    /// Training data had a single class; the probe predicts it always.
    pub degenerate: bool,
    /// Optimizer reports of every linear fit (one per head for multi-label).
    pub reports: Vec<LbfgsReport>,
}

impl FittedProbe {
    pub fn predict(&self, x: &[f64]) -> Label {
        let z = self.standardizer.apply(x);
        match &self.predictor {
            Predictor::Constant(l) => l.clone(),
            Predictor::Softmax(s) => Label::Class(s.predict(&z)),
            Predictor::OneVsRest(heads) => Label::Set(
                heads
                    .iter()
                    .enumerate()
                    .filter(|(_, h)| match h {
                        Head::Constant(b) => *b,
                        Head::Fitted(l) => l.probability(&z) > 0.5,
                    })
                    .map(|(i, _)| i)
                    .collect(),
            ),
            Predictor::MlpSingle(m) => {
                let l = m.logits(&z);
                let mut best = 0;
                for (i, v) in l.iter().enumerate() {
                    if *v > l[best] {
                        best = i;
                    }
                }
                Label::Class(best)
            }
            Predictor::MlpMulti(m) => Label::Set(
                m.logits(&z)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| crate::math::sigmoid(**v) > 0.5)
                    .map(|(i, _)| i)
                    .collect(),
            ),
        }
    }

    pub fn predict_all(&self, xs: &[Vec<f64>]) -> Vec<Label> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("{embeddings} embeddings but {labels} labels")]
    LengthMismatch { embeddings: usize, labels: usize },
    #[error("no training examples")]
    Empty,
    #[error("label kind does not match the labels")]
    KindMismatch,
}

/// Fits a probe. Single-label kinds get a softmax classifier; multi-label
/// kinds get one logistic head per label with threshold 0.5. A single
/// training class yields a constant predictor flagged `degenerate`.
pub fn fit(kind: ProbeKind, embeddings: &[Vec<f64>], labels: &[Label], label_kind: LabelKind) -> Result<FittedProbe, FitError> {
    if embeddings.len() != labels.len() {
        return Err(FitError::LengthMismatch {
            embeddings: embeddings.len(),
            labels: labels.len(),
        });
    }
    if embeddings.is_empty() {
        return Err(FitError::Empty);
    }
    let standardizer = Standardizer::fit(embeddings);
    let xs: Vec<Vec<f64>> = embeddings.iter().map(|x| standardizer.apply(x)).collect();
    let k = label_kind.classes();
    let mut reports = Vec::new();
    let (predictor, degenerate) = if label_kind.is_multi_label() {
        let sets: Vec<&BTreeSet<usize>> = labels
            .iter()
            .map(|l| match l {
                Label::Set(s) => Ok(s),
                Label::Class(_) => Err(FitError::KindMismatch),
            })
            .collect::<Result<_, _>>()?;
        let distinct: BTreeSet<&BTreeSet<usize>> = sets.iter().copied().collect();
        if distinct.len() == 1 {
            (Predictor::Constant(Label::Set(sets[0].clone())), true)
        } else if kind == ProbeKind::Mlp {
            let mut targets = vec![0.0; xs.len() * k];
            for (row, s) in sets.iter().enumerate() {
                for &c in s.iter().filter(|&&c| c < k) {
                    targets[row * k + c] = 1.0;
                }
            }
            let m = Mlp::fit(&xs, mlp::Targets::Multi(&targets), k, MAX_ITER, 0);
            (Predictor::MlpMulti(m), false)
        } else {
            let heads = (0..k)
                .map(|c| {
                    let ys: Vec<bool> = sets.iter().map(|s| s.contains(&c)).collect();
                    let positives = ys.iter().filter(|y| **y).count();
                    if positives == 0 || positives == ys.len() {
                        Head::Constant(positives > 0)
                    } else {
                        let (l, r) = fit_logistic(&xs, &ys);
                        reports.push(r);
                        Head::Fitted(l)
                    }
                })
                .collect();
            (Predictor::OneVsRest(heads), false)
        }
    } else {
        let ys: Vec<usize> = labels
            .iter()
            .map(|l| match l {
                Label::Class(c) if *c < k => Ok(*c),
                _ => Err(FitError::KindMismatch),
            })
            .collect::<Result<_, _>>()?;
        let distinct: BTreeSet<usize> = ys.iter().copied().collect();
        if distinct.len() == 1 {
            (Predictor::Constant(Label::Class(ys[0])), true)
        } else if kind == ProbeKind::Mlp {
            (Predictor::MlpSingle(Mlp::fit(&xs, mlp::Targets::Classes(&ys), k, MAX_ITER, 0)), false)
        } else {
            let (s, r) = fit_softmax(&xs, &ys, k);
            reports.push(r);
            (Predictor::Softmax(s), false)
        }
    };
    Ok(FittedProbe {
        standardizer,
        predictor,
        degenerate,
        reports,
    })
}

/// Fits on `dataset.train`, scores micro-F1 on `dataset.eval`.
pub fn score_dataset(dataset: &ProbeDataset, kind: ProbeKind) -> Result<(f64, FittedProbe), FitError> {
    let probe = fit(kind, &dataset.train.embeddings, &dataset.train.labels(), dataset.space.kind())?;
    let preds = probe.predict_all(&dataset.eval.embeddings);
    Ok((micro_f1(&preds, &dataset.eval.labels()), probe))
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvaluateError {
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Every (checkpoint, task) pair: fit on Train, score on Valid. Results are
/// sorted by task, model, checkpoint and seed.
pub fn evaluate(
    corpus: &Corpus,
    checkpoints: &[Checkpoint],
    tasks: &[ProbeTask],
    kind: ProbeKind,
    options: &LabelOptions,
) -> Result<Vec<ProbeResult>, EvaluateError> {
    let mut results = Vec::with_capacity(checkpoints.len() * tasks.len());
    for ck in checkpoints {
        let train = embed_split(corpus, ck, Split::Train)?;
        let eval = embed_split(corpus, ck, Split::Valid)?;
        for &task in tasks {
            let ds = probe_dataset_from_embeddings(corpus, task, &train, &eval, options)?;
            let (f1, _) = score_dataset(&ds, kind)?;
            results.push(result_for(ck, task, f1, &ds));
        }
    }
    sort_results(&mut results);
    Ok(results)
}

pub fn result_for(ck: &Checkpoint, task: ProbeTask, f1: f64, ds: &ProbeDataset) -> ProbeResult {
    ProbeResult {
        model: ck.config.kind,
        seed: ck.seed,
        checkpoint: ck.tag,
        epoch: ck.epoch,
        task,
        f1,
        n_train: ds.train.len(),
        n_eval: ds.eval.len(),
    }
}

pub fn sort_results(results: &mut [ProbeResult]) {
    results.sort_by(|a, b| {
        (a.task, a.model, a.checkpoint, a.seed).cmp(&(b.task, b.model, b.checkpoint, b.seed))
    });
}
