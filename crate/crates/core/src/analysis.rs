//! Corpus statistics, PCA of context embeddings, task difficulty grading and
//! per-grade aggregation, and probe evolution over training.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::corpus::{Corpus, Speaker};
use crate::math;
use crate::models::{CheckpointTag, ModelKind};
use crate::probeclf::ProbeResult;
use crate::probes::ProbeTask;
use crate::seed::rng_for;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("degenerate data: {0}")]
    DegenerateData(&'static str),
    #[error("no untrained {model} result for {task}")]
    MissingResult { task: ProbeTask, model: ModelKind },
    #[error("task {0} has no difficulty grade")]
    Ungraded(ProbeTask),
    #[error("no {model} scores in grade {grade}")]
    EmptyGrade { model: ModelKind, grade: Grade },
}

/// Eight histograms describing how information is spread through a
/// goal-oriented corpus. Keys are the measured quantity, values are counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InfoDistribution {
    /// Dialogues whose goal includes the topic.
    pub topic_frequency: BTreeMap<String, u64>,
    pub topics_per_dialogue: BTreeMap<usize, u64>,
    /// Slot-value pairs per user turn.
    pub info_per_user_turn: BTreeMap<usize, u64>,
    /// Per context: pairs in the latest user turn whose slot was already
    /// mentioned earlier in the dialogue.
    pub repeats_per_context: BTreeMap<usize, u64>,
    /// `"single"` or `"multi"` topic dialogues.
    pub single_vs_multi: BTreeMap<String, u64>,
    /// Per context: fifth of the dialogue the response falls in, `0..5`.
    pub utterance_location: BTreeMap<usize, u64>,
    /// System response length in tokens.
    pub response_length: BTreeMap<usize, u64>,
    /// Slot-value pairs per dialogue.
    pub info_load: BTreeMap<usize, u64>,
}

/// Tallies every histogram; one context per System turn.
pub fn info_distribution(corpus: &Corpus) -> InfoDistribution {
    let mut d = InfoDistribution::default();
    for dialogue in corpus.dialogues() {
        let n_turns = dialogue.turns.len();
        let mut mentioned = alloc::collections::BTreeSet::new();
        let mut load = 0;
        for (i, turn) in dialogue.turns.iter().enumerate() {
            if turn.speaker == Speaker::User {
                continue;
            }
            let info = &dialogue.turns[i - 1].user_info;
            let repeats = info.iter().filter(|sv| mentioned.contains(&sv.slot)).count();
            mentioned.extend(info.iter().map(|sv| sv.slot.clone()));
            load += info.len();
            *d.info_per_user_turn.entry(info.len()).or_default() += 1;
            *d.repeats_per_context.entry(repeats).or_default() += 1;
            *d.response_length.entry(turn.words.len()).or_default() += 1;
            *d.utterance_location.entry((5 * i / n_turns).min(4)).or_default() += 1;
        }
        for t in &dialogue.goal_topics {
            *d.topic_frequency.entry(t.clone()).or_default() += 1;
        }
        let n_topics = dialogue.goal_topics.len();
        *d.topics_per_dialogue.entry(n_topics).or_default() += 1;
        let kind = if n_topics > 1 { "multi" } else { "single" };
        *d.single_vs_multi.entry(kind.into()).or_default() += 1;
        *d.info_load.entry(load).or_default() += 1;
    }
    d
}

const PCA_TOL: f64 = 1e-12;
const PCA_MAX_ITER: usize = 10_000;

/// Two-component projection of mean-centred points.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// Unit, mutually orthogonal; first nonzero coordinate positive.
    pub axes: [Vec<f64>; 2],
    /// Covariance eigenvalues along the axes (n − 1 denominator).
    pub eigenvalues: [f64; 2],
    /// Share of total variance per axis, non-increasing.
    pub explained_variance_ratio: [f64; 2],
    pub coords: Vec<[f64; 2]>,
    /// `(min, max)` of the coordinates along each axis.
    pub ranges: [(f64, f64); 2],
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = math::sqrt(dot(v, v));
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d).map(|i| dot(&m[i * d..(i + 1) * d], v)).collect()
}

/// Classical Gram-Schmidt applied twice; a single pass loses orthogonality
/// when `v` is almost parallel to `against`.
fn orthogonalize(v: &mut [f64], against: &[Vec<f64>]) {
    for _ in 0..2 {
        for a in against {
            let p = dot(v, a);
            v.iter_mut().zip(a).for_each(|(x, y)| *x -= p * y);
        }
    }
}

/// Dominant eigenpair of the symmetric `cov`, restricted to the complement
/// of `found`.
fn power_iteration(cov: &[f64], d: usize, found: &[Vec<f64>], start: &[f64]) -> (Vec<f64>, f64) {
    let mut v = start.to_vec();
    orthogonalize(&mut v, found);
    normalize(&mut v);
    for _ in 0..PCA_MAX_ITER {
        let mut w = mat_vec(cov, &v);
        orthogonalize(&mut w, found);
        if normalize(&mut w) == 0.0 {
            // The remaining spectrum is zero; any orthonormal direction will do.
            break;
        }
        let delta = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        if delta < PCA_TOL {
            break;
        }
    }
    let lambda = dot(&v, &mat_vec(cov, &v));
    debug_assert_eq!(v.len(), d);
    (v, lambda)
}

fn fix_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Top two principal axes by power iteration with deflation.
pub fn pca2(points: &[Vec<f64>]) -> Result<PcaProjection, AnalysisError> {
    if points.len() < 3 {
        return Err(AnalysisError::DegenerateData("fewer than 3 points"));
    }
    let d = points[0].len();
    if d < 2 || points.iter().any(|p| p.len() != d) {
        return Err(AnalysisError::DegenerateData("points need equal width of at least 2"));
    }
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        mean.iter_mut().zip(p).for_each(|(m, x)| *m += x / n);
    }
    let centred: Vec<Vec<f64>> = points.iter().map(|p| p.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
    let mut cov = vec![0.0; d * d];
    for p in &centred {
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += p[i] * p[j] / (n - 1.0);
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[i * d + j] = cov[j * d + i];
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if !(trace > 0.0) {
        return Err(AnalysisError::DegenerateData("zero variance"));
    }

    let mut rng = rng_for(0, "pca-start");
    let start: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (mut a1, l1) = power_iteration(&cov, d, &[], &start);
    fix_sign(&mut a1);
    let (mut a2, l2) = power_iteration(&cov, d, &[a1.clone()], &start);
    fix_sign(&mut a2);
    let (l1, l2) = (l1.max(0.0), l2.max(0.0));

    let coords: Vec<[f64; 2]> = centred.iter().map(|p| [dot(p, &a1), dot(p, &a2)]).collect();
    let range = |k: usize| {
        coords
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c[k]), hi.max(c[k])))
    };
    Ok(PcaProjection {
        mean,
        ranges: [range(0), range(1)],
        axes: [a1, a2],
        eigenvalues: [l1, l2],
        explained_variance_ratio: [(l1 / trace).min(1.0), (l2 / trace).min(1.0)],
        coords,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Grade {
    Easy,
    Medium,
    Hard,
}

impl Grade {
    pub const ALL: [Grade; 3] = [Grade::Easy, Grade::Medium, Grade::Hard];

    /// Easy above 0.50, Medium in (0.25, 0.50], Hard at or below 0.25.
    pub fn from_average(avg: f64) -> Grade {
        if avg > 0.50 {
            Grade::Easy
        } else if avg > 0.25 {
            Grade::Medium
        } else {
            Grade::Hard
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Grade::Easy => "easy",
            Grade::Medium => "medium",
            Grade::Hard => "hard",
        }
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// F1 per task per model, each in `[0, 1]`.
pub type ScoreTable = BTreeMap<ProbeTask, BTreeMap<ModelKind, f64>>;

/// Mean F1 over seeds of the results whose checkpoint satisfies `keep`.
pub fn score_table(results: &[ProbeResult], keep: impl Fn(CheckpointTag) -> bool) -> ScoreTable {
    let mut sums: BTreeMap<(ProbeTask, ModelKind), (f64, usize)> = BTreeMap::new();
    for r in results.iter().filter(|r| keep(r.checkpoint)) {
        let e = sums.entry((r.task, r.model)).or_default();
        e.0 += r.f1;
        e.1 += 1;
    }
    let mut table = ScoreTable::new();
    for ((task, model), (s, n)) in sums {
        table.entry(task).or_default().insert(model, s / n as f64);
    }
    table
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaskGrade {
    pub grade: Grade,
    pub avg_untrained: f64,
}

pub type DifficultyGrading = BTreeMap<ProbeTask, TaskGrade>;

/// Grades every task in `untrained` by its average over the four recurrent
/// models; the Transformer does not take part.
pub fn difficulty_grade(untrained: &ScoreTable) -> Result<DifficultyGrading, AnalysisError> {
    let mut grading = DifficultyGrading::new();
    for (&task, by_model) in untrained {
        let mut sum = 0.0;
        for model in ModelKind::RECURRENT {
            sum += by_model.get(&model).ok_or(AnalysisError::MissingResult { task, model })?;
        }
        let avg = sum / ModelKind::RECURRENT.len() as f64;
        grading.insert(
            task,
            TaskGrade {
                grade: Grade::from_average(avg),
                avg_untrained: avg,
            },
        );
    }
    Ok(grading)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradeCell {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single task.
    pub std: f64,
    pub n_tasks: usize,
}

pub type DifficultyAggregate = BTreeMap<(ModelKind, Grade), GradeCell>;

/// Mean and sample std of each model's scores over the tasks of each grade
/// that has at least one task.
pub fn aggregate_by_difficulty(scores: &ScoreTable, grading: &DifficultyGrading) -> Result<DifficultyAggregate, AnalysisError> {
    let mut groups: BTreeMap<(ModelKind, Grade), Vec<f64>> = BTreeMap::new();
    let mut models = alloc::collections::BTreeSet::new();
    for (&task, by_model) in scores {
        let g = grading.get(&task).ok_or(AnalysisError::Ungraded(task))?.grade;
        for (&model, &f1) in by_model {
            models.insert(model);
            groups.entry((model, g)).or_default().push(f1);
        }
    }
    let present: alloc::collections::BTreeSet<Grade> = grading.values().map(|g| g.grade).collect();
    let mut out = DifficultyAggregate::new();
    for &model in &models {
        for &grade in &present {
            let xs = groups.get(&(model, grade)).ok_or(AnalysisError::EmptyGrade { model, grade })?;
            out.insert((model, grade), mean_std(xs));
        }
    }
    Ok(out)
}

fn mean_std(xs: &[f64]) -> GradeCell {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        math::sqrt(xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64)
    } else {
        0.0
    };
    GradeCell { mean, std, n_tasks: n }
}

/// Per (task, model, seed): `(epoch, f1)` points in epoch order, taken from
/// untrained (epoch 0) and per-epoch checkpoints. Absent epochs stay absent.
pub fn evolution_curves(results: &[ProbeResult]) -> BTreeMap<(ProbeTask, ModelKind, u64), Vec<(usize, f64)>> {
    let mut curves: BTreeMap<(ProbeTask, ModelKind, u64), Vec<(usize, f64)>> = BTreeMap::new();
    for r in results {
        let epoch = match r.checkpoint {
            CheckpointTag::Untrained => 0,
            CheckpointTag::Epoch(n) => n,
            _ => continue,
        };
        curves.entry((r.task, r.model, r.seed)).or_default().push((epoch, r.f1));
    }
    for series in curves.values_mut() {
        series.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    }
    curves
}
