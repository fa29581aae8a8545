use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::labels::{build_labels, LabelError, LabelOptions, RawLabel};
use super::{LabelKind, LabelShape, ProbeTask};
use crate::corpus::{make_examples, Corpus, Split, Style};
use crate::models::{Checkpoint, ContextEmbedding, ModelError};

/// An indexed label: a class, or a set of classes for multi-label tasks.
/// Indices at or beyond the label space size stand for names never seen
/// in Train; no classifier can predict them.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Class(usize),
    Set(BTreeSet<usize>),
}

/// Ordered label vocabulary of one task, built from the Train split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSpace {
    pub task: ProbeTask,
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    kind: LabelKind,
}

impl LabelSpace {
    /// Count tasks have a fixed space `0..classes`; name tasks take the
    /// lexicographically sorted names occurring in `train`.
    pub fn build<'a>(task: ProbeTask, train: impl IntoIterator<Item = &'a RawLabel>) -> LabelSpace {
        let (names, kind): (Vec<String>, LabelKind) = match task.shape() {
            LabelShape::Binary => ((0..2).map(|i| i.to_string()).collect(), LabelKind::Binary),
            LabelShape::Count { classes } => ((0..classes).map(|i| i.to_string()).collect(), LabelKind::MultiClass(classes)),
            shape => {
                let mut set = BTreeSet::new();
                for raw in train {
                    match raw {
                        RawLabel::Name(n) => {
                            set.insert(n.clone());
                        }
                        RawLabel::Names(ns) => set.extend(ns.iter().cloned()),
                        RawLabel::Count(c) => {
                            set.insert(c.to_string());
                        }
                    }
                }
                let n = set.len();
                let kind = if shape == LabelShape::Set {
                    LabelKind::MultiLabel(n)
                } else {
                    LabelKind::MultiClass(n)
                };
                (set.into_iter().collect(), kind)
            }
        };
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        LabelSpace {
            task,
            names,
            index,
            kind,
        }
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Indexes `raw`; unseen names are numbered from `len()` upwards
    /// through `unseen`, which must be shared across one split.
    pub fn encode(&self, raw: &RawLabel, unseen: &mut BTreeMap<String, usize>) -> Label {
        let mut idx = |name: &str| -> usize {
            if let Some(i) = self.lookup(name) {
                return i;
            }
            let next = self.names.len() + unseen.len();
            *unseen.entry(name.to_string()).or_insert(next)
        };
        match raw {
            RawLabel::Count(c) => Label::Class(idx(&c.to_string())),
            RawLabel::Name(n) => Label::Class(idx(n)),
            RawLabel::Names(ns) => Label::Set(ns.iter().map(|n| idx(n)).collect()),
        }
    }

    /// Label names joined with `|` for reports; unseen indices print as `?`.
    pub fn render(&self, label: &Label) -> String {
        match label {
            Label::Class(i) => self.name(*i).unwrap_or("?").to_string(),
            Label::Set(s) => s.iter().map(|i| self.name(*i).unwrap_or("?")).collect::<Vec<_>>().join("|"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbeExample {
    pub dialogue_id: String,
    /// The System turn whose context is probed.
    pub turn_index: usize,
    pub label: Label,
}

/// Examples with their embeddings, row-aligned.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProbeSplit {
    pub examples: Vec<ProbeExample>,
    pub embeddings: Vec<Vec<f64>>,
}

impl ProbeSplit {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.examples.iter().map(|e| e.label.clone()).collect()
    }
}

/// Train split fits the probe; `eval` (the Valid split) scores it.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeDataset {
    pub task: ProbeTask,
    pub space: LabelSpace,
    pub train: ProbeSplit,
    pub eval: ProbeSplit,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ProbeError {
    #[error("checkpoint vocabulary does not match the corpus")]
    VocabMismatch,
    #[error("no evaluation examples for task {0}")]
    EmptyEvaluationSplit(ProbeTask),
    #[error("no training examples for task {0}")]
    EmptyTrainingSplit(ProbeTask),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Context embeddings of every System turn in `split` under `checkpoint`.
pub fn embed_split(corpus: &Corpus, checkpoint: &Checkpoint, split: Split) -> Result<Vec<ContextEmbedding>, ProbeError> {
    if checkpoint.vocab_fingerprint != corpus.vocab().fingerprint() || checkpoint.config.vocab_size != corpus.vocab().len() {
        return Err(ProbeError::VocabMismatch);
    }
    let model = checkpoint.model()?;
    make_examples(corpus, split)
        .iter()
        .map(|ex| {
            Ok(ContextEmbedding {
                values: model.context_embedding(ex)?,
                model: checkpoint.config.kind,
                seed: checkpoint.seed,
                tag: checkpoint.tag,
                dialogue_index: ex.dialogue_index,
                dialogue_id: ex.dialogue_id.clone(),
                turn_index: ex.turn_index,
            })
        })
        .collect()
}

fn labelled(
    corpus: &Corpus,
    task: ProbeTask,
    embeddings: &[ContextEmbedding],
    options: &LabelOptions,
) -> Result<Vec<(RawLabel, usize)>, ProbeError> {
    let style: Style = corpus.style();
    let mut out = Vec::with_capacity(embeddings.len());
    for (row, e) in embeddings.iter().enumerate() {
        let d = &corpus.dialogues()[e.dialogue_index];
        match build_labels(task, d, e.turn_index, style, options) {
            Ok(raw) => out.push((raw, row)),
            Err(LabelError::Skip) => {}
            Err(err) => return Err(err.into()),
        }
    }
    Ok(out)
}

/// Pairs precomputed embeddings with labels; Skip examples are dropped
/// from both sides.
pub fn probe_dataset_from_embeddings(
    corpus: &Corpus,
    task: ProbeTask,
    train: &[ContextEmbedding],
    eval: &[ContextEmbedding],
    options: &LabelOptions,
) -> Result<ProbeDataset, ProbeError> {
    let train_raw = labelled(corpus, task, train, options)?;
    let eval_raw = labelled(corpus, task, eval, options)?;
    if train_raw.is_empty() {
        return Err(ProbeError::EmptyTrainingSplit(task));
    }
    if eval_raw.is_empty() {
        return Err(ProbeError::EmptyEvaluationSplit(task));
    }
    let space = LabelSpace::build(task, train_raw.iter().map(|(r, _)| r));
    let assemble = |rows: &[(RawLabel, usize)], src: &[ContextEmbedding]| {
        let mut unseen = BTreeMap::new();
        let mut split = ProbeSplit::default();
        for (raw, row) in rows {
            let e = &src[*row];
            split.examples.push(ProbeExample {
                dialogue_id: e.dialogue_id.clone(),
                turn_index: e.turn_index,
                label: space.encode(raw, &mut unseen),
            });
            split.embeddings.push(e.values.clone());
        }
        split
    };
    let train_split = assemble(&train_raw, train);
    let eval_split = assemble(&eval_raw, eval);
    Ok(ProbeDataset {
        task,
        space,
        train: train_split,
        eval: eval_split,
    })
}

/// Embeds Train and Valid under `checkpoint` and labels them for `task`.
pub fn build_probe_dataset(
    corpus: &Corpus,
    checkpoint: &Checkpoint,
    task: ProbeTask,
    options: &LabelOptions,
) -> Result<ProbeDataset, ProbeError> {
    if corpus.count(Split::Valid) == 0 {
        return Err(ProbeError::EmptyEvaluationSplit(task));
    }
    let train = embed_split(corpus, checkpoint, Split::Train)?;
    let eval = embed_split(corpus, checkpoint, Split::Valid)?;
    probe_dataset_from_embeddings(corpus, task, &train, &eval, options)
}
