use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{Checkpoint, CheckpointTag, Model, ModelConfig, ModelError};
use crate::corpus::{make_examples, Corpus, Split, TrainingExample};
use crate::seed::rng_for;
use crate::tensor::{AdamConfig, AdamState, Tape, Tensor};
use crate::textmetrics::SelectionMetric;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub metric: SelectionMetric,
    /// Stop once an epoch's mean per-token training loss is at or below this.
    pub target_loss: Option<f64>,
    /// Also keep a checkpoint at the end of every epoch.
    pub keep_epoch_checkpoints: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            metric: SelectionMetric::Bleu2,
            target_loss: None,
            keep_epoch_checkpoints: false,
        }
    }
}

/// Per-epoch history and the saved checkpoints (Untrained first, then any
/// per-epoch snapshots, LastEpoch, BestMetric).
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    /// Mean per-token cross-entropy over each epoch's updates.
    pub train_loss: Vec<f64>,
    /// Selection metric on Valid after each epoch, in `[0, 1]`.
    pub valid_metric: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
}

impl RunRecord {
    pub fn checkpoint(&self, tag: CheckpointTag) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.tag == tag)
    }
}

/// Index of the first maximum; the epoch BestMetric is taken from.
pub(crate) fn first_argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

fn validation_score(model: &Model, corpus: &Corpus, valid: &[TrainingExample], metric: SelectionMetric) -> Result<f64, ModelError> {
    let vocab = corpus.vocab();
    let mut candidates: Vec<String> = Vec::with_capacity(valid.len());
    let mut references: Vec<String> = Vec::with_capacity(valid.len());
    for ex in valid {
        let ids = model.greedy_decode(&ex.context, &ex.segments, model.config().max_decode_len)?;
        let words: Vec<&str> = ids.iter().map(|&i| vocab.decode(i)).collect();
        candidates.push(words.join(" "));
        references.push(corpus.dialogues()[ex.dialogue_index].turns[ex.turn_index].text());
    }
    Ok(metric
        .score(&candidates, &references)
        .map(|s| s.value)
        .unwrap_or(0.0))
}

/// Teacher-forced training with Adam. Deterministic in `seed`: the
/// initialization and the per-epoch example order both derive from it.
pub fn train(corpus: &Corpus, config: &ModelConfig, seed: u64, options: &TrainOptions) -> Result<RunRecord, ModelError> {
    if config.vocab_size != corpus.vocab().len() {
        return Err(ModelError::VocabMismatch {
            model: config.vocab_size,
            corpus: corpus.vocab().len(),
        });
    }
    let train_ex = make_examples(corpus, Split::Train);
    let valid_ex = make_examples(corpus, Split::Valid);
    if train_ex.is_empty() {
        return Err(ModelError::EmptySplit(Split::Train));
    }
    if valid_ex.is_empty() {
        return Err(ModelError::EmptySplit(Split::Valid));
    }
    let fingerprint = corpus.vocab().fingerprint();
    let mut model = Model::new(config.clone(), seed)?;
    let mut record = RunRecord {
        seed,
        train_loss: Vec::new(),
        valid_metric: Vec::new(),
        checkpoints: alloc::vec![model.checkpoint(CheckpointTag::Untrained, 0, seed, fingerprint)],
    };
    let mut adam = AdamState::new(model.params(), AdamConfig::with_lr(config.lr));
    let mut rng = rng_for(seed, "train-order");
    let mut order: Vec<usize> = (0..train_ex.len()).collect();
    let mut best: Option<Checkpoint> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut tokens = 0usize;
        for batch in order.chunks(config.batch_size) {
            let batch_tokens: usize = batch.iter().map(|&i| train_ex[i].target.len()).sum();
            let mut grads: Option<Vec<Tensor>> = None;
            for &i in batch {
                let mut tape = Tape::new();
                let (loss, _) = model.loss_on(&mut tape, model.params(), &train_ex[i])?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(ModelError::DivergedLoss {
                        epoch,
                        record: Box::new(record),
                    });
                }
                loss_sum += value;
                let scaled = tape.scale(loss, 1.0 / batch_tokens as f64);
                let g = tape.backward(scaled)?;
                let pg = tape.param_gradients(&g, model.params());
                grads = Some(match grads {
                    None => pg,
                    Some(mut acc) => {
                        for (a, p) in acc.iter_mut().zip(&pg) {
                            a.data_mut().iter_mut().zip(p.data()).for_each(|(x, y)| *x += y);
                        }
                        acc
                    }
                });
            }
            tokens += batch_tokens;
            if let Some(g) = grads {
                if adam.step(model.params_mut(), &g).is_err() {
                    return Err(ModelError::DivergedLoss {
                        epoch,
                        record: Box::new(record),
                    });
                }
            }
        }
        let mean = loss_sum / tokens as f64;
        record.train_loss.push(mean);
        let score = validation_score(&model, corpus, &valid_ex, options.metric)?;
        record.valid_metric.push(score);
        if first_argmax(&record.valid_metric) == Some(epoch - 1) {
            best = Some(model.checkpoint(CheckpointTag::BestMetric(options.metric), epoch, seed, fingerprint));
        }
        if options.keep_epoch_checkpoints {
            record
                .checkpoints
                .push(model.checkpoint(CheckpointTag::Epoch(epoch), epoch, seed, fingerprint));
        }
        if options.target_loss.is_some_and(|t| mean <= t) {
            break;
        }
    }
    let last_epoch = record.train_loss.len();
    record
        .checkpoints
        .push(model.checkpoint(CheckpointTag::LastEpoch, last_epoch, seed, fingerprint));
    match best {
        Some(b) => record.checkpoints.push(b),
        // Zero epochs: the untrained weights are both last and best.
        None => record.checkpoints.push(model.checkpoint(
            CheckpointTag::BestMetric(options.metric),
            0,
            seed,
            fingerprint,
        )),
    }
    Ok(record)
}
