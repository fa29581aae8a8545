//! The five encoder-decoder dialogue models, teacher-forced training,
//! greedy decoding, context-embedding extraction and checkpoints.

mod layers;
mod net;
mod train;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use net::{EncoderStates, Model};
pub use train::{train, RunRecord, TrainOptions};

use crate::tensor::{Tensor, TensorError};
use crate::textmetrics::SelectionMetric;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Seq2Seq,
    Seq2SeqAttn,
    Hred,
    BiLstmAttn,
    Transformer,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Seq2Seq,
        ModelKind::Seq2SeqAttn,
        ModelKind::Hred,
        ModelKind::BiLstmAttn,
        ModelKind::Transformer,
    ];

    /// The recurrent kinds, whose untrained scores define task difficulty.
    pub const RECURRENT: [ModelKind; 4] = [
        ModelKind::Seq2Seq,
        ModelKind::Seq2SeqAttn,
        ModelKind::Hred,
        ModelKind::BiLstmAttn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Seq2Seq => "seq2seq",
            ModelKind::Seq2SeqAttn => "seq2seq_attn",
            ModelKind::Hred => "hred",
            ModelKind::BiLstmAttn => "bilstm_attn",
            ModelKind::Transformer => "transformer",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        let s = s.to_ascii_lowercase().replace('-', "_");
        ModelKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn is_recurrent(self) -> bool {
        self != ModelKind::Transformer
    }

    pub fn has_attention(self) -> bool {
        matches!(self, ModelKind::Seq2SeqAttn | ModelKind::BiLstmAttn)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture and training hyperparameters. For the Transformer `layers`
/// counts encoder and decoder blocks together and `embed == hidden`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub vocab_size: usize,
    pub embed: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub lr: f64,
    pub epochs: usize,
    pub max_decode_len: usize,
    /// Examples per optimizer step.
    pub batch_size: usize,
}

impl ModelConfig {
    fn preset(kind: ModelKind, vocab_size: usize, recurrent: (usize, usize, usize), transformer: (usize, usize, usize)) -> Self {
        let (embed, hidden, layers, heads) = if kind == ModelKind::Transformer {
            (transformer.0, transformer.0, transformer.2, transformer.1)
        } else {
            (recurrent.1, recurrent.0, recurrent.2, 1)
        };
        ModelConfig {
            kind,
            vocab_size,
            embed,
            hidden,
            layers,
            heads,
            lr: if kind == ModelKind::Transformer { 1e-3 } else { 4e-3 },
            epochs: 25,
            max_decode_len: 30,
            batch_size: 1,
        }
    }

    /// Small default: hidden 64, embed 32 (Transformer width 64, 2 heads,
    /// 2 + 2 blocks).
    pub fn desk(kind: ModelKind, vocab_size: usize) -> Self {
        Self::preset(kind, vocab_size, (64, 32, 2), (64, 2, 4))
    }

    /// Full size: LSTM hidden 256, embed 128, 2 layers; Transformer width
    /// 512, 2 heads, 2 + 2 blocks.
    pub fn full(kind: ModelKind, vocab_size: usize) -> Self {
        let mut c = Self::preset(kind, vocab_size, (256, 128, 2), (512, 2, 4));
        c.batch_size = 32;
        c
    }

    /// Minimal sizes for finite-difference checks.
    pub fn tiny(kind: ModelKind, vocab_size: usize) -> Self {
        Self::preset(kind, vocab_size, (8, 4, 2), (8, 2, 2))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &'static str| Err(ModelError::InvalidConfig(m));
        if self.vocab_size <= crate::corpus::RESERVED.len() {
            return bad("vocabulary has no corpus tokens");
        }
        if self.embed == 0 || self.hidden == 0 || self.layers == 0 {
            return bad("sizes must be positive");
        }
        if self.max_decode_len == 0 || self.batch_size == 0 {
            return bad("max_decode_len and batch_size must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.kind == ModelKind::Transformer {
            if self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
                return bad("transformer width must be divisible by heads");
            }
            if !self.layers.is_multiple_of(2) {
                return bad("transformer layers must split evenly between encoder and decoder");
            }
            if self.embed != self.hidden {
                return bad("transformer embed must equal hidden");
            }
        }
        Ok(())
    }
}

/// Which snapshot a checkpoint is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CheckpointTag {
    Untrained,
    /// End of a given epoch, kept for evolution curves.
    Epoch(usize),
    LastEpoch,
    BestMetric(SelectionMetric),
}

impl CheckpointTag {
    /// File-name and report label: `untrained`, `epoch-07`, `last`, `best`.
    pub fn label(self) -> String {
        match self {
            CheckpointTag::Untrained => "untrained".into(),
            CheckpointTag::Epoch(n) => alloc::format!("epoch-{n:02}"),
            CheckpointTag::LastEpoch => "last".into(),
            CheckpointTag::BestMetric(_) => "best".into(),
        }
    }

    /// Inverse of [`label`](Self::label); `best` needs the selection metric.
    pub fn parse(s: &str, metric: SelectionMetric) -> Option<CheckpointTag> {
        match s {
            "untrained" => Some(CheckpointTag::Untrained),
            "last" => Some(CheckpointTag::LastEpoch),
            "best" => Some(CheckpointTag::BestMetric(metric)),
            _ => s.strip_prefix("epoch-")?.parse().ok().map(CheckpointTag::Epoch),
        }
    }
}

impl fmt::Display for CheckpointTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parameter snapshot with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub tag: CheckpointTag,
    pub epoch: usize,
    pub seed: u64,
    pub config: ModelConfig,
    pub vocab_fingerprint: u64,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    /// Rebuilds the model; names and shapes must match the architecture.
    pub fn model(&self) -> Result<Model, ModelError> {
        Model::from_checkpoint(self)
    }
}

/// Encoder summary of one context, with where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextEmbedding {
    pub values: Vec<f64>,
    pub model: ModelKind,
    pub seed: u64,
    pub tag: CheckpointTag,
    /// Position of the dialogue in the corpus.
    pub dialogue_index: usize,
    pub dialogue_id: String,
    pub turn_index: usize,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("empty context")]
    EmptyContext,
    #[error("empty target")]
    EmptyTarget,
    #[error("token id {token} outside vocabulary of {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(&'static str),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("model vocabulary ({model}) does not match corpus ({corpus})")]
    VocabMismatch { model: usize, corpus: usize },
    #[error("split {0} has no examples")]
    EmptySplit(crate::corpus::Split),
    #[error("non-finite training loss in epoch {epoch}")]
    DivergedLoss { epoch: usize, record: alloc::boxed::Box<RunRecord> },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
