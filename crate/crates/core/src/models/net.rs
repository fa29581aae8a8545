use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::layers::{
    causal_mask, positional_encoding, uniform, Additive, AttentionMemory, DecoderBlock, EncoderBlock, Linear,
    LstmLayer, LstmStack, LstmState,
};
use super::{Checkpoint, CheckpointTag, ModelConfig, ModelError, ModelKind};
use crate::corpus::{TrainingExample, EOS, SOS};
use crate::math;
use crate::seed::rng_for;
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

type Result<T> = core::result::Result<T, ModelError>;

#[derive(Clone, Debug)]
enum Encoder {
    Uni(LstmStack),
    Bi { fwd: LstmStack, bwd: LstmStack },
    Hier { sentence: LstmLayer, context: LstmLayer },
    Transformer(Vec<EncoderBlock>),
}

#[derive(Clone, Debug)]
enum Decoder {
    Recurrent { stack: LstmStack, attention: Option<Additive> },
    Transformer(Vec<DecoderBlock>),
}

/// A model: configuration, parameters and the architecture that reads them.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    embed: ParamId,
    encoder: Encoder,
    decoder: Decoder,
    out: Linear,
}

/// Encoder output for one context.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStates {
    /// Top-layer state per position (per turn segment for HRED), `T x hidden`.
    pub states: Tensor,
    /// Fixed-width context summary; the probe input.
    pub summary: Vec<f64>,
    /// BiLSTM only: final forward and backward top-layer states.
    pub directional: Option<(Vec<f64>, Vec<f64>)>,
}

pub(crate) struct Encoded {
    states: Var,
    summary: Var,
    directional: Option<(Var, Var)>,
    /// Unidirectional stack only: final state per layer, handed to the decoder.
    finals: Option<Vec<LstmState>>,
}

impl Model {
    /// Fresh model with parameters drawn uniformly from ±0.08, seeded.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(seed, &format!("init:{}", config.kind));
        let mut store = ParamStore::new();
        let (e, h, v) = (config.embed, config.hidden, config.vocab_size);
        let embed = store.add("embed", uniform(&mut rng, v, e));
        let (encoder, decoder) = match config.kind {
            ModelKind::Transformer => {
                let half = config.layers / 2;
                let enc = (0..half)
                    .map(|k| EncoderBlock::new(&mut store, &mut rng, &format!("encoder.b{k}"), h, config.heads))
                    .collect();
                let dec = (0..half)
                    .map(|k| DecoderBlock::new(&mut store, &mut rng, &format!("decoder.b{k}"), h, config.heads))
                    .collect();
                (Encoder::Transformer(enc), Decoder::Transformer(dec))
            }
            kind => {
                let encoder = match kind {
                    ModelKind::Hred => Encoder::Hier {
                        sentence: LstmLayer::new(&mut store, &mut rng, "encoder.sentence", e, h),
                        context: LstmLayer::new(&mut store, &mut rng, "encoder.context", h, h),
                    },
                    ModelKind::BiLstmAttn => Encoder::Bi {
                        fwd: LstmStack::new(&mut store, &mut rng, "encoder.fwd", e, h, config.layers),
                        bwd: LstmStack::new(&mut store, &mut rng, "encoder.bwd", e, h, config.layers),
                    },
                    _ => Encoder::Uni(LstmStack::new(&mut store, &mut rng, "encoder", e, h, config.layers)),
                };
                let attention = kind
                    .has_attention()
                    .then(|| Additive::new(&mut store, &mut rng, "attention", h));
                let input = if attention.is_some() { e + h } else { e };
                let stack = LstmStack::new(&mut store, &mut rng, "decoder", input, h, config.layers);
                (encoder, Decoder::Recurrent { stack, attention })
            }
        };
        let out = Linear::new(&mut store, &mut rng, "out", h, v);
        Ok(Model {
            config,
            params: store,
            embed,
            encoder,
            decoder,
            out,
        })
    }

    pub(crate) fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut model = Model::new(ck.config.clone(), 0)?;
        if ck.params.len() != model.params.len() {
            return Err(ModelError::CorruptCheckpoint(format!(
                "expected {} tensors, found {}",
                model.params.len(),
                ck.params.len()
            )));
        }
        for ((name, t), (expected, current)) in ck.params.iter().zip(model.params.iter()) {
            if name != expected || t.shape() != current.shape() {
                return Err(ModelError::CorruptCheckpoint(format!(
                    "tensor `{name}` {} does not match `{expected}` {}",
                    t.shape(),
                    current.shape()
                )));
            }
        }
        model
            .params
            .load_values(ck.params.iter().map(|(_, t)| t.clone()).collect())?;
        Ok(model)
    }

    pub fn checkpoint(&self, tag: CheckpointTag, epoch: usize, seed: u64, vocab_fingerprint: u64) -> Checkpoint {
        Checkpoint {
            tag,
            epoch,
            seed,
            config: self.config.clone(),
            vocab_fingerprint,
            params: self.params.iter().map(|(n, t)| (String::from(n), t.clone())).collect(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    fn ids(&self, tokens: &[u32]) -> Result<Vec<usize>> {
        tokens
            .iter()
            .map(|&t| {
                if (t as usize) < self.config.vocab_size {
                    Ok(t as usize)
                } else {
                    Err(ModelError::TokenOutOfRange {
                        token: t,
                        vocab: self.config.vocab_size,
                    })
                }
            })
            .collect()
    }

    fn embed_scaled(&self, tape: &mut Tape, store: &ParamStore, ids: &[usize]) -> Result<Var> {
        let table = tape.param(store, self.embed);
        let x = tape.embed(table, ids)?;
        if self.config.kind != ModelKind::Transformer {
            return Ok(x);
        }
        let x = tape.scale(x, math::sqrt(self.config.hidden as f64));
        let pe = tape.constant(positional_encoding(ids.len(), self.config.hidden));
        Ok(tape.add(x, pe)?)
    }

    /// Encoder forward pass recorded on `tape`. `segments` gives the token
    /// count of each turn in `context`; a mismatching or empty list means
    /// a single segment.
    pub(crate) fn encode_on(&self, tape: &mut Tape, store: &ParamStore, context: &[u32], segments: &[usize]) -> Result<Encoded> {
        if context.is_empty() {
            return Err(ModelError::EmptyContext);
        }
        let ids = self.ids(context)?;
        match &self.encoder {
            Encoder::Uni(stack) => {
                let x = self.embed_scaled(tape, store, &ids)?;
                let (states, finals) = stack.run(tape, store, x)?;
                let summary = finals.last().expect("at least one layer").h;
                Ok(Encoded {
                    states,
                    summary,
                    directional: None,
                    finals: Some(finals),
                })
            }
            Encoder::Bi { fwd, bwd } => {
                let x = self.embed_scaled(tape, store, &ids)?;
                let rev: Vec<usize> = ids.iter().rev().copied().collect();
                let xr = self.embed_scaled(tape, store, &rev)?;
                let (fs, ff) = fwd.run(tape, store, x)?;
                let (bs, bf) = bwd.run(tape, store, xr)?;
                let n = ids.len();
                let bs_rows = (0..n).rev().map(|t| tape.row(bs, t)).collect::<core::result::Result<Vec<_>, _>>()?;
                let bs_aligned = tape.concat(&bs_rows, 0)?;
                let states = tape.add(fs, bs_aligned)?;
                let (fh, bh) = (ff.last().expect("layer").h, bf.last().expect("layer").h);
                let summary = tape.add(fh, bh)?;
                Ok(Encoded {
                    states,
                    summary,
                    directional: Some((fh, bh)),
                    finals: None,
                })
            }
            Encoder::Hier { sentence, context: ctx } => {
                let x = self.embed_scaled(tape, store, &ids)?;
                let lens: Vec<usize> = if segments.iter().sum::<usize>() == ids.len() && segments.iter().all(|&s| s > 0) {
                    segments.to_vec()
                } else {
                    vec![ids.len()]
                };
                let mut finals = Vec::with_capacity(lens.len());
                let mut start = 0;
                for len in lens {
                    let seg = tape.slice(x, 0, start, len)?;
                    let init = sentence.zero_state(tape);
                    let (_, last) = sentence.run(tape, store, seg, init)?;
                    finals.push(last.h);
                    start += len;
                }
                let sent = tape.concat(&finals, 0)?;
                let init = ctx.zero_state(tape);
                let (hs, last) = ctx.run(tape, store, sent, init)?;
                let states = tape.concat(&hs, 0)?;
                Ok(Encoded {
                    states,
                    summary: last.h,
                    directional: None,
                    finals: None,
                })
            }
            Encoder::Transformer(blocks) => {
                let mut x = self.embed_scaled(tape, store, &ids)?;
                for b in blocks {
                    x = b.forward(tape, store, x)?;
                }
                let summary = tape.mean(x, 0)?;
                Ok(Encoded {
                    states: x,
                    summary,
                    directional: None,
                    finals: None,
                })
            }
        }
    }

    pub fn encode(&self, context: &[u32], segments: &[usize]) -> Result<EncoderStates> {
        let mut tape = Tape::new();
        let enc = self.encode_on(&mut tape, &self.params, context, segments)?;
        let row = |v: Var| tape.value(v).data().to_vec();
        Ok(EncoderStates {
            states: tape.value(enc.states).clone(),
            summary: row(enc.summary),
            directional: enc.directional.map(|(f, b)| (row(f), row(b))),
        })
    }

    /// Context summary of a training example; the probe input.
    pub fn context_embedding(&self, example: &TrainingExample) -> Result<Vec<f64>> {
        Ok(self.encode(&example.context, &example.segments)?.summary)
    }

    /// Summed cross-entropy of the teacher-forced target, and the attention
    /// weights of every decode step (empty without attention).
    pub(crate) fn loss_on(&self, tape: &mut Tape, store: &ParamStore, example: &TrainingExample) -> Result<(Var, Vec<Var>)> {
        if example.target.is_empty() {
            return Err(ModelError::EmptyTarget);
        }
        let enc = self.encode_on(tape, store, &example.context, &example.segments)?;
        let targets = self.ids(&example.target)?;
        let mut inputs = Vec::with_capacity(targets.len());
        inputs.push(SOS as usize);
        inputs.extend_from_slice(&targets[..targets.len() - 1]);
        let (hidden, weights) = match &self.decoder {
            Decoder::Recurrent { stack, attention } => {
                let x = self.embed_scaled(tape, store, &inputs)?;
                let mut run = RecurrentRun::start(tape, stack, attention.as_ref(), store, &enc)?;
                let mut tops = Vec::with_capacity(inputs.len());
                for t in 0..inputs.len() {
                    let xt = tape.row(x, t)?;
                    tops.push(run.step(tape, store, xt)?);
                }
                (tape.concat(&tops, 0)?, run.weights)
            }
            Decoder::Transformer(blocks) => (self.transformer_decode(tape, store, blocks, &enc, &inputs)?, Vec::new()),
        };
        let logits = self.out.forward(tape, store, hidden)?;
        Ok((tape.cross_entropy(logits, &targets)?, weights))
    }

    fn transformer_decode(&self, tape: &mut Tape, store: &ParamStore, blocks: &[DecoderBlock], enc: &Encoded, inputs: &[usize]) -> Result<Var> {
        let mut y = self.embed_scaled(tape, store, inputs)?;
        let mask = tape.constant(causal_mask(inputs.len()));
        for b in blocks {
            y = b.forward(tape, store, y, enc.states, mask)?;
        }
        Ok(y)
    }

    /// Summed target cross-entropy under the current parameters, with the
    /// number of target tokens.
    pub fn example_loss(&self, example: &TrainingExample) -> Result<(f64, usize)> {
        let mut tape = Tape::new();
        let (loss, _) = self.loss_on(&mut tape, &self.params, example)?;
        Ok((tape.value(loss).item(), example.target.len()))
    }

    /// Attention distribution over context positions at each decode step.
    pub fn attention_weights(&self, example: &TrainingExample) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let (_, weights) = self.loss_on(&mut tape, &self.params, example)?;
        Ok(weights.iter().map(|w| tape.value(*w).data().to_vec()).collect())
    }

    /// Loss of `example` evaluated with `store` in place of the model's own
    /// parameters (same architecture); used for gradient checks.
    pub fn loss_with(&self, tape: &mut Tape, store: &ParamStore, example: &TrainingExample) -> Result<Var> {
        Ok(self.loss_on(tape, store, example)?.0)
    }

    /// Argmax decoding until EOS or `max_len` tokens; EOS is not returned.
    pub fn greedy_decode(&self, context: &[u32], segments: &[usize], max_len: usize) -> Result<Vec<u32>> {
        let mut tape = Tape::new();
        let store = &self.params;
        let enc = self.encode_on(&mut tape, store, context, segments)?;
        let mut out: Vec<u32> = Vec::new();
        match &self.decoder {
            Decoder::Recurrent { stack, attention } => {
                let mut run = RecurrentRun::start(&mut tape, stack, attention.as_ref(), store, &enc)?;
                let mut prev = SOS as usize;
                while out.len() < max_len {
                    let x = self.embed_scaled(&mut tape, store, &[prev])?;
                    let top = run.step(&mut tape, store, x)?;
                    let logits = self.out.forward(&mut tape, store, top)?;
                    let next = argmax(tape.value(logits).data());
                    if next == EOS as usize {
                        break;
                    }
                    out.push(next as u32);
                    prev = next;
                }
            }
            Decoder::Transformer(blocks) => {
                let mut inputs = vec![SOS as usize];
                while out.len() < max_len {
                    let y = self.transformer_decode(&mut tape, store, blocks, &enc, &inputs)?;
                    let last = tape.row(y, inputs.len() - 1)?;
                    let logits = self.out.forward(&mut tape, store, last)?;
                    let next = argmax(tape.value(logits).data());
                    if next == EOS as usize {
                        break;
                    }
                    out.push(next as u32);
                    inputs.push(next);
                }
            }
        }
        Ok(out)
    }
}

// Lowest index wins ties.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Recurrent decoder state. A same-depth unidirectional encoder hands over
/// its final (h, c) per layer; otherwise every layer starts from the summary
/// with a zero cell.
struct RecurrentRun<'a> {
    stack: &'a LstmStack,
    attention: Option<(&'a Additive, AttentionMemory)>,
    states: Vec<LstmState>,
    top: Var,
    weights: Vec<Var>,
}

impl<'a> RecurrentRun<'a> {
    fn start(tape: &mut Tape, stack: &'a LstmStack, attention: Option<&'a Additive>, store: &ParamStore, enc: &Encoded) -> Result<Self> {
        let states = match &enc.finals {
            Some(f) if f.len() == stack.layers.len() => f.clone(),
            _ => {
                let zero = stack.layers[0].zero_state(tape).c;
                vec![LstmState { h: enc.summary, c: zero }; stack.layers.len()]
            }
        };
        let attention = match attention {
            Some(a) => Some((a, a.memory(tape, store, enc.states)?)),
            None => None,
        };
        Ok(RecurrentRun {
            stack,
            attention,
            states,
            top: enc.summary,
            weights: Vec::new(),
        })
    }

    fn step(&mut self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let input = match &self.attention {
            Some((a, mem)) => {
                let (w, ctx) = a.attend(tape, store, *mem, self.top)?;
                self.weights.push(w);
                tape.concat(&[x, ctx], 1)?
            }
            None => x,
        };
        self.top = self.stack.step(tape, store, input, &mut self.states)?;
        Ok(self.top)
    }
}
