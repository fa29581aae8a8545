//! Checkpoint files: the magic line `DPCK1`, a one-line JSON manifest, then
//! every tensor as little-endian `f64` in manifest order.

use dprobe_core::models::ModelError;
use dprobe_core::textmetrics::SelectionMetric;
use dprobe_core::{Checkpoint, CheckpointTag, ModelConfig, ModelKind, Tensor};
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8] = b"DPCK1\n";

#[derive(Serialize, Deserialize)]
struct ConfigDoc {
    kind: String,
    vocab_size: usize,
    embed: usize,
    hidden: usize,
    layers: usize,
    heads: usize,
    lr: f64,
    epochs: usize,
    max_decode_len: usize,
    batch_size: usize,
}

#[derive(Serialize, Deserialize)]
struct TensorDoc {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    tag: String,
    /// Selection metric of a best-metric checkpoint.
    metric: Option<String>,
    epoch: usize,
    seed: u64,
    vocab_fingerprint: u64,
    config: ConfigDoc,
    tensors: Vec<TensorDoc>,
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::CorruptCheckpoint(msg.into())
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let c = &ck.config;
    let manifest = Manifest {
        tag: ck.tag.label(),
        metric: match ck.tag {
            CheckpointTag::BestMetric(m) => Some(m.name().into()),
            _ => None,
        },
        epoch: ck.epoch,
        seed: ck.seed,
        vocab_fingerprint: ck.vocab_fingerprint,
        config: ConfigDoc {
            kind: c.kind.name().into(),
            vocab_size: c.vocab_size,
            embed: c.embed,
            hidden: c.hidden,
            layers: c.layers,
            heads: c.heads,
            lr: c.lr,
            epochs: c.epochs,
            max_decode_len: c.max_decode_len,
            batch_size: c.batch_size,
        },
        tensors: ck
            .params
            .iter()
            .map(|(name, t)| TensorDoc {
                name: name.clone(),
                shape: t.dims().to_vec(),
            })
            .collect(),
    };
    let mut out = MAGIC.to_vec();
    serde_json::to_writer(&mut out, &manifest).expect("manifest serializes");
    out.push(b'\n');
    for (_, t) in &ck.params {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, ModelError> {
    let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| corrupt("bad magic"))?;
    let nl = rest.iter().position(|b| *b == b'\n').ok_or_else(|| corrupt("unterminated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(&rest[..nl]).map_err(|e| corrupt(format!("manifest: {e}")))?;
    let mut data = &rest[nl + 1..];

    let metric = match &manifest.metric {
        Some(m) => SelectionMetric::parse(m).ok_or_else(|| corrupt(format!("unknown metric {m:?}")))?,
        None => SelectionMetric::Bleu2,
    };
    let tag = CheckpointTag::parse(&manifest.tag, metric).ok_or_else(|| corrupt(format!("unknown tag {:?}", manifest.tag)))?;
    let c = &manifest.config;
    let config = ModelConfig {
        kind: ModelKind::parse(&c.kind).ok_or_else(|| corrupt(format!("unknown model {:?}", c.kind)))?,
        vocab_size: c.vocab_size,
        embed: c.embed,
        hidden: c.hidden,
        layers: c.layers,
        heads: c.heads,
        lr: c.lr,
        epochs: c.epochs,
        max_decode_len: c.max_decode_len,
        batch_size: c.batch_size,
    };
    let mut params = Vec::with_capacity(manifest.tensors.len());
    for t in &manifest.tensors {
        let n: usize = t.shape.iter().product();
        let len = n.checked_mul(8).ok_or_else(|| corrupt("tensor too large"))?;
        if data.len() < len {
            return Err(corrupt(format!("truncated in tensor `{}`", t.name)));
        }
        let (chunk, tail) = data.split_at(len);
        data = tail;
        let values = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let tensor = Tensor::from_vec(&t.shape, values).map_err(|e| corrupt(format!("tensor `{}`: {e}", t.name)))?;
        params.push((t.name.clone(), tensor));
    }
    if !data.is_empty() {
        return Err(corrupt(format!("{} trailing bytes", data.len())));
    }
    let ck = Checkpoint {
        tag,
        epoch: manifest.epoch,
        seed: manifest.seed,
        config,
        vocab_fingerprint: manifest.vocab_fingerprint,
        params,
    };
    // Names and shapes must fit the architecture.
    ck.model()?;
    Ok(ck)
}
