//! Core algorithms for probing what small generative dialogue models encode.
//!
//! Everything here needs only `alloc`: dense tensors with reverse-mode
//! differentiation, the five encoder-decoder architectures, probe-task label
//! construction, probe classifiers, text metrics, bootstrap statistics and
//! the manifold/difficulty analyses. File formats, the CLI and parallel
//! scheduling live in the `dprobe` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod corpus;
pub mod humaneval;
mod math;
pub mod models;
pub mod probeclf;
pub mod probes;
pub mod seed;
pub mod tensor;
pub mod textmetrics;

pub use corpus::{Corpus, Dialogue, Split, Style, Turn, Vocab};
pub use models::{Checkpoint, CheckpointTag, Model, ModelConfig, ModelKind};
pub use probeclf::{ProbeKind, ProbeResult};
pub use probes::ProbeTask;
pub use tensor::{Tape, Tensor, Var};
