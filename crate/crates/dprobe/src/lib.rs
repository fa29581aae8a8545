//! File formats, configuration and the command pipeline around
//! `dprobe_core`.

pub mod checkpoint_io;
pub mod config;
pub mod corpus_io;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod reports;

pub use config::{Config, Overrides};
pub use error::{Error, Result};
pub use pipeline::{run, Command};
