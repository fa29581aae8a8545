use std::path::{Path, PathBuf};

use dprobe_core::analysis::AnalysisError;
use dprobe_core::corpus::CorpusError;
use dprobe_core::humaneval::HumanEvalError;
use dprobe_core::models::ModelError;
use dprobe_core::probeclf::EvaluateError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Corpus { path: PathBuf, source: CorpusError },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Evaluate(#[from] EvaluateError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    HumanEval(#[from] HumanEvalError),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
