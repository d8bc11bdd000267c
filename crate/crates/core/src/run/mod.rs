//! Command implementations: corpus generation with checkpointed resume,
//! dataset statistics and audits, and model evaluation.

pub mod commands;
pub mod generate;
pub mod providers;
pub mod state;

use std::path::PathBuf;

pub use commands::{cmd_eval, cmd_stats, cmd_validate, EvalSummary};
pub use generate::{cmd_generate, GenerateOptions, GenerateSummary};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Perception(#[from] crate::perception::PerceptionError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error("provider setup failed: {0}")]
    Provider(String),
    #[error("corrupt run state in {}: {message}", path.display())]
    CorruptState { path: PathBuf, message: String },
    #[error("{0}")]
    Resume(String),
    #[error("i/o failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
