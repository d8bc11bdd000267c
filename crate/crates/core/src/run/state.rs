//! Durable run state: `state.json` plus one checkpoint per chained chunk.
//!
//! The dataset is append-only. `committed_bytes` is the length of the
//! dataset after the last fully committed chunk; anything beyond it is a
//! torn write and is truncated on resume.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::agents::{ChainTrace, RejectReason};
use crate::dataset::QaRecord;

pub const STATE_FILE: &str = "state.json";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const IMAGES_DIR: &str = "images";
pub const PERCEPTION_DIR: &str = "perception";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const REJECTED_FILE: &str = "rejected.jsonl";
pub const EVAL_DIR: &str = "eval";

/// Everything `--fresh` removes. Other files in the run directory are left
/// alone.
pub const RUN_ARTIFACTS: [&str; 8] = [
    STATE_FILE,
    DATASET_FILE,
    CHECKPOINT_DIR,
    IMAGES_DIR,
    PERCEPTION_DIR,
    TRANSCRIPT_FILE,
    REJECTED_FILE,
    EVAL_DIR,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkStage {
    Pending,
    Perceived,
    /// The chain finished and its records sit in a checkpoint.
    Chained,
    /// The records are part of the committed dataset.
    Validated,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkState {
    pub doc_id: String,
    pub stage: ChunkStage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub records: u32,
    pub updated_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    /// Hash of the settings that shape the dataset; a resumed run must match.
    pub fingerprint: String,
    pub committed_bytes: u64,
    pub committed_records: u64,
    pub chunks: BTreeMap<String, ChunkState>,
    pub started_at: u64,
    pub updated_at: u64,
}

pub fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a temporary file and a rename so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(parent).map_err(io_err(parent))?;
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        file.write_all(bytes).map_err(io_err(&tmp))?;
        file.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl RunState {
    pub fn new(fingerprint: String) -> Self {
        let t = now();
        Self {
            fingerprint,
            committed_bytes: 0,
            committed_records: 0,
            chunks: BTreeMap::new(),
            started_at: t,
            updated_at: t,
        }
    }

    pub fn load(run_dir: &Path) -> Result<Option<Self>, RunError> {
        let path = run_dir.join(STATE_FILE);
        match fs::read(&path) {
            Ok(bytes) => {
                serde_json::from_slice(&bytes)
                    .map(Some)
                    .map_err(|e| RunError::CorruptState {
                        path,
                        message: e.to_string(),
                    })
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(RunError::Io { path, source }),
        }
    }

    pub fn save(&mut self, run_dir: &Path) -> Result<(), RunError> {
        self.updated_at = now();
        let bytes = serde_json::to_vec_pretty(self).expect("state serializes");
        write_atomic(&run_dir.join(STATE_FILE), &bytes)
    }

    pub fn stage(&self, chunk_id: &str) -> ChunkStage {
        self.chunks
            .get(chunk_id)
            .map_or(ChunkStage::Pending, |c| c.stage)
    }

    pub fn set(&mut self, chunk_id: &str, doc_id: &str, stage: ChunkStage, error: Option<String>) {
        let entry = self
            .chunks
            .entry(chunk_id.to_string())
            .or_insert_with(|| ChunkState {
                doc_id: doc_id.to_string(),
                stage,
                error: None,
                records: 0,
                updated_at: 0,
            });
        entry.stage = stage;
        entry.error = error;
        entry.updated_at = now();
    }

    pub fn count(&self, stage: ChunkStage) -> usize {
        self.chunks.values().filter(|c| c.stage == stage).count()
    }
}

/// Result of one chunk's chain, kept until the chunk is committed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub chunk_id: String,
    pub records: Vec<QaRecord>,
    pub rejected: Vec<(String, RejectReason)>,
    pub trace: ChainTrace,
}

pub fn checkpoint_path(run_dir: &Path, chunk_id: &str) -> PathBuf {
    run_dir
        .join(CHECKPOINT_DIR)
        .join(format!("{chunk_id}.json"))
}

pub fn store_checkpoint(run_dir: &Path, checkpoint: &Checkpoint) -> Result<(), RunError> {
    let bytes = serde_json::to_vec(checkpoint).expect("checkpoint serializes");
    write_atomic(&checkpoint_path(run_dir, &checkpoint.chunk_id), &bytes)
}

/// `None` when the checkpoint is missing or unreadable.
pub fn load_checkpoint(run_dir: &Path, chunk_id: &str) -> Option<Checkpoint> {
    let bytes = fs::read(checkpoint_path(run_dir, chunk_id)).ok()?;
    let checkpoint: Checkpoint = serde_json::from_slice(&bytes).ok()?;
    (checkpoint.chunk_id == chunk_id).then_some(checkpoint)
}

/// Drops any bytes past the last commit. A dataset shorter than the
/// recorded length means committed data was lost.
pub fn truncate_dataset(run_dir: &Path, committed_bytes: u64) -> Result<(), RunError> {
    let path = run_dir.join(DATASET_FILE);
    let len = match fs::metadata(&path) {
        Ok(m) => m.len(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => 0,
        Err(source) => return Err(RunError::Io { path, source }),
    };
    if len < committed_bytes {
        return Err(RunError::CorruptState {
            path,
            message: format!("dataset holds {len} bytes but {committed_bytes} were committed"),
        });
    }
    if len > committed_bytes {
        tracing::warn!(
            dropped = len - committed_bytes,
            "truncating uncommitted dataset tail"
        );
        let file = fs::OpenOptions::new()
            .write(true)
            .open(&path)
            .map_err(io_err(&path))?;
        file.set_len(committed_bytes).map_err(io_err(&path))?;
        file.sync_all().map_err(io_err(&path))?;
    }
    Ok(())
}

/// Removes the known run artifacts and nothing else.
pub fn clear_run_dir(run_dir: &Path) -> Result<(), RunError> {
    for name in RUN_ARTIFACTS {
        let path = run_dir.join(name);
        let result = if path.is_dir() {
            fs::remove_dir_all(&path)
        } else {
            fs::remove_file(&path)
        };
        match result {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(source) => return Err(RunError::Io { path, source }),
        }
    }
    Ok(())
}
