//! Append-only JSONL log of every completed model call.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::RoleTag;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_id: String,
    pub role_tag: RoleTag,
    pub prompt_hash: String,
    pub response_text: String,
    pub attempts: u32,
}

#[derive(Debug)]
pub struct Transcript {
    path: PathBuf,
    file: Mutex<File>,
}

impl Transcript {
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: &TranscriptEntry) -> io::Result<()> {
        let mut line = serde_json::to_string(entry).map_err(io::Error::other)?;
        line.push('\n');
        let mut file = self.file.lock().expect("transcript lock");
        file.write_all(line.as_bytes())?;
        file.flush()
    }
}

/// Reads a transcript, skipping a torn final line left by a crash.
pub fn read_transcript(path: &Path) -> io::Result<Vec<TranscriptEntry>> {
    let reader = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(entry) => entries.push(entry),
            Err(e) => {
                tracing::warn!(path = %path.display(), line = i + 1, error = %e, "skipping unreadable transcript line")
            }
        }
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.log");
        let t = Transcript::open(&path).unwrap();
        let e = TranscriptEntry {
            request_id: "r1".into(),
            role_tag: RoleTag::Agent1,
            prompt_hash: "abc".into(),
            response_text: "مرحبا\n{}".into(),
            attempts: 2,
        };
        t.append(&e).unwrap();
        t.append(&e).unwrap();
        std::fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .unwrap()
            .write_all(b"{\"torn")
            .unwrap();
        assert_eq!(read_transcript(&path).unwrap(), vec![e.clone(), e]);
    }
}
