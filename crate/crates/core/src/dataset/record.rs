//! The output tuple and its line-delimited JSON serialization.

use std::collections::HashSet;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::taxonomy::{AnswerType, Language, QuestionType, RegionCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceSource {
    pub page: u32,
    pub category: RegionCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validation {
    Approved,
}

/// One validated question/answer tuple.
///
/// `answer_type` is `None` for records that carry no typed answer
/// (unanswerable questions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaRecord {
    pub record_id: String,
    pub doc_id: String,
    pub chunk_id: String,
    pub language: Language,
    pub question: String,
    pub answer: String,
    pub answer_type: Option<AnswerType>,
    pub question_type: QuestionType,
    pub evidence_pages: Vec<u32>,
    pub evidence_sources: Vec<EvidenceSource>,
    pub justification: String,
    pub validation: Validation,
    pub iteration_count: u32,
    pub max_iterations_reached: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordViolation {
    EmptyRecordId,
    EmptyQuestion,
    EmptyJustification,
    MissingEvidence,
    EvidenceOnUnanswerable,
    UnsortedEvidence,
    PageZero,
    SourceOutsideEvidence(u32),
    ZeroIterations,
    DuplicateRecordId,
}

impl fmt::Display for RecordViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordViolation::EmptyRecordId => f.write_str("record_id is empty"),
            RecordViolation::EmptyQuestion => f.write_str("question is empty"),
            RecordViolation::EmptyJustification => f.write_str("justification is empty"),
            RecordViolation::MissingEvidence => {
                f.write_str("answerable question has no evidence_pages")
            }
            RecordViolation::EvidenceOnUnanswerable => {
                f.write_str("unanswerable question carries evidence")
            }
            RecordViolation::UnsortedEvidence => {
                f.write_str("evidence_pages not strictly ascending")
            }
            RecordViolation::PageZero => f.write_str("evidence page 0 (pages are 1-based)"),
            RecordViolation::SourceOutsideEvidence(p) => {
                write!(f, "evidence source on page {p} not in evidence_pages")
            }
            RecordViolation::ZeroIterations => f.write_str("iteration_count must be positive"),
            RecordViolation::DuplicateRecordId => f.write_str("record_id appears more than once"),
        }
    }
}

impl QaRecord {
    pub fn is_unanswerable(&self) -> bool {
        self.question_type == QuestionType::Unanswerable
    }

    /// Invariant checks local to a single record.
    pub fn violations(&self) -> Vec<RecordViolation> {
        let mut out = Vec::new();
        if self.record_id.trim().is_empty() {
            out.push(RecordViolation::EmptyRecordId);
        }
        if self.question.trim().is_empty() {
            out.push(RecordViolation::EmptyQuestion);
        }
        if self.justification.trim().is_empty() {
            out.push(RecordViolation::EmptyJustification);
        }
        if self.is_unanswerable() {
            if !self.evidence_pages.is_empty() || !self.evidence_sources.is_empty() {
                out.push(RecordViolation::EvidenceOnUnanswerable);
            }
        } else if self.evidence_pages.is_empty() {
            out.push(RecordViolation::MissingEvidence);
        }
        if self.evidence_pages.windows(2).any(|w| w[0] >= w[1]) {
            out.push(RecordViolation::UnsortedEvidence);
        }
        if self.evidence_pages.contains(&0) {
            out.push(RecordViolation::PageZero);
        }
        for source in &self.evidence_sources {
            if !self.evidence_pages.contains(&source.page) {
                out.push(RecordViolation::SourceOutsideEvidence(source.page));
            }
        }
        if self.iteration_count == 0 {
            out.push(RecordViolation::ZeroIterations);
        }
        out
    }
}

/// Every violation in a record set, including cross-record ones, keyed by
/// record_id.
pub fn audit_records(records: &[QaRecord]) -> Vec<(String, RecordViolation)> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in records {
        for v in record.violations() {
            out.push((record.record_id.clone(), v));
        }
        if !seen.insert(record.record_id.as_str()) {
            out.push((record.record_id.clone(), RecordViolation::DuplicateRecordId));
        }
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("line {line}: schema violation: {message}")]
    SchemaViolation { line: usize, message: String },
    #[error("i/o failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn record_line(record: &QaRecord) -> String {
    serde_json::to_string(record).expect("records always serialize")
}

/// Overwrites `path` with one JSON line per record.
pub fn write_records(records: &[QaRecord], path: &Path) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for record in records {
        writeln!(out, "{}", record_line(record)).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Appends records and syncs them to disk before returning.
pub fn append_records(records: &[QaRecord], path: &Path) -> Result<(), DatasetError> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for record in records {
        writeln!(out, "{}", record_line(record)).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))?;
    out.get_ref().sync_data().map_err(io_err(path))
}

pub fn read_records(path: &Path) -> Result<Vec<QaRecord>, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_records(BufReader::new(file)).map_err(|e| match e {
        DatasetError::Io { source, .. } => DatasetError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Blank lines are skipped; line numbers are 1-based.
pub fn parse_records(reader: impl BufRead) -> Result<Vec<QaRecord>, DatasetError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: PathBuf::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| DatasetError::SchemaViolation {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}
