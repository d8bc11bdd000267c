//! Posing dataset records to a candidate model and scoring the replies.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::abstention::{detect_abstention, UNANSWERABLE_MARKER};
use super::bucket::{bucket_record, Bucket, BucketThresholds};
use crate::dataset::{infer_answer_type, match_answer, QaRecord, Tolerances};
use crate::gateway::{ChatRequest, Gateway, RoleTag};
use crate::ingest::chunk::parse_chunk_id;
use crate::Language;

pub fn eval_system_prompt() -> String {
    format!(
        "You answer questions about a document using only the page images provided. Reply with the bare answer and \
nothing else: a number, a short phrase, yes/no, a list, or JSON as the question requires. If the pages do not \
contain the answer, reply with exactly {UNANSWERABLE_MARKER}."
    )
}

/// Supplies encoded page images for a document.
pub trait PageSource: Sync {
    fn page_png(&self, doc_id: &str, page: u32) -> Result<Vec<u8>, String>;
}

/// Pages shown to the model: the evidence pages, or for unanswerable
/// records every page of the source chunk.
pub fn pages_for(record: &QaRecord) -> Vec<u32> {
    if !record.evidence_pages.is_empty() {
        return record.evidence_pages.clone();
    }
    parse_chunk_id(&record.chunk_id)
        .map(|r| r.pages().collect())
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordResult {
    pub record_id: String,
    pub model: String,
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unscored: Option<String>,
}

pub fn score_response(record: &QaRecord, response: &str, tolerances: &Tolerances) -> bool {
    if record.is_unanswerable() {
        return detect_abstention(response, record.language);
    }
    let answer_type = record
        .answer_type
        .unwrap_or_else(|| infer_answer_type(&record.answer));
    match_answer(response, &record.answer, answer_type, tolerances)
}

fn pose(
    record: &QaRecord,
    gateway: &Gateway,
    model: &str,
    pages: &dyn PageSource,
    tolerances: &Tolerances,
) -> RecordResult {
    let unscored = |reason: String| RecordResult {
        record_id: record.record_id.clone(),
        model: model.to_string(),
        response: None,
        correct: None,
        unscored: Some(reason),
    };
    let page_list = pages_for(record);
    if page_list.is_empty() {
        return unscored("no pages to show".into());
    }
    let mut request = ChatRequest::new(
        RoleTag::EvalModel,
        format!("eval/{model}/{}", record.record_id),
        eval_system_prompt(),
    )
    .text(format!("Question: {}", record.question));
    for page in page_list {
        match pages.page_png(&record.doc_id, page) {
            Ok(png) => request = request.image_png(png),
            Err(e) => return unscored(format!("page image {page}: {e}")),
        }
    }
    request.max_output_tokens = 512;
    match gateway.complete(&request) {
        Ok(response) => RecordResult {
            record_id: record.record_id.clone(),
            model: model.to_string(),
            correct: Some(score_response(record, &response.text, tolerances)),
            response: Some(response.text),
            unscored: None,
        },
        Err(e) => unscored(e.to_string()),
    }
}

/// Evaluates every record with up to `workers` requests in flight. Results
/// come back in input order.
pub fn run_model(
    records: &[QaRecord],
    gateway: &Gateway,
    model: &str,
    pages: &dyn PageSource,
    tolerances: &Tolerances,
    workers: usize,
) -> Vec<RecordResult> {
    let slots: Vec<Mutex<Option<RecordResult>>> =
        records.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, records.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(record) = records.get(i) else { break };
                let result = pose(record, gateway, model, pages, tolerances);
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| {
            s.into_inner()
                .expect("slot lock")
                .expect("every slot filled")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Cell {
    pub records: u32,
    pub attempted: u32,
    pub correct: u32,
}

impl Cell {
    pub fn accuracy(&self) -> Option<f64> {
        (self.attempted > 0).then(|| f64::from(self.correct) / f64::from(self.attempted))
    }

    fn add(&mut self, correct: Option<bool>) {
        self.records += 1;
        if let Some(c) = correct {
            self.attempted += 1;
            self.correct += u32::from(c);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub cells: BTreeMap<(Language, Bucket), Cell>,
    /// Every record counted once.
    pub overall: Cell,
    pub unscored: u32,
}

impl EvalReport {
    pub fn cell(&self, language: Language, bucket: Bucket) -> Cell {
        self.cells
            .get(&(language, bucket))
            .copied()
            .unwrap_or_default()
    }

    pub fn average(&self) -> Option<f64> {
        self.overall.accuracy()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no page count known for document {0}")]
    UnknownDocument(String),
    #[error("result for record {0} has no matching record")]
    UnknownRecord(String),
}

/// Folds per-record results into per-(language, bucket) cells. Unscored
/// results count toward `records` but not `attempted`.
pub fn aggregate(
    model: &str,
    records: &[QaRecord],
    results: &[RecordResult],
    page_counts: &HashMap<String, u32>,
    thresholds: &BucketThresholds,
) -> Result<EvalReport, EvalError> {
    let by_id: HashMap<&str, &RecordResult> =
        results.iter().map(|r| (r.record_id.as_str(), r)).collect();
    if let Some(r) = results
        .iter()
        .find(|r| !records.iter().any(|rec| rec.record_id == r.record_id))
    {
        return Err(EvalError::UnknownRecord(r.record_id.clone()));
    }
    let mut report = EvalReport {
        model: model.to_string(),
        cells: BTreeMap::new(),
        overall: Cell::default(),
        unscored: 0,
    };
    for record in records {
        let pages = *page_counts
            .get(&record.doc_id)
            .ok_or_else(|| EvalError::UnknownDocument(record.doc_id.clone()))?;
        let correct = by_id.get(record.record_id.as_str()).and_then(|r| r.correct);
        if correct.is_none() {
            report.unscored += 1;
        }
        report.overall.add(correct);
        for bucket in bucket_record(record, pages, thresholds).buckets() {
            report
                .cells
                .entry((record.language, bucket))
                .or_default()
                .add(correct);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::record::tests::sample;
    use crate::QuestionType;

    #[test]
    fn scoring_rules() {
        let tol = Tolerances::default();
        let mut r = sample("a");
        r.answer = "42".into();
        r.answer_type = Some(crate::AnswerType::Integer);
        assert!(score_response(&r, "42", &tol));
        assert!(!score_response(&r, "I don't know", &tol));
        r.question_type = QuestionType::Unanswerable;
        assert!(score_response(&r, "UNANSWERABLE", &tol));
        assert!(!score_response(&r, "42", &tol));
    }

    #[test]
    fn unscored_results_leave_denominators() {
        let mut a = sample("a");
        a.doc_id = "d".into();
        let mut b = sample("b");
        b.doc_id = "d".into();
        let results = vec![
            RecordResult {
                record_id: "a".into(),
                model: "m".into(),
                response: Some("x".into()),
                correct: Some(true),
                unscored: None,
            },
            RecordResult {
                record_id: "b".into(),
                model: "m".into(),
                response: None,
                correct: None,
                unscored: Some("503".into()),
            },
        ];
        let counts = HashMap::from([("d".to_string(), 10)]);
        let report = aggregate(
            "m",
            &[a, b],
            &results,
            &counts,
            &BucketThresholds::default(),
        )
        .unwrap();
        assert_eq!(report.unscored, 1);
        assert_eq!(
            report.overall,
            Cell {
                records: 2,
                attempted: 1,
                correct: 1
            }
        );
        assert_eq!(report.average(), Some(1.0));
    }

    #[test]
    fn unanswerable_pages_come_from_chunk() {
        let mut r = sample("a");
        r.question_type = QuestionType::Unanswerable;
        r.evidence_pages.clear();
        r.chunk_id = "0123456789abcdef_0011_0013".into();
        assert_eq!(pages_for(&r), vec![11, 12, 13]);
    }
}
