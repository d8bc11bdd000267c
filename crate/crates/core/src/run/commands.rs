//! `stats`, `validate` and `eval`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::providers;
use super::state::{write_atomic, DATASET_FILE, EVAL_DIR, IMAGES_DIR, TRANSCRIPT_FILE};
use super::RunError;
use crate::config::RunConfig;
use crate::dataset::{audit_records, dataset_stats, read_records, QaRecord, StatsReport};
use crate::eval::{aggregate, render_report, run_model, EvalReport, PageSource, ReportFormat};
use crate::ingest::chunk::parse_chunk_id;
use crate::ingest::{load_corpus, rasterize, Document};

pub fn cmd_stats(dataset: &Path) -> Result<StatsReport, RunError> {
    Ok(dataset_stats(&read_records(dataset)?))
}

/// Schema and invariant violations as `(record_id, message)` pairs.
pub fn cmd_validate(dataset: &Path) -> Result<Vec<(String, String)>, RunError> {
    let records = read_records(dataset)?;
    let mut out: Vec<(String, String)> = audit_records(&records)
        .into_iter()
        .map(|(id, v)| (id, v.to_string()))
        .collect();
    for record in &records {
        let Some(range) = parse_chunk_id(&record.chunk_id) else {
            out.push((
                record.record_id.clone(),
                format!("chunk_id `{}` is malformed", record.chunk_id),
            ));
            continue;
        };
        if !record
            .doc_id
            .starts_with(record.chunk_id.split('_').next().unwrap_or_default())
        {
            out.push((
                record.record_id.clone(),
                "chunk_id does not belong to doc_id".into(),
            ));
        }
        for page in record
            .evidence_pages
            .iter()
            .filter(|p| !range.contains(**p))
        {
            out.push((
                record.record_id.clone(),
                format!(
                    "evidence page {page} outside chunk pages {}..{}",
                    range.start, range.end
                ),
            ));
        }
    }
    Ok(out)
}

/// Page images from the run directory, rasterizing a document from the
/// corpus when its images are missing.
struct RunPages<'a> {
    run_dir: &'a Path,
    dpi: u32,
    documents: HashMap<String, Document>,
    rendered: Mutex<HashMap<String, HashMap<u32, Vec<u8>>>>,
}

impl PageSource for RunPages<'_> {
    fn page_png(&self, doc_id: &str, page: u32) -> Result<Vec<u8>, String> {
        let path = self
            .run_dir
            .join(IMAGES_DIR)
            .join(doc_id)
            .join(format!("{page}.png"));
        if let Ok(bytes) = fs::read(&path) {
            return Ok(bytes);
        }
        let mut rendered = self.rendered.lock().expect("page cache lock");
        if !rendered.contains_key(doc_id) {
            let doc = self
                .documents
                .get(doc_id)
                .ok_or_else(|| format!("document {doc_id} is not in the corpus"))?;
            let images = rasterize(doc, self.dpi).map_err(|e| e.to_string())?;
            rendered.insert(
                doc_id.to_string(),
                images.into_iter().map(|i| (i.page_index, i.png)).collect(),
            );
        }
        rendered[doc_id]
            .get(&page)
            .cloned()
            .ok_or_else(|| format!("document {doc_id} has no page {page}"))
    }
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub report: EvalReport,
    pub rendered: String,
    pub results_path: PathBuf,
    pub report_path: PathBuf,
}

pub fn cmd_eval(
    config: &RunConfig,
    format: ReportFormat,
    workers: Option<usize>,
) -> Result<EvalSummary, RunError> {
    let provider = config.providers.eval.as_ref().ok_or_else(|| {
        RunError::Config(crate::config::ConfigError::Invalid {
            keys: vec!["providers.eval".into()],
            message: "required for eval".into(),
        })
    })?;
    let run_dir = config.run_dir.as_path();
    let records: Vec<QaRecord> = read_records(&run_dir.join(DATASET_FILE))?;
    let documents: HashMap<String, Document> = load_corpus(&config.corpus_manifest)?
        .into_iter()
        .map(|d| (d.doc_id.clone(), d))
        .collect();
    let page_counts: HashMap<String, u32> = documents
        .iter()
        .map(|(id, d)| (id.clone(), d.page_count))
        .collect();
    let eval_dir = run_dir.join(EVAL_DIR);
    let transport = providers::model_transport(provider, &config.seed)?;
    let gateway = providers::gateway(transport, &config.limits, &eval_dir.join(TRANSCRIPT_FILE))?;
    let pages = RunPages {
        run_dir,
        dpi: config.dpi,
        documents,
        rendered: Mutex::new(HashMap::new()),
    };
    let model = provider.model_id();
    let results = run_model(
        &records,
        &gateway,
        &model,
        &pages,
        &config.eval.tolerances,
        config.worker_count(workers),
    );
    let report = aggregate(
        &model,
        &records,
        &results,
        &page_counts,
        &config.eval.thresholds,
    )?;

    let results_path = eval_dir.join("results.jsonl");
    let mut lines = String::new();
    for r in &results {
        lines.push_str(&serde_json::to_string(r).expect("result serializes"));
        lines.push('\n');
    }
    write_atomic(&results_path, lines.as_bytes())?;
    let rendered = render_report(&report, format);
    let report_path = eval_dir.join(format!("report.{}", format.extension()));
    write_atomic(&report_path, rendered.as_bytes())?;
    Ok(EvalSummary {
        report,
        rendered,
        results_path,
        report_path,
    })
}
