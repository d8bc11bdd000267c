//! `generate`: corpus to dataset with per-chunk checkpoints.
//!
//! Chunks run on a worker pool, but records are appended to the dataset in
//! corpus order (document, then chunk) by a single committer, so the output
//! depends only on the inputs, the seed and the model replies. A chunk is
//! committed by appending its records, syncing, and then recording the new
//! dataset length in the state file.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use serde_json::json;

use super::providers::{self, Perception};
use super::state::{
    load_checkpoint, store_checkpoint, truncate_dataset, write_atomic, Checkpoint, ChunkStage,
    RunState, DATASET_FILE, IMAGES_DIR, PERCEPTION_DIR, REJECTED_FILE, TRANSCRIPT_FILE,
};
use super::RunError;
use crate::agents::{run_chain, AgentContext, AgentError, Policy, PromptSet};
use crate::config::RunConfig;
use crate::dataset::append_records;
use crate::hashing::sha256_hex;
use crate::ingest::{
    chunk_document, filter_corpus, load_corpus, load_page_images, rasterize, write_page_images,
    Chunk, Document, PageImage,
};
use crate::perception::cache::{load_perception, store_perception};
use crate::perception::{chunk_context, perceive_pages, ChunkContext, DocPerception};

/// Called after each committed chunk with the chunk id and the number of
/// chunks committed so far in this invocation.
pub type CommitHook = Box<dyn Fn(&str, usize) + Send + Sync>;

#[derive(Default)]
pub struct GenerateOptions {
    /// Overrides the configured worker count.
    pub workers: Option<usize>,
    /// Discard earlier run artifacts first.
    pub fresh: bool,
    /// Fail unless there is a run to resume.
    pub require_resume: bool,
    pub on_commit: Option<CommitHook>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerateSummary {
    pub documents: usize,
    pub rejected_documents: usize,
    pub chunks: usize,
    /// Chunks already committed by an earlier invocation.
    pub skipped_chunks: usize,
    pub committed_chunks: usize,
    pub failed: Vec<(String, String)>,
    pub records_added: u64,
    pub records_total: u64,
}

/// Hash of every setting that shapes the dataset. Worker counts, limits and
/// endpoints are excluded so a run can resume with different ones.
pub fn fingerprint(config: &RunConfig) -> String {
    let shape = json!({
        "seed": config.seed,
        "chunk_size": config.chunk_size,
        "overlap": config.overlap,
        "dpi": config.dpi,
        "min_pages": config.min_pages,
        "allowed_licenses": config.allowed_licenses,
        "max_iterations": config.max_iterations,
        "policy": config.policy,
        "agents": config.agents,
        "tolerances": config.eval.tolerances,
        "model": config.providers.agents.model_id(),
        "prompts": config.prompts,
    });
    sha256_hex(shape.to_string().as_bytes())
}

fn open_state(config: &RunConfig, opts: &GenerateOptions) -> Result<RunState, RunError> {
    let run_dir = &config.run_dir;
    fs::create_dir_all(run_dir).map_err(|source| RunError::Io {
        path: run_dir.clone(),
        source,
    })?;
    if opts.fresh {
        super::state::clear_run_dir(run_dir)?;
    }
    let fp = fingerprint(config);
    match RunState::load(run_dir)? {
        Some(state) => {
            if state.fingerprint != fp {
                return Err(RunError::Resume(format!(
                    "{} was produced with different settings; rerun with --fresh to start over",
                    run_dir.display()
                )));
            }
            truncate_dataset(run_dir, state.committed_bytes)?;
            tracing::info!(
                committed_records = state.committed_records,
                validated = state.count(ChunkStage::Validated),
                "resuming run"
            );
            Ok(state)
        }
        None if opts.require_resume => Err(RunError::Resume(format!(
            "nothing to resume in {}",
            run_dir.display()
        ))),
        None => {
            let dataset = run_dir.join(DATASET_FILE);
            if fs::metadata(&dataset).is_ok_and(|m| m.len() > 0) {
                return Err(RunError::Resume(format!(
                    "{} exists without run state; rerun with --fresh to start over",
                    dataset.display()
                )));
            }
            Ok(RunState::new(fp))
        }
    }
}

fn page_images(doc: &Document, run_dir: &Path, dpi: u32) -> Result<Vec<PageImage>, RunError> {
    let dir = run_dir.join(IMAGES_DIR).join(&doc.doc_id);
    if let Some(images) = load_page_images(&dir, &doc.doc_id, dpi, 1..=doc.page_count) {
        return Ok(images);
    }
    let images = rasterize(doc, dpi)?;
    write_page_images(&images, &dir)?;
    Ok(images)
}

fn doc_perception(
    doc: &Document,
    images: &[PageImage],
    run_dir: &Path,
    perception: &Perception,
    workers: usize,
) -> Result<DocPerception, RunError> {
    let dir = run_dir.join(PERCEPTION_DIR).join(&doc.doc_id);
    if let Some(cached) = load_perception(&dir, &doc.doc_id, doc.page_count) {
        return Ok(cached);
    }
    let fresh = perceive_pages(
        images,
        perception.ocr.as_ref(),
        perception.layout.as_ref(),
        workers,
    )?;
    store_perception(&dir, doc.page_count, &fresh)?;
    Ok(fresh)
}

enum Job {
    Done,
    Ready(Result<Checkpoint, String>),
    Run(ChunkContext),
}

struct Committer<'a> {
    run_dir: &'a Path,
    state: RunState,
    summary: GenerateSummary,
    hook: Option<&'a CommitHook>,
}

impl Committer<'_> {
    fn commit(
        &mut self,
        chunk: &Chunk,
        result: Result<Checkpoint, String>,
    ) -> Result<(), RunError> {
        let checkpoint = match result {
            Ok(c) => c,
            Err(message) => {
                tracing::error!(chunk = %chunk.chunk_id, "chunk failed: {message}");
                self.state.set(
                    &chunk.chunk_id,
                    &chunk.doc_id,
                    ChunkStage::Failed,
                    Some(message.clone()),
                );
                self.state.save(self.run_dir)?;
                self.summary.failed.push((chunk.chunk_id.clone(), message));
                return Ok(());
            }
        };
        let dataset = self.run_dir.join(DATASET_FILE);
        if !checkpoint.rejected.is_empty() {
            let path = self.run_dir.join(REJECTED_FILE);
            let mut file = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|source| RunError::Io {
                    path: path.clone(),
                    source,
                })?;
            for (draft_id, reason) in &checkpoint.rejected {
                let line =
                    json!({"chunk_id": chunk.chunk_id, "draft_id": draft_id, "reason": reason});
                writeln!(file, "{line}").map_err(|source| RunError::Io {
                    path: path.clone(),
                    source,
                })?;
            }
        }
        if !checkpoint.records.is_empty() {
            append_records(&checkpoint.records, &dataset)?;
        }
        let len = fs::metadata(&dataset).map_or(0, |m| m.len());
        let n = checkpoint.records.len() as u64;
        self.state.committed_bytes = len;
        self.state.committed_records += n;
        self.state
            .set(&chunk.chunk_id, &chunk.doc_id, ChunkStage::Validated, None);
        if let Some(entry) = self.state.chunks.get_mut(&chunk.chunk_id) {
            entry.records = n as u32;
        }
        self.state.save(self.run_dir)?;
        self.summary.committed_chunks += 1;
        self.summary.records_added += n;
        tracing::info!(chunk = %chunk.chunk_id, records = n, "chunk committed");
        if let Some(hook) = self.hook {
            hook(&chunk.chunk_id, self.summary.committed_chunks);
        }
        Ok(())
    }
}

fn chain_chunk(
    agent: &AgentContext<'_>,
    ctx: &ChunkContext,
    policy: &Policy,
    run_dir: &Path,
) -> Result<Checkpoint, String> {
    let checkpoint = match run_chain(agent, ctx, policy) {
        Ok(outcome) => Checkpoint {
            chunk_id: ctx.chunk.chunk_id.clone(),
            records: outcome.records,
            rejected: outcome.rejected,
            trace: outcome.trace,
        },
        Err(AgentError::ChainExhausted {
            iterations,
            reasons,
            ..
        }) => {
            // Pages with nothing to ask about: the chunk completes empty.
            tracing::warn!(chunk = %ctx.chunk.chunk_id, iterations, ?reasons, "no questions survived any iteration");
            Checkpoint {
                chunk_id: ctx.chunk.chunk_id.clone(),
                records: vec![],
                rejected: vec![],
                trace: Default::default(),
            }
        }
        Err(e) => return Err(e.to_string()),
    };
    store_checkpoint(run_dir, &checkpoint).map_err(|e| e.to_string())?;
    Ok(checkpoint)
}

pub fn cmd_generate(
    config: &RunConfig,
    opts: &GenerateOptions,
) -> Result<GenerateSummary, RunError> {
    config.validate()?;
    let run_dir = config.run_dir.as_path();
    let state = open_state(config, opts)?;
    let prompts =
        PromptSet::load(&config.prompts).map_err(|e| crate::config::ConfigError::Invalid {
            keys: vec!["prompts".into()],
            message: e.to_string(),
        })?;
    let settings = config.chain_settings();
    let workers = config.worker_count(opts.workers);

    let outcome = filter_corpus(
        load_corpus(&config.corpus_manifest)?,
        config.min_pages,
        config.allowed_licenses.as_deref(),
    );
    for (doc, reason) in &outcome.rejected {
        tracing::info!(path = %doc.path.display(), ?reason, "document excluded");
    }
    let transport = providers::model_transport(&config.providers.agents, &config.seed)?;
    let gateway = providers::gateway(transport, &config.limits, &run_dir.join(TRANSCRIPT_FILE))?;
    let perception = providers::perception(
        &config.providers.perception,
        &outcome.accepted,
        &config.limits,
        &run_dir.join(PERCEPTION_DIR).join(TRANSCRIPT_FILE),
    )?;
    let agent = AgentContext {
        gateway: &gateway,
        prompts: &prompts,
        settings: &settings,
    };

    let mut committer = Committer {
        run_dir,
        state,
        summary: GenerateSummary {
            documents: outcome.accepted.len(),
            rejected_documents: outcome.rejected.len(),
            ..Default::default()
        },
        hook: opts.on_commit.as_ref(),
    };

    for doc in &outcome.accepted {
        let chunks = chunk_document(doc, config.chunk_size, config.overlap)?;
        committer.summary.chunks += chunks.len();
        let mut jobs: Vec<Option<Job>> = chunks
            .iter()
            .map(|c| {
                Some(
                    if committer.state.stage(&c.chunk_id) == ChunkStage::Validated {
                        Job::Done
                    } else if let Some(cp) = load_checkpoint(run_dir, &c.chunk_id) {
                        Job::Ready(Ok(cp))
                    } else {
                        Job::Done
                    },
                )
            })
            .collect();
        let pending: Vec<usize> = chunks
            .iter()
            .enumerate()
            .filter(|(i, c)| {
                committer.state.stage(&c.chunk_id) != ChunkStage::Validated
                    && !matches!(jobs[*i], Some(Job::Ready(_)))
            })
            .map(|(i, _)| i)
            .collect();
        committer.summary.skipped_chunks += chunks
            .iter()
            .filter(|c| committer.state.stage(&c.chunk_id) == ChunkStage::Validated)
            .count();

        if !pending.is_empty() {
            let prepared = page_images(doc, run_dir, config.dpi).and_then(|images| {
                Ok((
                    doc_perception(doc, &images, run_dir, &perception, workers)?,
                    images,
                ))
            });
            match prepared {
                Ok((perceived, images)) => {
                    for &i in &pending {
                        let chunk = &chunks[i];
                        jobs[i] = Some(match chunk_context(chunk, &images, &perceived) {
                            Ok(ctx) => Job::Run(ctx),
                            Err(e) => Job::Ready(Err(e.to_string())),
                        });
                        committer.state.set(
                            &chunk.chunk_id,
                            &chunk.doc_id,
                            ChunkStage::Perceived,
                            None,
                        );
                    }
                }
                Err(e) => {
                    tracing::error!(doc_id = %doc.doc_id, "document preparation failed: {e}");
                    for &i in &pending {
                        jobs[i] = Some(Job::Ready(Err(e.to_string())));
                    }
                }
            }
            committer.state.save(run_dir)?;
        }

        let mut policy = config.policy.clone();
        policy.language = doc.language;
        run_document(&chunks, jobs, &agent, &policy, workers, &mut committer)?;
    }

    let mut summary = committer.summary;
    summary.records_total = committer.state.committed_records;
    write_atomic(
        &run_dir.join("summary.json"),
        serde_json::to_string_pretty(&json!({
            "documents": summary.documents,
            "rejected_documents": summary.rejected_documents,
            "chunks": summary.chunks,
            "failed_chunks": summary.failed.len(),
            "records": summary.records_total,
        }))
        .expect("json")
        .as_bytes(),
    )?;
    Ok(summary)
}

/// Runs the chains of one document and commits chunks in order as soon as
/// each one and all of its predecessors are finished.
fn run_document(
    chunks: &[Chunk],
    jobs: Vec<Option<Job>>,
    agent: &AgentContext<'_>,
    policy: &Policy,
    workers: usize,
    committer: &mut Committer<'_>,
) -> Result<(), RunError> {
    let mut ready: BTreeMap<usize, Result<Checkpoint, String>> = BTreeMap::new();
    let mut done = vec![false; chunks.len()];
    let mut to_run: Vec<(usize, ChunkContext)> = Vec::new();
    for (i, job) in jobs.into_iter().enumerate() {
        match job.expect("every chunk has a job") {
            Job::Done => done[i] = true,
            Job::Ready(r) => {
                ready.insert(i, r);
            }
            Job::Run(ctx) => to_run.push((i, ctx)),
        }
    }
    let run_dir = committer.run_dir;
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Result<Checkpoint, String>)>();

    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, to_run.len().max(1)).min(to_run.len()) {
            let tx = tx.clone();
            let (next, stop, to_run) = (&next, &stop, &to_run);
            s.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Some((i, ctx)) = to_run.get(next.fetch_add(1, Ordering::SeqCst)) else {
                    break;
                };
                let result = chain_chunk(agent, ctx, policy, run_dir);
                if tx.send((*i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut cursor = 0;
        let outcome = (|| loop {
            while cursor < chunks.len() {
                if done[cursor] {
                    cursor += 1;
                } else if let Some(result) = ready.remove(&cursor) {
                    committer.commit(&chunks[cursor], result)?;
                    cursor += 1;
                } else {
                    break;
                }
            }
            if cursor == chunks.len() {
                return Ok(());
            }
            let Ok((i, result)) = rx.recv() else {
                return Err(RunError::Resume(
                    "chunk workers stopped before finishing".into(),
                ));
            };
            if result.is_ok() {
                let c = &chunks[i];
                committer
                    .state
                    .set(&c.chunk_id, &c.doc_id, ChunkStage::Chained, None);
                committer.state.save(run_dir)?;
            }
            ready.insert(i, result);
        })();
        if outcome.is_err() {
            stop.store(true, Ordering::SeqCst);
        }
        outcome
    })
}
