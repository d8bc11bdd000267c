use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use longdoc_qa::config::{ModelProvider, PerceptionProvider, Providers, RunConfig};
use longdoc_qa::eval::ReportFormat;
use longdoc_qa::run::state::DATASET_FILE;
use longdoc_qa::run::{cmd_eval, cmd_generate, cmd_stats, cmd_validate, GenerateOptions};
use longdoc_qa::synth::{write_fixture_corpus, FixtureDoc};
use longdoc_qa::Language;
use tracing_subscriber::EnvFilter;

/// Crash-testing hook: abort the process after this many chunk commits.
const ABORT_AFTER_ENV: &str = "LONGDOC_QA_ABORT_AFTER_COMMITS";

#[derive(Parser)]
#[command(
    name = "longdoc-qa",
    version,
    about = "Question generation and evaluation over long PDF documents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run_dir` from the configuration.
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(dir) = &self.run_dir {
            config.run_dir = dir.clone();
        }
        Ok(config)
    }
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long, conflicts_with = "run_dir", required_unless_present_any = ["run_dir", "dataset"])]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "dataset")]
    run_dir: Option<PathBuf>,
    /// A dataset file outside any run directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

impl DatasetArgs {
    fn dataset(&self) -> Result<PathBuf> {
        if let Some(path) = &self.dataset {
            return Ok(path.clone());
        }
        if let Some(dir) = &self.run_dir {
            return Ok(dir.join(DATASET_FILE));
        }
        let config = self
            .config
            .as_ref()
            .context("one of --config, --run-dir or --dataset is required")?;
        Ok(RunConfig::load(config)?.run_dir.join(DATASET_FILE))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StatsFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalFormat {
    Text,
    Markdown,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Build the dataset for the configured corpus, resuming an interrupted run.
    Generate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        workers: Option<usize>,
        /// Discard earlier run artifacts and start over.
        #[arg(long, conflicts_with = "resume")]
        fresh: bool,
        /// Require an existing run to continue.
        #[arg(long)]
        resume: bool,
    },
    /// Question-type, answer-type and language breakdowns of a dataset.
    Stats {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[arg(long, value_enum, default_value = "text")]
        format: StatsFormat,
    },
    /// Check every record against the schema and dataset invariants.
    Validate {
        #[command(flatten)]
        dataset: DatasetArgs,
    },
    /// Pose the dataset to the configured evaluation model.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum, default_value = "text")]
        format: EvalFormat,
    },
    /// Write a synthetic corpus with perception scripts and a matching config.
    Synth {
        /// Output directory; the run directory is created inside it.
        #[arg(long)]
        out: PathBuf,
        /// Page counts, one document each.
        #[arg(long, value_delimiter = ',', default_value = "15,77,250")]
        pages: Vec<u32>,
        /// Make every other document Arabic.
        #[arg(long)]
        bilingual: bool,
        #[arg(long, default_value = "synthetic")]
        seed: String,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn abort_hook() -> Result<Option<longdoc_qa::run::generate::CommitHook>> {
    let Ok(value) = std::env::var(ABORT_AFTER_ENV) else {
        return Ok(None);
    };
    let limit: usize = value
        .parse()
        .with_context(|| format!("{ABORT_AFTER_ENV}={value} is not a count"))?;
    Ok(Some(Box::new(move |_, committed| {
        if committed >= limit {
            std::process::abort();
        }
    })))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate {
            run,
            workers,
            fresh,
            resume,
        } => {
            let config = run.load()?;
            let opts = GenerateOptions {
                workers,
                fresh,
                require_resume: resume,
                on_commit: abort_hook()?,
            };
            let summary = cmd_generate(&config, &opts)?;
            println!(
                "documents: {} ({} excluded)\nchunks: {} ({} committed now, {} already done, {} failed)\nrecords: {} (+{})",
                summary.documents,
                summary.rejected_documents,
                summary.chunks,
                summary.committed_chunks,
                summary.skipped_chunks,
                summary.failed.len(),
                summary.records_total,
                summary.records_added,
            );
            for (chunk, reason) in &summary.failed {
                println!("failed {chunk}: {reason}");
            }
            Ok(if summary.failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Stats { dataset, format } => {
            let report = cmd_stats(&dataset.dataset()?)?;
            match format {
                StatsFormat::Text => print!("{}", report.to_table()),
                StatsFormat::Json => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { dataset } => {
            let path = dataset.dataset()?;
            let violations = cmd_validate(&path)?;
            for (id, message) in &violations {
                println!("{id}: {message}");
            }
            if violations.is_empty() {
                println!("{}: ok", path.display());
                Ok(ExitCode::SUCCESS)
            } else {
                println!("{} violation(s)", violations.len());
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Eval {
            run,
            workers,
            format,
        } => {
            let config = run.load()?;
            let format = match format {
                EvalFormat::Text => ReportFormat::Text,
                EvalFormat::Markdown => ReportFormat::Markdown,
                EvalFormat::Csv => ReportFormat::Csv,
            };
            let summary = cmd_eval(&config, format, workers)?;
            print!("{}", summary.rendered);
            eprintln!(
                "results: {}\nreport: {}",
                summary.results_path.display(),
                summary.report_path.display()
            );
            if summary.report.unscored > 0 {
                eprintln!("{} record(s) could not be scored", summary.report.unscored);
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth {
            out,
            pages,
            bilingual,
            seed,
        } => {
            synth(&out, &pages, bilingual, &seed)?;
            println!("wrote {}", out.join("config.toml").display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn synth(out: &Path, pages: &[u32], bilingual: bool, seed: &str) -> Result<()> {
    if pages.is_empty() || pages.contains(&0) {
        bail!("--pages needs positive page counts");
    }
    let docs: Vec<FixtureDoc> = pages
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let language = if bilingual && i % 2 == 1 {
                Language::Arabic
            } else {
                Language::English
            };
            let stem: String =
                format!("doc{}", char::from(b'a' + (i % 26) as u8)).repeat(1 + i / 26);
            FixtureDoc::new(&stem, n, language)
        })
        .collect();
    let corpus_dir = out.join("corpus");
    let mut config = RunConfig::new(
        "corpus/manifest.jsonl".into(),
        "run".into(),
        seed,
        Providers {
            agents: ModelProvider::Synthetic { accuracy: None },
            perception: PerceptionProvider::Mock {
                scripts_dir: Some("corpus/scripts".into()),
            },
            eval: Some(ModelProvider::Synthetic { accuracy: None }),
        },
    );
    write_fixture_corpus(&corpus_dir, &docs, config.dpi)?;
    config.allowed_licenses = Some(vec!["cc-by-4.0".into()]);
    std::fs::write(out.join("config.toml"), config.to_toml())?;
    Ok(())
}
