//! Run configuration: a TOML file with an explicit schema.
//!
//! Unknown keys are rejected and every numeric setting is range-checked at
//! startup; errors name the offending keys. Relative paths resolve against
//! the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::prompts::{PromptPaths, PromptSet};
use crate::agents::{ChainSettings, Policy};
use crate::dataset::Tolerances;
use crate::eval::BucketThresholds;
use crate::gateway::RetryPolicy;
use crate::ingest::chunk::{DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP};
use crate::ingest::raster::DPI_RANGE;
use crate::ingest::DEFAULT_DPI;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config value for {}: {message}", keys.join(", "))]
    Invalid { keys: Vec<String>, message: String },
}

fn invalid(keys: &[&str], message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        keys: keys.iter().map(|k| k.to_string()).collect(),
        message: message.into(),
    }
}

/// Chat model endpoint used for the agents or for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelProvider {
    /// OpenAI-compatible chat completions endpoint.
    Openai {
        base_url: String,
        model: String,
        /// Environment variable holding the bearer token.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
    /// Deterministic in-process model over synthetic fixture corpora.
    Synthetic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        accuracy: Option<f64>,
    },
    /// Serves responses recorded in an earlier transcript.
    Replay { transcript: PathBuf },
}

fn default_timeout_secs() -> u64 {
    120
}

impl ModelProvider {
    pub fn model_id(&self) -> String {
        match self {
            ModelProvider::Openai { model, .. } => model.clone(),
            ModelProvider::Synthetic { .. } => "synthetic".into(),
            ModelProvider::Replay { .. } => "replay".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerceptionProvider {
    /// Scripted per-page text and region files.
    Mock {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scripts_dir: Option<PathBuf>,
    },
    Remote {
        base_url: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Providers {
    pub agents: ModelProvider,
    pub perception: PerceptionProvider,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<ModelProvider>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Limits {
    pub max_in_flight: usize,
    /// Requests per second per provider; 0 disables rate limiting.
    pub requests_per_second: f64,
    pub retry: RetryPolicy,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_in_flight: 8,
            requests_per_second: 0.0,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSettings {
    pub dedup_threshold: f64,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for AgentSettings {
    fn default() -> Self {
        let c = ChainSettings::default();
        Self {
            dedup_threshold: c.dedup_threshold,
            temperature: c.temperature,
            max_output_tokens: c.max_output_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub thresholds: BucketThresholds,
    pub tolerances: Tolerances,
}

fn default_chunk_size() -> u32 {
    DEFAULT_CHUNK_SIZE
}
fn default_overlap() -> u32 {
    DEFAULT_OVERLAP
}
fn default_dpi() -> u32 {
    DEFAULT_DPI
}
fn default_max_iterations() -> u32 {
    3
}
fn default_min_pages() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_manifest: PathBuf,
    pub run_dir: PathBuf,
    pub seed: String,
    #[serde(default = "default_chunk_size")]
    pub chunk_size: u32,
    #[serde(default = "default_overlap")]
    pub overlap: u32,
    #[serde(default = "default_dpi")]
    pub dpi: u32,
    #[serde(default = "default_min_pages")]
    pub min_pages: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_licenses: Option<Vec<String>>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u32,
    /// Chunk workers; 0 means one per CPU.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub policy: Policy,
    #[serde(default)]
    pub agents: AgentSettings,
    pub providers: Providers,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub prompts: PromptPaths,
}

impl RunConfig {
    /// Minimal config over a manifest with the given providers.
    pub fn new(
        corpus_manifest: PathBuf,
        run_dir: PathBuf,
        seed: &str,
        providers: Providers,
    ) -> Self {
        Self {
            corpus_manifest,
            run_dir,
            seed: seed.into(),
            chunk_size: DEFAULT_CHUNK_SIZE,
            overlap: DEFAULT_OVERLAP,
            dpi: DEFAULT_DPI,
            min_pages: default_min_pages(),
            allowed_licenses: None,
            max_iterations: default_max_iterations(),
            workers: 0,
            policy: Policy::default(),
            agents: AgentSettings::default(),
            providers,
            limits: Limits::default(),
            eval: EvalSettings::default(),
            prompts: PromptPaths::default(),
        }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.into(),
            message: e.to_string(),
        })
    }

    /// Reads, resolves relative paths and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut config = Self::parse(&text, &path.display().to_string())?;
        config.resolve_paths(path.parent().unwrap_or_else(|| Path::new(".")));
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus_manifest);
        fix(&mut self.run_dir);
        if let PerceptionProvider::Mock {
            scripts_dir: Some(dir),
        } = &mut self.providers.perception
        {
            fix(dir);
        }
        for provider in
            std::iter::once(&mut self.providers.agents).chain(self.providers.eval.as_mut())
        {
            if let ModelProvider::Replay { transcript } = provider {
                fix(transcript);
            }
        }
        for p in [
            &mut self.prompts.agent1,
            &mut self.prompts.agent3,
            &mut self.prompts.agent4,
            &mut self.prompts.agent5,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.chunk_size < 1 {
            return Err(invalid(&["chunk_size"], "must be at least 1"));
        }
        if self.overlap >= self.chunk_size {
            return Err(invalid(
                &["chunk_size", "overlap"],
                format!(
                    "overlap ({}) must be smaller than chunk_size ({})",
                    self.overlap, self.chunk_size
                ),
            ));
        }
        if !DPI_RANGE.contains(&self.dpi) {
            return Err(invalid(
                &["dpi"],
                format!(
                    "{} is outside {}..={}",
                    self.dpi,
                    DPI_RANGE.start(),
                    DPI_RANGE.end()
                ),
            ));
        }
        if self.min_pages < 1 {
            return Err(invalid(&["min_pages"], "must be at least 1"));
        }
        if self.max_iterations < 1 {
            return Err(invalid(&["max_iterations"], "must be at least 1"));
        }
        if self.seed.is_empty() {
            return Err(invalid(&["seed"], "must not be empty"));
        }
        self.policy.check().map_err(|m| invalid(&["policy"], m))?;
        let a = &self.agents;
        if !(a.dedup_threshold > 0.0 && a.dedup_threshold <= 1.0) {
            return Err(invalid(&["agents.dedup_threshold"], "must be in (0, 1]"));
        }
        if !(a.temperature.is_finite() && a.temperature >= 0.0) {
            return Err(invalid(
                &["agents.temperature"],
                "must be a non-negative number",
            ));
        }
        if a.max_output_tokens == 0 {
            return Err(invalid(&["agents.max_output_tokens"], "must be positive"));
        }
        let l = &self.limits;
        if l.max_in_flight == 0 {
            return Err(invalid(&["limits.max_in_flight"], "must be positive"));
        }
        if !(l.requests_per_second.is_finite() && l.requests_per_second >= 0.0) {
            return Err(invalid(
                &["limits.requests_per_second"],
                "must be a non-negative number",
            ));
        }
        if !(l.retry.factor.is_finite() && l.retry.factor >= 1.0) {
            return Err(invalid(&["limits.retry.factor"], "must be at least 1"));
        }
        if !(0.0..1.0).contains(&l.retry.jitter) {
            return Err(invalid(&["limits.retry.jitter"], "must be in [0, 1)"));
        }
        self.eval
            .thresholds
            .check()
            .map_err(|m| invalid(&["eval.thresholds.sc_max", "eval.thresholds.mc_max"], m))?;
        let t = &self.eval.tolerances;
        if !(t.abs_tol >= 0.0 && t.rel_tol >= 0.0) {
            return Err(invalid(
                &["eval.tolerances.abs_tol", "eval.tolerances.rel_tol"],
                "must be non-negative",
            ));
        }
        if !(t.text_similarity_threshold > 0.0 && t.text_similarity_threshold <= 1.0) {
            return Err(invalid(
                &["eval.tolerances.text_similarity_threshold"],
                "must be in (0, 1]",
            ));
        }
        for (key, provider) in std::iter::once(("providers.agents", &self.providers.agents))
            .chain(self.providers.eval.iter().map(|p| ("providers.eval", p)))
        {
            if let ModelProvider::Synthetic {
                accuracy: Some(acc),
            } = provider
            {
                if !(0.0..=1.0).contains(acc) {
                    return Err(invalid(&[key], "synthetic accuracy must be in [0, 1]"));
                }
            }
        }
        PromptSet::load(&self.prompts).map_err(|e| invalid(&["prompts"], e.to_string()))?;
        Ok(())
    }

    pub fn chain_settings(&self) -> ChainSettings {
        ChainSettings {
            max_iterations: self.max_iterations,
            tolerances: self.eval.tolerances,
            dedup_threshold: self.agents.dedup_threshold,
            temperature: self.agents.temperature,
            max_output_tokens: self.agents.max_output_tokens,
        }
    }

    pub fn worker_count(&self, override_workers: Option<usize>) -> usize {
        let requested = override_workers.unwrap_or(self.workers);
        let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
        let workers = if requested == 0 { cpus } else { requested };
        workers.clamp(1, self.limits.max_in_flight.max(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
corpus_manifest = "corpus/manifest.jsonl"
run_dir = "runs/demo"
seed = "demo"
overlap = 5

[policy]
language = "arabic"
questions_per_chunk = 4
difficulty_target = "intermediate"
require_evidence = true

[policy.target_type_mix]
reasoning = 3.0
unanswerable = 1.0

[providers.agents]
kind = "openai"
base_url = "https://example.invalid/v1"
model = "some-model"
api_key_env = "QA_API_KEY"

[providers.perception]
kind = "mock"
scripts_dir = "scripts"

[limits.retry]
budget = 2
base_delay_ms = 100
factor = 2.0
jitter = 0.1
"#;

    #[test]
    fn parses_with_defaults() {
        let c = RunConfig::parse(SAMPLE, "sample").unwrap();
        assert_eq!(
            (c.chunk_size, c.overlap, c.dpi, c.max_iterations),
            (20, 5, 150, 3)
        );
        assert_eq!(c.policy.target_type_mix.len(), 2);
        assert_eq!(c.limits.retry.budget, 2);
        assert_eq!(c.limits.max_in_flight, 8);
        c.validate().unwrap();
    }

    #[test]
    fn dump_then_parse_is_identity() {
        let c = RunConfig::parse(SAMPLE, "sample").unwrap();
        let again = RunConfig::parse(&c.to_toml(), "dump").unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse(&format!("{SAMPLE}\n[eval]\nthreshold = 3\n"), "x").unwrap_err();
        assert!(err.to_string().contains("threshold"), "{err}");
        let err = RunConfig::parse(
            &SAMPLE.replace("seed = \"demo\"", "seed = \"demo\"\nchunk_sise = 4"),
            "x",
        )
        .unwrap_err();
        assert!(err.to_string().contains("chunk_sise"), "{err}");
        let err = RunConfig::parse(
            &SAMPLE.replace("model = \"some-model\"", "model = \"m\"\nmodle = 1"),
            "x",
        )
        .unwrap_err();
        assert!(err.to_string().contains("modle"), "{err}");
    }

    #[test]
    fn overlap_not_below_chunk_size_names_both_keys() {
        let c = RunConfig::parse(&SAMPLE.replace("overlap = 5", "overlap = 20"), "x").unwrap();
        let msg = c.validate().unwrap_err().to_string();
        assert!(
            msg.contains("chunk_size") && msg.contains("overlap"),
            "{msg}"
        );
    }

    #[test]
    fn range_checks() {
        let base = RunConfig::parse(SAMPLE, "x").unwrap();
        let mut c = base.clone();
        c.dpi = 50;
        assert!(c.validate().unwrap_err().to_string().contains("dpi"));
        let mut c = base.clone();
        c.limits.max_in_flight = 0;
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("limits.max_in_flight"));
        let mut c = base;
        c.eval.thresholds.sc_max = 300;
        assert!(c.validate().unwrap_err().to_string().contains("sc_max"));
    }

    #[test]
    fn relative_paths_follow_config_dir() {
        let mut c = RunConfig::parse(SAMPLE, "x").unwrap();
        c.resolve_paths(Path::new("/etc/qa"));
        assert_eq!(
            c.corpus_manifest,
            Path::new("/etc/qa/corpus/manifest.jsonl")
        );
        assert_eq!(
            c.providers.perception,
            PerceptionProvider::Mock {
                scripts_dir: Some("/etc/qa/scripts".into())
            }
        );
    }

    #[test]
    fn worker_count_is_capped_by_in_flight_limit() {
        let c = RunConfig::parse(SAMPLE, "x").unwrap();
        assert_eq!(c.worker_count(Some(64)), 8);
        assert_eq!(c.worker_count(Some(3)), 3);
        assert!(c.worker_count(None) >= 1);
    }
}
