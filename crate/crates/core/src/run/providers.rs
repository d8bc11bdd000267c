//! Builds transports and perception providers from configuration.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use super::RunError;
use crate::config::{Limits, ModelProvider, PerceptionProvider};
use crate::gateway::mock::ReplayTransport;
use crate::gateway::openai::OpenAiTransport;
use crate::gateway::transcript::read_transcript;
use crate::gateway::{ChatTransport, Gateway, GatewayShared, Transcript};
use crate::ingest::Document;
use crate::perception::mock::MockPerception;
use crate::perception::remote::{RemoteLayout, RemoteOcr};
use crate::perception::{LayoutProvider, OcrProvider};
use crate::synth::SyntheticModel;

pub fn model_transport(
    provider: &ModelProvider,
    seed: &str,
) -> Result<Arc<dyn ChatTransport>, RunError> {
    Ok(match provider {
        ModelProvider::Openai {
            base_url,
            model,
            api_key_env,
            timeout_secs,
        } => Arc::new(
            OpenAiTransport::from_env(
                base_url,
                model,
                api_key_env.as_deref(),
                Duration::from_secs(*timeout_secs),
            )
            .map_err(RunError::Provider)?,
        ),
        ModelProvider::Synthetic { accuracy } => {
            let mut model = SyntheticModel::new(seed);
            if let Some(a) = accuracy {
                model = model.with_eval_accuracy(*a);
            }
            Arc::new(model)
        }
        ModelProvider::Replay { transcript } => {
            let entries = read_transcript(transcript).map_err(|e| {
                RunError::Provider(format!(
                    "cannot read transcript {}: {e}",
                    transcript.display()
                ))
            })?;
            Arc::new(ReplayTransport::from_entries(entries))
        }
    })
}

/// Gateway with the configured limits, logging to `transcript`.
pub fn gateway(
    transport: Arc<dyn ChatTransport>,
    limits: &Limits,
    transcript: &Path,
) -> Result<Gateway, RunError> {
    let mut shared = GatewayShared::new(limits.retry, limits.max_in_flight);
    if limits.requests_per_second > 0.0 {
        shared = shared.with_rate_limit(limits.requests_per_second);
    }
    let transcript = Transcript::open(transcript).map_err(|source| RunError::Io {
        path: transcript.to_path_buf(),
        source,
    })?;
    Ok(Gateway::new(
        transport,
        Arc::new(shared.with_transcript(transcript)),
    ))
}

pub struct Perception {
    pub ocr: Box<dyn OcrProvider>,
    pub layout: Box<dyn LayoutProvider>,
}

pub fn perception(
    provider: &PerceptionProvider,
    documents: &[Document],
    limits: &Limits,
    transcript: &Path,
) -> Result<Perception, RunError> {
    match provider {
        PerceptionProvider::Mock { scripts_dir } => {
            let mock = match scripts_dir {
                Some(dir) => {
                    let docs: Vec<(String, Vec<String>)> = documents
                        .iter()
                        .map(|d| {
                            let stem = d.path.file_stem().map(|s| s.to_string_lossy().into_owned());
                            (d.doc_id.clone(), stem.into_iter().collect())
                        })
                        .collect();
                    MockPerception::load(dir, &docs)?
                }
                None => MockPerception::new(),
            };
            Ok(Perception {
                ocr: Box::new(mock.clone()),
                layout: Box::new(mock),
            })
        }
        PerceptionProvider::Remote {
            base_url,
            model,
            api_key_env,
            timeout_secs,
        } => {
            let transport = OpenAiTransport::from_env(
                base_url,
                model,
                api_key_env.as_deref(),
                Duration::from_secs(*timeout_secs),
            )
            .map_err(RunError::Provider)?;
            let gateway = gateway(Arc::new(transport), limits, transcript)?;
            Ok(Perception {
                ocr: Box::new(RemoteOcr::new(gateway.clone(), model)),
                layout: Box::new(RemoteLayout::new(gateway)),
            })
        }
    }
}
