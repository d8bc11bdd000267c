//! The five-agent question generation loop over one chunk.
//!
//! Agent 1 drafts questions, Agent 2 filters them, Agent 3 answers from the
//! page images alone, Agent 4 writes reference answers and scores the
//! candidates, and Agent 5 validates evidence. [`chain::run_chain`] repeats
//! steps 1 to 4 while candidate accuracy stays above the escalation
//! threshold, then validates once.

pub mod answer;
pub mod assess;
pub mod chain;
pub mod filter;
pub mod generate;
pub mod prompts;
pub mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::{EvidenceSource, QaRecord, Tolerances};
use crate::gateway::{ChatRequest, Gateway, GatewayError, RoleTag};
use crate::perception::ChunkContext;
use crate::{Language, QuestionType};

pub use answer::answer_questions;
pub use assess::{assess, should_escalate, ESCALATION_THRESHOLD};
pub use chain::{run_chain, ChainOutcome, ChainTrace};
pub use filter::filter_questions;
pub use generate::generate_questions;
pub use prompts::{PromptSet, TemplateError};
pub use validate::validate_evidence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Basic,
    Intermediate,
    Hard,
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Basic => "basic",
            Difficulty::Intermediate => "intermediate",
            Difficulty::Hard => "hard",
        })
    }
}

/// Generation policy handed to Agent 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    pub language: Language,
    pub questions_per_chunk: u32,
    pub target_type_mix: BTreeMap<QuestionType, f64>,
    pub difficulty_target: Difficulty,
    pub require_evidence: bool,
}

impl Default for Policy {
    fn default() -> Self {
        let counts = [
            (QuestionType::Reasoning, 4160.0),
            (QuestionType::FactualRecall, 271.0),
            (QuestionType::ImageBased, 412.0),
            (QuestionType::PredictionAnalysis, 15.0),
            (QuestionType::StepByStepExplanation, 36.0),
            (QuestionType::ConceptualUnderstanding, 272.0),
            (QuestionType::HypotheticalReasoning, 798.0),
            (QuestionType::MultiHopReasoning, 281.0),
            (QuestionType::DataRetrievalOcr, 6.0),
            (QuestionType::ExperimentalDesign, 21.0),
            (QuestionType::Argumentation, 6.0),
            (QuestionType::Unanswerable, 454.0),
        ];
        Self {
            language: Language::English,
            questions_per_chunk: 5,
            target_type_mix: counts.into_iter().collect(),
            difficulty_target: Difficulty::Hard,
            require_evidence: true,
        }
    }
}

impl Policy {
    pub fn check(&self) -> Result<(), String> {
        if self.questions_per_chunk == 0 {
            return Err("questions_per_chunk must be positive".into());
        }
        if self
            .target_type_mix
            .values()
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err("target_type_mix weights must be finite and non-negative".into());
        }
        if self.target_type_mix.values().sum::<f64>() <= 0.0 {
            return Err("target_type_mix weights must sum to a positive value".into());
        }
        if !self.require_evidence {
            return Err("require_evidence must be true".into());
        }
        Ok(())
    }

    /// Mix as percentages, largest first.
    pub fn mix_percentages(&self) -> Vec<(QuestionType, f64)> {
        let total: f64 = self.target_type_mix.values().sum();
        let mut out: Vec<(QuestionType, f64)> = self
            .target_type_mix
            .iter()
            .filter(|(_, w)| **w > 0.0)
            .map(|(t, w)| (*t, 100.0 * w / total))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionDraft {
    pub draft_id: String,
    pub chunk_id: String,
    pub text: String,
    pub claimed_type: QuestionType,
    pub claimed_evidence_pages: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAnswer {
    pub draft_id: String,
    pub text: String,
    pub abstained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionAssessment {
    pub draft_id: String,
    pub reference_answer: String,
    pub depth: u8,
    pub difficulty: u8,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub questions: Vec<QuestionAssessment>,
    pub feedback: String,
    pub accuracy_estimate: f64,
}

impl Assessment {
    pub fn matched_count(&self) -> usize {
        self.questions.iter().filter(|q| q.matched).count()
    }

    pub fn get(&self, draft_id: &str) -> Option<&QuestionAssessment> {
        self.questions.iter().find(|q| q.draft_id == draft_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approved,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub draft_id: String,
    pub verdict: Verdict,
    pub evidence_sources: Vec<EvidenceSource>,
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum RejectReason {
    EvidenceOutOfRange,
    MissingAssessment,
    ReferenceAbstains,
    MissingVerdict,
    MissingEvidence,
    EmptyJustification,
    Validator(String),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::EvidenceOutOfRange => f.write_str("evidence outside the chunk"),
            RejectReason::MissingAssessment => f.write_str("no assessment for draft"),
            RejectReason::ReferenceAbstains => {
                f.write_str("reference answer abstains on an answerable question")
            }
            RejectReason::MissingVerdict => f.write_str("validator returned no verdict"),
            RejectReason::MissingEvidence => f.write_str("approved without evidence sources"),
            RejectReason::EmptyJustification => f.write_str("approved without justification"),
            RejectReason::Validator(reason) => write!(f, "validator rejected: {reason}"),
        }
    }
}

/// Result of Agent 5: records for approved drafts and reasons for the rest.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationOutcome {
    pub records: Vec<QaRecord>,
    pub rejected: Vec<(String, RejectReason)>,
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("model returned no usable questions")]
    GenerationEmpty,
    #[error("every draft was filtered out")]
    AllFiltered,
    #[error("answer count mismatch: {0}")]
    AnswerCountMismatch(String),
    #[error("assessment over an empty question set")]
    EmptyQuestionSet,
    #[error("assessment does not cover the drafts: {0}")]
    AssessmentMismatch(String),
    #[error("all {iterations} iterations failed: {reasons:?}")]
    ChainExhausted {
        iterations: u32,
        reasons: Vec<String>,
        partial: Vec<QuestionDraft>,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Settings shared by every agent call in a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSettings {
    pub max_iterations: u32,
    pub tolerances: Tolerances,
    /// Normalized token-F1 at or above which Agent 2 treats two drafts as
    /// duplicates.
    pub dedup_threshold: f64,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            max_iterations: 3,
            tolerances: Tolerances::default(),
            dedup_threshold: 0.9,
            temperature: 0.0,
            max_output_tokens: 4096,
        }
    }
}

/// Everything an agent needs to issue requests.
#[derive(Clone)]
pub struct AgentContext<'a> {
    pub gateway: &'a Gateway,
    pub prompts: &'a PromptSet,
    pub settings: &'a ChainSettings,
}

impl AgentContext<'_> {
    fn request(
        &self,
        role: RoleTag,
        request_id: String,
        system_prompt: String,
        chunk: &ChunkContext,
    ) -> ChatRequest {
        let c = &chunk.chunk;
        let mut req = ChatRequest::new(role, request_id, system_prompt).text(format!(
            "Page images {}..{} of the chunk follow in order.",
            c.start_page, c.end_page
        ));
        for image in &chunk.images {
            req = req.image_png(image.png.clone());
        }
        req.temperature = self.settings.temperature;
        req.max_output_tokens = self.settings.max_output_tokens;
        req
    }
}
