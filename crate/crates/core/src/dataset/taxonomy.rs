//! Closed vocabularies shared across the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    English,
    Arabic,
}

impl Language {
    pub const ALL: [Language; 2] = [Language::English, Language::Arabic];

    pub fn label(self) -> &'static str {
        match self {
            Language::English => "English",
            Language::Arabic => "Arabic",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} `{value}`")]
pub struct UnknownLabel {
    pub kind: &'static str,
    pub value: String,
}

impl FromStr for Language {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "english" | "en" => Ok(Language::English),
            "arabic" | "ar" => Ok(Language::Arabic),
            _ => Err(UnknownLabel {
                kind: "language",
                value: s.to_string(),
            }),
        }
    }
}

/// Question taxonomy of the generated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Reasoning,
    FactualRecall,
    ImageBased,
    PredictionAnalysis,
    StepByStepExplanation,
    ConceptualUnderstanding,
    HypotheticalReasoning,
    MultiHopReasoning,
    DataRetrievalOcr,
    ExperimentalDesign,
    Argumentation,
    Unanswerable,
}

impl QuestionType {
    pub const ALL: [QuestionType; 12] = [
        QuestionType::Reasoning,
        QuestionType::FactualRecall,
        QuestionType::ImageBased,
        QuestionType::PredictionAnalysis,
        QuestionType::StepByStepExplanation,
        QuestionType::ConceptualUnderstanding,
        QuestionType::HypotheticalReasoning,
        QuestionType::MultiHopReasoning,
        QuestionType::DataRetrievalOcr,
        QuestionType::ExperimentalDesign,
        QuestionType::Argumentation,
        QuestionType::Unanswerable,
    ];

    pub fn label(self) -> &'static str {
        match self {
            QuestionType::Reasoning => "Reasoning",
            QuestionType::FactualRecall => "Factual Recall",
            QuestionType::ImageBased => "Image-based Question",
            QuestionType::PredictionAnalysis => "Prediction Analysis",
            QuestionType::StepByStepExplanation => "Step-by-step Explanation",
            QuestionType::ConceptualUnderstanding => "Conceptual Understanding",
            QuestionType::HypotheticalReasoning => "Hypothetical Reasoning",
            QuestionType::MultiHopReasoning => "Multi-hop Reasoning",
            QuestionType::DataRetrievalOcr => "Data Retrieval & OCR",
            QuestionType::ExperimentalDesign => "Experimental Design",
            QuestionType::Argumentation => "Argumentation",
            QuestionType::Unanswerable => "Unanswerable",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            QuestionType::Reasoning => "reasoning",
            QuestionType::FactualRecall => "factual_recall",
            QuestionType::ImageBased => "image_based",
            QuestionType::PredictionAnalysis => "prediction_analysis",
            QuestionType::StepByStepExplanation => "step_by_step_explanation",
            QuestionType::ConceptualUnderstanding => "conceptual_understanding",
            QuestionType::HypotheticalReasoning => "hypothetical_reasoning",
            QuestionType::MultiHopReasoning => "multi_hop_reasoning",
            QuestionType::DataRetrievalOcr => "data_retrieval_ocr",
            QuestionType::ExperimentalDesign => "experimental_design",
            QuestionType::Argumentation => "argumentation",
            QuestionType::Unanswerable => "unanswerable",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Squash a label to lowercase alphanumerics so that "Multi-hop Reasoning",
/// "multi_hop_reasoning" and "MultiHopReasoning" compare equal.
fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

impl FromStr for QuestionType {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = squash(s);
        QuestionType::ALL
            .into_iter()
            .find(|t| squash(t.key()) == wanted || squash(t.label()) == wanted)
            .or(match wanted.as_str() {
                "imagebased" => Some(QuestionType::ImageBased),
                "dataretrieval" | "ocr" => Some(QuestionType::DataRetrievalOcr),
                _ => None,
            })
            .ok_or_else(|| UnknownLabel {
                kind: "question type",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerType {
    Text,
    Integer,
    Code,
    Float,
    List,
    Boolean,
    Array,
    Json,
}

impl AnswerType {
    pub const ALL: [AnswerType; 8] = [
        AnswerType::Text,
        AnswerType::Integer,
        AnswerType::Code,
        AnswerType::Float,
        AnswerType::List,
        AnswerType::Boolean,
        AnswerType::Array,
        AnswerType::Json,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AnswerType::Text => "Text",
            AnswerType::Integer => "Integer",
            AnswerType::Code => "Code",
            AnswerType::Float => "Float",
            AnswerType::List => "List",
            AnswerType::Boolean => "Boolean",
            AnswerType::Array => "Array",
            AnswerType::Json => "JSON",
        }
    }
}

impl fmt::Display for AnswerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AnswerType {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = squash(s);
        AnswerType::ALL
            .into_iter()
            .find(|t| squash(t.label()) == wanted)
            .ok_or_else(|| UnknownLabel {
                kind: "answer type",
                value: s.to_string(),
            })
    }
}

/// Structural page element reported by layout analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionCategory {
    Heading,
    Paragraph,
    Table,
    Figure,
}

impl RegionCategory {
    pub const ALL: [RegionCategory; 4] = [
        RegionCategory::Heading,
        RegionCategory::Paragraph,
        RegionCategory::Table,
        RegionCategory::Figure,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RegionCategory::Heading => "heading",
            RegionCategory::Paragraph => "paragraph",
            RegionCategory::Table => "table",
            RegionCategory::Figure => "figure",
        }
    }
}

impl FromStr for RegionCategory {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = squash(s);
        RegionCategory::ALL
            .into_iter()
            .find(|c| c.label() == wanted)
            .or(match wanted.as_str() {
                "title" | "header" | "sectionheader" => Some(RegionCategory::Heading),
                "text" | "plaintext" => Some(RegionCategory::Paragraph),
                "image" | "picture" | "chart" => Some(RegionCategory::Figure),
                _ => None,
            })
            .ok_or_else(|| UnknownLabel {
                kind: "region category",
                value: s.to_string(),
            })
    }
}
