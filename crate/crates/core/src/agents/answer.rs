//! Agent 3: answering from page images alone.

use std::collections::HashMap;

use serde_json::Value;

use super::prompts::questions_for_answering;
use super::{AgentContext, AgentError, CandidateAnswer, QuestionDraft};
use crate::dataset::normalize::detect_language;
use crate::eval::detect_abstention;
use crate::gateway::{Field, GatewayError, RoleTag, Schema};
use crate::perception::ChunkContext;

pub fn schema() -> Schema {
    Schema::object(vec![Field::required(
        "answers",
        Schema::array(Schema::object(vec![
            Field::required("id", Schema::String),
            Field::required("answer", Schema::Any),
        ])),
    )])
}

/// Answer values may come back as numbers, lists or objects; they are kept
/// in their JSON spelling.
pub fn answer_string(value: &Value) -> String {
    match value {
        Value::String(s) => s.trim().to_string(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn answers_by_id(value: &Value) -> HashMap<String, String> {
    value["answers"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|a| Some((a["id"].as_str()?.to_string(), answer_string(&a["answer"]))))
        .collect()
}

fn coverage(value: &Value, drafts: &[QuestionDraft]) -> Result<(), String> {
    let answers = answers_by_id(value);
    let missing: Vec<&str> = drafts
        .iter()
        .filter(|d| !answers.contains_key(&d.draft_id))
        .map(|d| d.draft_id.as_str())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(format!(
            "{} answers for {} questions; missing ids {:?}",
            drafts.len() - missing.len(),
            drafts.len(),
            missing
        ))
    }
}

pub fn answer_questions(
    agent: &AgentContext<'_>,
    ctx: &ChunkContext,
    drafts: &[QuestionDraft],
    iteration: u32,
) -> Result<Vec<CandidateAnswer>, AgentError> {
    if drafts.is_empty() {
        return Err(AgentError::EmptyQuestionSet);
    }
    let system = agent
        .prompts
        .agent3
        .render(&[("questions", &questions_for_answering(drafts))]);
    let request = agent.request(
        RoleTag::Agent3,
        format!("{}/i{iteration}/agent3", ctx.chunk.chunk_id),
        system,
        ctx,
    );
    let reply = match agent
        .gateway
        .complete_structured_checked(&request, &schema(), |v| coverage(v, drafts))
    {
        Ok(reply) => reply,
        Err(GatewayError::Unacceptable(message)) => {
            return Err(AgentError::AnswerCountMismatch(message))
        }
        Err(e) => return Err(e.into()),
    };
    let answers = answers_by_id(&reply.value);
    Ok(drafts
        .iter()
        .map(|d| {
            let text = answers[&d.draft_id].clone();
            CandidateAnswer {
                draft_id: d.draft_id.clone(),
                abstained: text.is_empty() || detect_abstention(&text, detect_language(&d.text)),
                text,
            }
        })
        .collect())
}
