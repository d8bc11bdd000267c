//! Agent 1: question drafting.

use serde_json::Value;

use super::prompts::{feedback_text, layout_summary, ocr_text, policy_text};
use super::{AgentContext, AgentError, Policy, QuestionDraft};
use crate::gateway::{Field, RoleTag, Schema};
use crate::perception::ChunkContext;
use crate::QuestionType;

pub fn schema() -> Schema {
    Schema::object(vec![Field::required(
        "questions",
        Schema::array(Schema::object(vec![
            Field::required("question", Schema::String),
            Field::required("type", Schema::String),
            Field::required("evidence_pages", Schema::array(Schema::Integer)),
        ])),
    )])
}

/// Converts Agent 1's reply into drafts. Items with empty text, an unknown
/// type, or pages outside the chunk are dropped; the rest are capped at
/// `limit`.
pub fn parse_drafts(
    value: &Value,
    ctx: &ChunkContext,
    iteration: u32,
    limit: usize,
) -> Vec<QuestionDraft> {
    let range = ctx.chunk.range();
    let mut drafts = Vec::new();
    for (i, item) in value["questions"]
        .as_array()
        .into_iter()
        .flatten()
        .enumerate()
    {
        let text = item["question"]
            .as_str()
            .unwrap_or_default()
            .trim()
            .to_string();
        if text.is_empty() {
            tracing::debug!(chunk = %ctx.chunk.chunk_id, item = i, "dropping draft without text");
            continue;
        }
        let Ok(claimed_type) = item["type"]
            .as_str()
            .unwrap_or_default()
            .parse::<QuestionType>()
        else {
            tracing::warn!(chunk = %ctx.chunk.chunk_id, item = i, "dropping draft with unknown question type");
            continue;
        };
        let pages: Vec<i64> = item["evidence_pages"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(Value::as_i64)
            .collect();
        if let Some(p) = pages
            .iter()
            .find(|p| !(u32::try_from(**p).is_ok_and(|p| range.contains(p))))
        {
            tracing::warn!(chunk = %ctx.chunk.chunk_id, item = i, page = p, "dropping draft citing a page outside the chunk");
            continue;
        }
        let mut pages: Vec<u32> = pages.into_iter().map(|p| p as u32).collect();
        pages.sort_unstable();
        pages.dedup();
        if claimed_type == QuestionType::Unanswerable {
            pages.clear();
        }
        if drafts.len() == limit {
            break;
        }
        drafts.push(QuestionDraft {
            draft_id: format!(
                "{}/i{iteration}/q{:02}",
                ctx.chunk.chunk_id,
                drafts.len() + 1
            ),
            chunk_id: ctx.chunk.chunk_id.clone(),
            text,
            claimed_type,
            claimed_evidence_pages: pages,
        });
    }
    drafts
}

pub fn generate_questions(
    agent: &AgentContext<'_>,
    ctx: &ChunkContext,
    policy: &Policy,
    feedback: Option<&str>,
    iteration: u32,
) -> Result<Vec<QuestionDraft>, AgentError> {
    let system = agent.prompts.agent1.render(&[
        ("ocr_text", &ocr_text(ctx)),
        ("layout_summary", &layout_summary(ctx)),
        (
            "policy",
            &policy_text(policy, (ctx.chunk.start_page, ctx.chunk.end_page)),
        ),
        ("feedback", &feedback_text(feedback)),
    ]);
    let request = agent.request(
        RoleTag::Agent1,
        format!("{}/i{iteration}/agent1", ctx.chunk.chunk_id),
        system,
        ctx,
    );
    let reply = agent.gateway.complete_structured(&request, &schema())?;
    let drafts = parse_drafts(
        &reply.value,
        ctx,
        iteration,
        policy.questions_per_chunk as usize,
    );
    if drafts.is_empty() {
        return Err(AgentError::GenerationEmpty);
    }
    Ok(drafts)
}
