//! Agent 4: reference answers, depth and difficulty, mechanical matching and
//! feedback.

use std::collections::HashMap;

use serde_json::Value;

use super::answer::answer_string;
use super::prompts::{layout_summary, ocr_text, policy_text, questions_for_assessment};
use super::{
    AgentContext, AgentError, Assessment, CandidateAnswer, Policy, QuestionAssessment,
    QuestionDraft,
};
use crate::dataset::normalize::detect_language;
use crate::dataset::{infer_answer_type, match_answer, Tolerances};
use crate::eval::detect_abstention;
use crate::gateway::{Field, GatewayError, RoleTag, Schema};
use crate::perception::ChunkContext;
use crate::QuestionType;

/// Candidate accuracy above which the chain asks for harder questions.
pub const ESCALATION_THRESHOLD: f64 = 0.40;

pub fn should_escalate(accuracy_estimate: f64) -> bool {
    accuracy_estimate > ESCALATION_THRESHOLD
}

pub fn schema() -> Schema {
    Schema::object(vec![
        Field::required(
            "assessments",
            Schema::array(Schema::object(vec![
                Field::required("id", Schema::String),
                Field::required("reference_answer", Schema::Any),
                Field::required("depth", Schema::Integer),
                Field::required("difficulty", Schema::Integer),
            ])),
        ),
        Field::required("feedback", Schema::String),
    ])
}

struct Rating {
    reference: String,
    depth: u8,
    difficulty: u8,
}

fn ratings(value: &Value) -> HashMap<String, Rating> {
    value["assessments"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|a| {
            let scale = |v: &Value| v.as_i64().filter(|n| (1..=5).contains(n)).map(|n| n as u8);
            Some((
                a["id"].as_str()?.to_string(),
                Rating {
                    reference: answer_string(&a["reference_answer"]),
                    depth: scale(&a["depth"])?,
                    difficulty: scale(&a["difficulty"])?,
                },
            ))
        })
        .collect()
}

fn coverage(value: &Value, drafts: &[QuestionDraft]) -> Result<(), String> {
    let rated = ratings(value);
    let missing: Vec<&str> = drafts
        .iter()
        .filter(|d| {
            rated
                .get(&d.draft_id)
                .is_none_or(|r| r.reference.is_empty())
        })
        .map(|d| d.draft_id.as_str())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(format!("no usable assessment (reference answer, depth and difficulty in 1-5) for ids {missing:?}"))
    }
}

/// Whether a candidate agrees with the reference. Questions with no answer
/// in the pages are matched by abstaining.
pub fn candidate_matches(
    draft: &QuestionDraft,
    candidate: &CandidateAnswer,
    reference: &str,
    tolerances: &Tolerances,
) -> bool {
    let lang = detect_language(&draft.text);
    if draft.claimed_type == QuestionType::Unanswerable || detect_abstention(reference, lang) {
        return candidate.abstained;
    }
    !candidate.abstained
        && match_answer(
            &candidate.text,
            reference,
            infer_answer_type(reference),
            tolerances,
        )
}

/// Builds the assessment from per-question ratings. Feedback is synthesized
/// when the model gave none but some question is shallow.
pub fn build_assessment(
    questions: Vec<QuestionAssessment>,
    feedback: &str,
) -> Result<Assessment, AgentError> {
    if questions.is_empty() {
        return Err(AgentError::EmptyQuestionSet);
    }
    let matched = questions.iter().filter(|q| q.matched).count();
    let accuracy_estimate = matched as f64 / questions.len() as f64;
    let mut feedback = feedback.trim().to_string();
    let shallow: Vec<&str> = questions
        .iter()
        .filter(|q| q.depth < 3)
        .map(|q| q.draft_id.as_str())
        .collect();
    if feedback.is_empty() && !shallow.is_empty() {
        feedback = format!(
            "Questions {} have reasoning depth below 3. Ask multi-hop questions that combine evidence from several pages and require inference beyond direct lookup.",
            shallow.join(", ")
        );
    }
    Ok(Assessment {
        questions,
        feedback,
        accuracy_estimate,
    })
}

pub fn assess(
    agent: &AgentContext<'_>,
    ctx: &ChunkContext,
    drafts: &[QuestionDraft],
    candidates: &[CandidateAnswer],
    policy: &Policy,
    iteration: u32,
) -> Result<Assessment, AgentError> {
    if drafts.is_empty() {
        return Err(AgentError::EmptyQuestionSet);
    }
    let by_id: HashMap<&str, &CandidateAnswer> = candidates
        .iter()
        .map(|c| (c.draft_id.as_str(), c))
        .collect();
    if let Some(d) = drafts
        .iter()
        .find(|d| !by_id.contains_key(d.draft_id.as_str()))
    {
        return Err(AgentError::AssessmentMismatch(format!(
            "no candidate answer for {}",
            d.draft_id
        )));
    }
    let system = agent.prompts.agent4.render(&[
        ("ocr_text", &ocr_text(ctx)),
        ("layout_summary", &layout_summary(ctx)),
        (
            "policy",
            &policy_text(policy, (ctx.chunk.start_page, ctx.chunk.end_page)),
        ),
        ("questions", &questions_for_assessment(drafts)),
    ]);
    let request = agent.request(
        RoleTag::Agent4,
        format!("{}/i{iteration}/agent4", ctx.chunk.chunk_id),
        system,
        ctx,
    );
    let reply = match agent
        .gateway
        .complete_structured_checked(&request, &schema(), |v| coverage(v, drafts))
    {
        Ok(reply) => reply,
        Err(GatewayError::Unacceptable(message)) => {
            return Err(AgentError::AssessmentMismatch(message))
        }
        Err(e) => return Err(e.into()),
    };
    let rated = ratings(&reply.value);
    let questions = drafts
        .iter()
        .map(|d| {
            let r = &rated[&d.draft_id];
            QuestionAssessment {
                draft_id: d.draft_id.clone(),
                matched: candidate_matches(
                    d,
                    by_id[d.draft_id.as_str()],
                    &r.reference,
                    &agent.settings.tolerances,
                ),
                reference_answer: r.reference.clone(),
                depth: r.depth,
                difficulty: r.difficulty,
            }
        })
        .collect();
    build_assessment(
        questions,
        reply.value["feedback"].as_str().unwrap_or_default(),
    )
}
