//! Agent 5: evidence validation and record emission.

use std::collections::HashMap;

use serde_json::Value;

use super::prompts::{layout_summary, ocr_text, questions_for_validation};
use super::{
    AgentContext, AgentError, Assessment, QuestionDraft, RejectReason, ValidationOutcome, Verdict,
};
use crate::dataset::normalize::detect_language;
use crate::dataset::{infer_answer_type, EvidenceSource, QaRecord, Validation};
use crate::eval::detect_abstention;
use crate::gateway::{Field, RoleTag, Schema};
use crate::hashing::short_hex;
use crate::perception::ChunkContext;
use crate::{Language, QuestionType, RegionCategory};

/// Per-chunk facts copied onto every record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordMeta {
    pub language: Language,
    pub iteration_count: u32,
    pub max_iterations_reached: bool,
}

pub fn schema() -> Schema {
    Schema::object(vec![Field::required(
        "verdicts",
        Schema::array(Schema::object(vec![
            Field::required("id", Schema::String),
            Field::required("verdict", Schema::one_of(&["approved", "rejected"])),
            Field::optional(
                "evidence_sources",
                Schema::array(Schema::object(vec![
                    Field::required("page", Schema::Integer),
                    Field::required("category", Schema::String),
                ])),
            ),
            Field::optional("justification", Schema::Nullable(Box::new(Schema::String))),
            Field::optional("reason", Schema::Nullable(Box::new(Schema::String))),
        ])),
    )])
}

pub fn record_id(chunk_id: &str, ordinal: usize) -> String {
    short_hex(&[chunk_id, &ordinal.to_string()], 20)
}

struct RawVerdict {
    verdict: Verdict,
    sources: Vec<(i64, String)>,
    justification: String,
    reason: String,
}

fn verdicts(value: &Value) -> HashMap<String, RawVerdict> {
    let mut out = HashMap::new();
    for v in value["verdicts"].as_array().into_iter().flatten() {
        let Some(id) = v["id"].as_str() else { continue };
        let verdict = if v["verdict"].as_str() == Some("approved") {
            Verdict::Approved
        } else {
            Verdict::Rejected
        };
        let sources = v["evidence_sources"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|s| Some((s["page"].as_i64()?, s["category"].as_str()?.to_string())))
            .collect();
        let text = |k: &str| v[k].as_str().unwrap_or_default().trim().to_string();
        // First verdict per id wins.
        out.entry(id.to_string()).or_insert(RawVerdict {
            verdict,
            sources,
            justification: text("justification"),
            reason: text("reason"),
        });
    }
    out
}

/// Checks that need no model call.
fn precheck(
    ctx: &ChunkContext,
    draft: &QuestionDraft,
    assessment: &Assessment,
) -> Result<(), RejectReason> {
    let range = ctx.chunk.range();
    if draft
        .claimed_evidence_pages
        .iter()
        .any(|p| !range.contains(*p))
    {
        return Err(RejectReason::EvidenceOutOfRange);
    }
    let Some(a) = assessment.get(&draft.draft_id) else {
        return Err(RejectReason::MissingAssessment);
    };
    if draft.claimed_type != QuestionType::Unanswerable
        && detect_abstention(&a.reference_answer, detect_language(&draft.text))
    {
        return Err(RejectReason::ReferenceAbstains);
    }
    Ok(())
}

fn to_record(
    ctx: &ChunkContext,
    draft: &QuestionDraft,
    answer: &str,
    verdict: &RawVerdict,
    meta: RecordMeta,
) -> Result<QaRecord, RejectReason> {
    if verdict.verdict == Verdict::Rejected {
        let reason = [&verdict.reason, &verdict.justification]
            .into_iter()
            .find(|s| !s.is_empty());
        return Err(RejectReason::Validator(
            reason.cloned().unwrap_or_else(|| "no reason given".into()),
        ));
    }
    if verdict.justification.is_empty() {
        return Err(RejectReason::EmptyJustification);
    }
    let range = ctx.chunk.range();
    let unanswerable = draft.claimed_type == QuestionType::Unanswerable;
    let mut sources = Vec::new();
    if !unanswerable {
        for (page, category) in &verdict.sources {
            let page = u32::try_from(*page)
                .ok()
                .filter(|p| range.contains(*p))
                .ok_or(RejectReason::EvidenceOutOfRange)?;
            match category.parse::<RegionCategory>() {
                Ok(category) => sources.push(EvidenceSource { page, category }),
                Err(e) => tracing::warn!(draft = %draft.draft_id, "ignoring evidence source: {e}"),
            }
        }
        if sources.is_empty() {
            return Err(RejectReason::MissingEvidence);
        }
    }
    sources.sort();
    sources.dedup();
    let mut pages: Vec<u32> = if unanswerable {
        Vec::new()
    } else {
        draft
            .claimed_evidence_pages
            .iter()
            .copied()
            .chain(sources.iter().map(|s| s.page))
            .collect()
    };
    pages.sort_unstable();
    pages.dedup();
    Ok(QaRecord {
        record_id: String::new(),
        doc_id: ctx.chunk.doc_id.clone(),
        chunk_id: ctx.chunk.chunk_id.clone(),
        language: meta.language,
        question: draft.text.clone(),
        answer: answer.to_string(),
        answer_type: (!unanswerable).then(|| infer_answer_type(answer)),
        question_type: draft.claimed_type,
        evidence_pages: pages,
        evidence_sources: sources,
        justification: verdict.justification.clone(),
        validation: Validation::Approved,
        iteration_count: meta.iteration_count,
        max_iterations_reached: meta.max_iterations_reached,
    })
}

pub fn validate_evidence(
    agent: &AgentContext<'_>,
    ctx: &ChunkContext,
    drafts: &[QuestionDraft],
    assessment: &Assessment,
    meta: RecordMeta,
) -> Result<ValidationOutcome, AgentError> {
    let mut outcome = ValidationOutcome::default();
    let mut pending: Vec<(&QuestionDraft, &str)> = Vec::new();
    for d in drafts {
        match precheck(ctx, d, assessment) {
            Ok(()) => pending.push((
                d,
                &assessment
                    .get(&d.draft_id)
                    .expect("prechecked")
                    .reference_answer,
            )),
            Err(reason) => outcome.rejected.push((d.draft_id.clone(), reason)),
        }
    }
    if pending.is_empty() {
        return Ok(outcome);
    }
    let system = agent.prompts.agent5.render(&[
        ("ocr_text", &ocr_text(ctx)),
        ("layout_summary", &layout_summary(ctx)),
        ("questions", &questions_for_validation(&pending)),
    ]);
    let request = agent.request(
        RoleTag::Agent5,
        format!("{}/i{}/agent5", ctx.chunk.chunk_id, meta.iteration_count),
        system,
        ctx,
    );
    let reply = agent.gateway.complete_structured(&request, &schema())?;
    let verdicts = verdicts(&reply.value);
    for (draft, answer) in pending {
        let result = verdicts
            .get(&draft.draft_id)
            .ok_or(RejectReason::MissingVerdict)
            .and_then(|v| to_record(ctx, draft, answer, v, meta));
        match result {
            Ok(mut record) => {
                record.record_id = record_id(&ctx.chunk.chunk_id, outcome.records.len());
                outcome.records.push(record);
            }
            Err(reason) => outcome.rejected.push((draft.draft_id.clone(), reason)),
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use serde_json::json;

    use super::*;
    use crate::agents::tests::{context, draft};
    use crate::agents::{ChainSettings, PromptSet, QuestionAssessment};
    use crate::gateway::mock::{Scripted, ScriptedTransport};
    use crate::gateway::Gateway;

    fn assessment(ids: &[&str]) -> Assessment {
        Assessment {
            questions: ids
                .iter()
                .map(|id| QuestionAssessment {
                    draft_id: id.to_string(),
                    reference_answer: "42".into(),
                    depth: 3,
                    difficulty: 3,
                    matched: false,
                })
                .collect(),
            feedback: String::new(),
            accuracy_estimate: 0.0,
        }
    }

    const META: RecordMeta = RecordMeta {
        language: Language::English,
        iteration_count: 2,
        max_iterations_reached: false,
    };

    fn run(t: Arc<ScriptedTransport>, drafts: &[QuestionDraft]) -> ValidationOutcome {
        let gw = Gateway::for_testing(t, 0);
        let prompts = PromptSet::default();
        let settings = ChainSettings::default();
        let agent = AgentContext {
            gateway: &gw,
            prompts: &prompts,
            settings: &settings,
        };
        let ids: Vec<&str> = drafts.iter().map(|d| d.draft_id.as_str()).collect();
        validate_evidence(&agent, &context(11, 25), drafts, &assessment(&ids), META).unwrap()
    }

    #[test]
    fn out_of_range_rejected_without_model_call() {
        let t = Arc::new(ScriptedTransport::new());
        let out = run(t.clone(), &[draft("a", "Q?", &[9])]);
        assert_eq!(
            out.rejected,
            vec![("a".to_string(), RejectReason::EvidenceOutOfRange)]
        );
        assert!(t.requests().is_empty());
    }

    #[test]
    fn approval_emits_record() {
        let body = json!({"verdicts": [{"id": "a", "verdict": "approved", "evidence_sources": [{"page": 12, "category": "table"}], "justification": "Row 3 of the table."}]});
        let t = Arc::new(
            ScriptedTransport::new().push(RoleTag::Agent5, Scripted::reply(body.to_string())),
        );
        let out = run(t, &[draft("a", "Q?", &[14])]);
        assert!(out.rejected.is_empty());
        let r = &out.records[0];
        assert_eq!(r.evidence_pages, vec![12, 14]);
        assert_eq!(
            r.evidence_sources,
            vec![EvidenceSource {
                page: 12,
                category: RegionCategory::Table
            }]
        );
        assert_eq!(
            (r.answer.as_str(), r.answer_type),
            ("42", Some(crate::AnswerType::Integer))
        );
        assert_eq!(r.iteration_count, 2);
        assert!(r.violations().is_empty());
        assert_eq!(r.record_id, record_id(&context(11, 25).chunk.chunk_id, 0));
    }

    #[test]
    fn rejection_is_listed_with_reason() {
        let body = json!({"verdicts": [{"id": "a", "verdict": "rejected", "reason": "answer not supported"}]});
        let t = Arc::new(
            ScriptedTransport::new().push(RoleTag::Agent5, Scripted::reply(body.to_string())),
        );
        let out = run(t, &[draft("a", "Q?", &[14])]);
        assert_eq!(
            out.rejected,
            vec![(
                "a".into(),
                RejectReason::Validator("answer not supported".into())
            )]
        );
    }

    #[test]
    fn approvals_without_support_are_rejected() {
        let body = json!({"verdicts": [
            {"id": "a", "verdict": "approved", "evidence_sources": [], "justification": "ok"},
            {"id": "b", "verdict": "approved", "evidence_sources": [{"page": 12, "category": "table"}], "justification": " "},
            {"id": "c", "verdict": "approved", "evidence_sources": [{"page": 40, "category": "table"}], "justification": "ok"}
        ]});
        let t = Arc::new(
            ScriptedTransport::new().push(RoleTag::Agent5, Scripted::reply(body.to_string())),
        );
        let drafts = [
            draft("a", "A?", &[12]),
            draft("b", "B?", &[12]),
            draft("c", "C?", &[12]),
            draft("d", "D?", &[12]),
        ];
        let out = run(t, &drafts);
        assert!(out.records.is_empty());
        let reasons: Vec<_> = out.rejected.iter().map(|(_, r)| r.clone()).collect();
        assert_eq!(
            reasons,
            [
                RejectReason::MissingEvidence,
                RejectReason::EmptyJustification,
                RejectReason::EvidenceOutOfRange,
                RejectReason::MissingVerdict
            ]
        );
    }

    #[test]
    fn unanswerable_approval_has_no_evidence() {
        let mut d = draft("u", "What is the CEO's salary?", &[]);
        d.claimed_type = QuestionType::Unanswerable;
        let body = json!({"verdicts": [{"id": "u", "verdict": "approved", "evidence_sources": [{"page": 12, "category": "table"}], "justification": "Salaries are never listed."}]});
        let t = Arc::new(
            ScriptedTransport::new().push(RoleTag::Agent5, Scripted::reply(body.to_string())),
        );
        let out = run(t, &[d]);
        let r = &out.records[0];
        assert!(r.evidence_pages.is_empty() && r.evidence_sources.is_empty());
        assert_eq!(r.answer_type, None);
        assert!(r.violations().is_empty());
    }
}
