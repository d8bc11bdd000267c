//! The per-chunk feedback loop.

use serde::{Deserialize, Serialize};

use super::validate::RecordMeta;
use super::{
    answer_questions, assess, filter_questions, generate_questions, should_escalate,
    validate_evidence, AgentContext, AgentError, Assessment, Policy, QuestionDraft, RejectReason,
    ESCALATION_THRESHOLD,
};
use crate::dataset::QaRecord;
use crate::perception::ChunkContext;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: u32,
    pub drafts: usize,
    pub kept: usize,
    pub accuracy: Option<f64>,
    pub escalated: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChainTrace {
    pub iterations: Vec<IterationTrace>,
    /// Iteration whose drafts were validated.
    pub validated_iteration: u32,
    pub validation_calls: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutcome {
    pub records: Vec<QaRecord>,
    pub rejected: Vec<(String, RejectReason)>,
    pub trace: ChainTrace,
}

fn escalation_feedback(assessment: &Assessment) -> String {
    if !assessment.feedback.trim().is_empty() {
        return assessment.feedback.clone();
    }
    format!(
        "The answering agent got {:.0}% of the questions right, above the {:.0}% target. Make the questions harder: require combining evidence across pages, multi-step reasoning and careful reading of tables and figures.",
        assessment.accuracy_estimate * 100.0,
        ESCALATION_THRESHOLD * 100.0
    )
}

/// Runs generate, filter, answer and assess until the candidate accuracy is
/// at or below the threshold or `max_iterations` is reached, then validates
/// the last successful iteration's drafts once.
pub fn run_chain(
    agent: &AgentContext<'_>,
    ctx: &ChunkContext,
    policy: &Policy,
) -> Result<ChainOutcome, AgentError> {
    let max_iterations = agent.settings.max_iterations.max(1);
    let mut trace = ChainTrace::default();
    let mut feedback: Option<String> = None;
    let mut last_good: Option<(u32, Vec<QuestionDraft>, Assessment, bool)> = None;
    let mut reasons = Vec::new();
    let mut partial = Vec::new();
    let mut performed = 0;

    for iteration in 1..=max_iterations {
        performed = iteration;
        let mut entry = IterationTrace {
            iteration,
            drafts: 0,
            kept: 0,
            accuracy: None,
            escalated: false,
            failure: None,
        };
        let step = (|| {
            let drafts = generate_questions(agent, ctx, policy, feedback.as_deref(), iteration)?;
            entry.drafts = drafts.len();
            partial.clone_from(&drafts);
            let kept = filter_questions(&drafts, agent.settings.dedup_threshold)?;
            entry.kept = kept.len();
            let answers = answer_questions(agent, ctx, &kept, iteration)?;
            let assessment = assess(agent, ctx, &kept, &answers, policy, iteration)?;
            Ok::<_, AgentError>((kept, assessment))
        })();
        match step {
            Ok((kept, assessment)) => {
                let escalate = should_escalate(assessment.accuracy_estimate);
                entry.accuracy = Some(assessment.accuracy_estimate);
                entry.escalated = escalate;
                trace.iterations.push(entry);
                tracing::debug!(
                    chunk = %ctx.chunk.chunk_id,
                    iteration,
                    accuracy = assessment.accuracy_estimate,
                    escalate,
                    "chain iteration"
                );
                let next_feedback = escalate.then(|| escalation_feedback(&assessment));
                last_good = Some((iteration, kept, assessment, escalate));
                if !escalate {
                    break;
                }
                feedback = next_feedback;
            }
            Err(e @ (AgentError::GenerationEmpty | AgentError::AllFiltered)) => {
                tracing::warn!(chunk = %ctx.chunk.chunk_id, iteration, "iteration produced no questions: {e}");
                entry.failure = Some(e.to_string());
                trace.iterations.push(entry);
                reasons.push(e.to_string());
            }
            Err(e) => return Err(e),
        }
    }

    let Some((iteration, kept, assessment, escalated)) = last_good else {
        return Err(AgentError::ChainExhausted {
            iterations: performed,
            reasons,
            partial,
        });
    };
    let meta = RecordMeta {
        language: policy.language,
        iteration_count: performed,
        max_iterations_reached: escalated && performed == max_iterations,
    };
    trace.validated_iteration = iteration;
    trace.validation_calls += 1;
    let outcome = validate_evidence(agent, ctx, &kept, &assessment, meta)?;
    Ok(ChainOutcome {
        records: outcome.records,
        rejected: outcome.rejected,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use serde_json::json;

    use super::*;
    use crate::agents::tests::context;
    use crate::agents::{ChainSettings, PromptSet};
    use crate::gateway::mock::{Scripted, ScriptedTransport};
    use crate::gateway::{Gateway, RoleTag};

    /// Scripts one iteration of ten questions where `correct` candidates
    /// match their references.
    fn iteration(t: ScriptedTransport, correct: usize) -> ScriptedTransport {
        let ctx = context(11, 25);
        let n = 10;
        let questions: Vec<_> = (0..n)
            .map(|i| json!({"question": format!("What is value number {i}?"), "type": "reasoning", "evidence_pages": [12]}))
            .collect();
        let it = t.requests_len_hint();
        let ids: Vec<String> = (1..=n)
            .map(|k| format!("{}/i{it}/q{k:02}", ctx.chunk.chunk_id))
            .collect();
        let answers: Vec<_> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| json!({"id": id, "answer": if i < correct { format!("{}", 100 + i) } else { "0".into() }}))
            .collect();
        let refs: Vec<_> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| json!({"id": id, "reference_answer": format!("{}", 100 + i), "depth": 3, "difficulty": 3}))
            .collect();
        t.push(
            RoleTag::Agent1,
            Scripted::reply(json!({"questions": questions}).to_string()),
        )
        .push(
            RoleTag::Agent3,
            Scripted::reply(json!({"answers": answers}).to_string()),
        )
        .push(
            RoleTag::Agent4,
            Scripted::reply(json!({"assessments": refs, "feedback": "go deeper"}).to_string()),
        )
    }

    trait Hint {
        fn requests_len_hint(&self) -> usize;
    }

    impl Hint for ScriptedTransport {
        fn requests_len_hint(&self) -> usize {
            self.queued(RoleTag::Agent1) + 1
        }
    }

    fn approve_all(t: ScriptedTransport, it: u32) -> ScriptedTransport {
        let ctx = context(11, 25);
        let verdicts: Vec<_> = (1..=10)
            .map(|k| {
                json!({"id": format!("{}/i{it}/q{k:02}", ctx.chunk.chunk_id), "verdict": "approved",
                       "evidence_sources": [{"page": 12, "category": "paragraph"}], "justification": "stated on page 12"})
            })
            .collect();
        t.push(
            RoleTag::Agent5,
            Scripted::reply(json!({"verdicts": verdicts}).to_string()),
        )
    }

    fn run(t: Arc<ScriptedTransport>, max_iterations: u32) -> Result<ChainOutcome, AgentError> {
        let gw = Gateway::for_testing(t, 0);
        let prompts = PromptSet::default();
        let settings = ChainSettings {
            max_iterations,
            ..Default::default()
        };
        let agent = AgentContext {
            gateway: &gw,
            prompts: &prompts,
            settings: &settings,
        };
        run_chain(
            &agent,
            &context(11, 25),
            &Policy {
                questions_per_chunk: 10,
                ..Policy::default()
            },
        )
    }

    #[test]
    fn accuracies_point_six_five_three_take_three_iterations() {
        let t = [6, 5, 3]
            .into_iter()
            .fold(ScriptedTransport::new(), iteration);
        let t = Arc::new(approve_all(t, 3));
        let out = run(t.clone(), 5).unwrap();
        let accs: Vec<_> = out
            .trace
            .iterations
            .iter()
            .map(|i| i.accuracy.unwrap())
            .collect();
        assert_eq!(accs, [0.6, 0.5, 0.3]);
        assert_eq!(out.trace.validation_calls, 1);
        assert_eq!(out.trace.validated_iteration, 3);
        assert_eq!(t.requests_for(RoleTag::Agent5).len(), 1);
        assert_eq!(out.records.len(), 10);
        assert!(out
            .records
            .iter()
            .all(|r| r.iteration_count == 3 && !r.max_iterations_reached));
        let a1 = t.requests_for(RoleTag::Agent1);
        assert!(a1[1].system_prompt.contains("go deeper"));
        assert!(!a1[0].system_prompt.contains("go deeper"));
    }

    #[test]
    fn low_first_accuracy_stops_after_one() {
        let t = Arc::new(approve_all(iteration(ScriptedTransport::new(), 2), 1));
        let out = run(t, 3).unwrap();
        assert_eq!(out.trace.iterations.len(), 1);
        assert!(out.records.iter().all(|r| r.iteration_count == 1));
    }

    #[test]
    fn cap_reached_flags_records() {
        let t = [9, 9, 9]
            .into_iter()
            .fold(ScriptedTransport::new(), iteration);
        let t = Arc::new(approve_all(t, 3));
        let out = run(t, 3).unwrap();
        assert_eq!(out.trace.iterations.len(), 3);
        assert!(out
            .records
            .iter()
            .all(|r| r.iteration_count == 3 && r.max_iterations_reached));
    }

    #[test]
    fn every_iteration_empty_is_exhausted() {
        let empty =
            json!({"questions": [{"question": "", "type": "reasoning", "evidence_pages": []}]})
                .to_string();
        let mut t = ScriptedTransport::new();
        for _ in 0..2 {
            t = t.push(RoleTag::Agent1, Scripted::reply(empty.clone()));
        }
        match run(Arc::new(t), 2) {
            Err(AgentError::ChainExhausted {
                iterations,
                reasons,
                ..
            }) => {
                assert_eq!(iterations, 2);
                assert_eq!(reasons.len(), 2);
            }
            other => panic!("{other:?}"),
        }
    }
}
