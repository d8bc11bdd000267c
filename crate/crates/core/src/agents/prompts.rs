//! System prompt templates with named placeholders.

use std::collections::BTreeSet;
use std::fmt::Write;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde_json::json;

use super::{Policy, QuestionDraft};
use crate::perception::ChunkContext;

pub const PLACEHOLDERS: &[&str] = &[
    "ocr_text",
    "layout_summary",
    "policy",
    "feedback",
    "questions",
];

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").expect("valid regex"));

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("template `{template}` is missing placeholder {{{placeholder}}}")]
    MissingPlaceholder {
        template: String,
        placeholder: String,
    },
    #[error("template `{template}` uses unknown placeholder {{{placeholder}}}")]
    UnknownPlaceholder {
        template: String,
        placeholder: String,
    },
    #[error("cannot read template {path}: {message}")]
    Read { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    name: String,
    text: String,
}

impl Template {
    pub fn parse(name: &str, text: &str, required: &[&str]) -> Result<Self, TemplateError> {
        let used: BTreeSet<&str> = PLACEHOLDER
            .captures_iter(text)
            .map(|c| c.get(1).expect("group").as_str())
            .collect();
        if let Some(unknown) = used.iter().find(|p| !PLACEHOLDERS.contains(p)) {
            return Err(TemplateError::UnknownPlaceholder {
                template: name.into(),
                placeholder: unknown.to_string(),
            });
        }
        if let Some(missing) = required.iter().find(|p| !used.contains(*p)) {
            return Err(TemplateError::MissingPlaceholder {
                template: name.into(),
                placeholder: missing.to_string(),
            });
        }
        Ok(Self {
            name: name.into(),
            text: text.into(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Substitutes placeholders in a single pass, so values that themselves
    /// contain `{...}` are left alone.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        PLACEHOLDER
            .replace_all(&self.text, |c: &regex::Captures<'_>| {
                let key = &c[1];
                values
                    .iter()
                    .find(|(k, _)| *k == key)
                    .map_or_else(|| c[0].to_string(), |(_, v)| v.to_string())
            })
            .into_owned()
    }
}

pub const AGENT1_REQUIRED: &[&str] = &["ocr_text", "layout_summary", "policy", "feedback"];
pub const AGENT3_REQUIRED: &[&str] = &["questions"];
pub const AGENT4_REQUIRED: &[&str] = &["ocr_text", "layout_summary", "questions"];
pub const AGENT5_REQUIRED: &[&str] = &["ocr_text", "layout_summary", "questions"];

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub agent1: Template,
    pub agent3: Template,
    pub agent4: Template,
    pub agent5: Template,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            agent1: Template::parse(
                "agent1",
                include_str!("../../prompts/agent1.txt"),
                AGENT1_REQUIRED,
            )
            .expect("builtin template"),
            agent3: Template::parse(
                "agent3",
                include_str!("../../prompts/agent3.txt"),
                AGENT3_REQUIRED,
            )
            .expect("builtin template"),
            agent4: Template::parse(
                "agent4",
                include_str!("../../prompts/agent4.txt"),
                AGENT4_REQUIRED,
            )
            .expect("builtin template"),
            agent5: Template::parse(
                "agent5",
                include_str!("../../prompts/agent5.txt"),
                AGENT5_REQUIRED,
            )
            .expect("builtin template"),
        }
    }
}

/// Template file overrides; `None` keeps the built-in template.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent1: Option<std::path::PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent3: Option<std::path::PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent4: Option<std::path::PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent5: Option<std::path::PathBuf>,
}

fn load_override(
    slot: &mut Template,
    path: Option<&Path>,
    required: &[&str],
) -> Result<(), TemplateError> {
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| TemplateError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        *slot = Template::parse(&path.display().to_string(), &text, required)?;
    }
    Ok(())
}

impl PromptSet {
    pub fn load(paths: &PromptPaths) -> Result<Self, TemplateError> {
        let mut set = Self::default();
        load_override(&mut set.agent1, paths.agent1.as_deref(), AGENT1_REQUIRED)?;
        load_override(&mut set.agent3, paths.agent3.as_deref(), AGENT3_REQUIRED)?;
        load_override(&mut set.agent4, paths.agent4.as_deref(), AGENT4_REQUIRED)?;
        load_override(&mut set.agent5, paths.agent5.as_deref(), AGENT5_REQUIRED)?;
        Ok(set)
    }
}

pub fn ocr_text(ctx: &ChunkContext) -> String {
    let mut out = String::new();
    for o in &ctx.ocr {
        let text = if o.text.trim().is_empty() {
            "(no text recognised)"
        } else {
            o.text.trim_end()
        };
        let _ = writeln!(out, "[page {}]\n{}", o.page_index, text);
    }
    out
}

pub fn layout_summary(ctx: &ChunkContext) -> String {
    let mut out = String::new();
    for page in ctx.chunk.range().pages() {
        let regions: Vec<String> = ctx
            .regions_on(page)
            .map(|r| {
                let [x0, y0, x1, y1] = r.bbox;
                format!(
                    "{} ({x0:.0}, {y0:.0}, {x1:.0}, {y1:.0})",
                    r.category.label().to_lowercase()
                )
            })
            .collect();
        if !regions.is_empty() {
            let _ = writeln!(out, "[page {page}] {}", regions.join("; "));
        }
    }
    if out.is_empty() {
        out.push_str("No layout regions detected.\n");
    }
    out
}

pub fn policy_text(policy: &Policy, pages: (u32, u32)) -> String {
    let mix: Vec<String> = policy
        .mix_percentages()
        .iter()
        .map(|(t, pct)| format!("{} {pct:.1}%", t.label()))
        .collect();
    format!(
        "- Language: write questions and answers in {}.\n- Number of questions: up to {}.\n- Target question type mix: {}.\n- Difficulty target: {}.\n- Evidence: cite pages between {} and {}.\n- Question types: {}.",
        policy.language.label(),
        policy.questions_per_chunk,
        mix.join(", "),
        policy.difficulty_target,
        pages.0,
        pages.1,
        crate::QuestionType::ALL.iter().map(|t| t.label()).collect::<Vec<_>>().join(", "),
    )
}

pub const NO_FEEDBACK: &str = "No prior feedback (initial generation).";
pub const FEEDBACK_HEADER: &str = "Reviewer feedback on the previous question set:";

pub fn feedback_text(feedback: Option<&str>) -> String {
    match feedback {
        Some(f) => {
            format!("{FEEDBACK_HEADER}\n{f}\nRefine and revise the question set accordingly.")
        }
        None => NO_FEEDBACK.to_string(),
    }
}

/// Question list for Agent 3: ids and text only.
pub fn questions_for_answering(drafts: &[QuestionDraft]) -> String {
    let items: Vec<_> = drafts
        .iter()
        .map(|d| json!({"id": d.draft_id, "question": d.text}))
        .collect();
    serde_json::to_string(&items).expect("json")
}

pub fn questions_for_assessment(drafts: &[QuestionDraft]) -> String {
    let items: Vec<_> = drafts
        .iter()
        .map(|d| {
            json!({
                "id": d.draft_id,
                "question": d.text,
                "type": d.claimed_type.label(),
                "evidence_pages": d.claimed_evidence_pages,
            })
        })
        .collect();
    serde_json::to_string(&items).expect("json")
}

pub fn questions_for_validation(drafts: &[(&QuestionDraft, &str)]) -> String {
    let items: Vec<_> = drafts
        .iter()
        .map(|(d, answer)| {
            json!({
                "id": d.draft_id,
                "question": d.text,
                "type": d.claimed_type.label(),
                "answer": answer,
                "evidence_pages": d.claimed_evidence_pages,
            })
        })
        .collect();
    serde_json::to_string(&items).expect("json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_templates_parse() {
        let set = PromptSet::default();
        assert_eq!(set.agent1.name(), "agent1");
    }

    #[test]
    fn missing_placeholder_is_an_error() {
        let err =
            Template::parse("a1", "{ocr_text} {policy} {feedback}", AGENT1_REQUIRED).unwrap_err();
        assert!(
            matches!(err, TemplateError::MissingPlaceholder { ref placeholder, .. } if placeholder == "layout_summary")
        );
        assert!(err.to_string().contains("{layout_summary}"));
    }

    #[test]
    fn unknown_placeholder_is_an_error() {
        assert!(matches!(
            Template::parse("a3", "{questions} {answerz}", AGENT3_REQUIRED),
            Err(TemplateError::UnknownPlaceholder { .. })
        ));
    }

    #[test]
    fn json_examples_are_not_placeholders() {
        Template::parse("a3", "{questions}\n{\"answers\": []}", AGENT3_REQUIRED).unwrap();
    }

    #[test]
    fn render_is_single_pass() {
        let t = Template::parse("t", "A {questions} B {feedback}", &[]).unwrap();
        assert_eq!(
            t.render(&[("questions", "{feedback}"), ("feedback", "F")]),
            "A {feedback} B F"
        );
    }

    #[test]
    fn override_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a3.txt");
        std::fs::write(&path, "Answer: {questions}").unwrap();
        let set = PromptSet::load(&PromptPaths {
            agent3: Some(path.clone()),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(set.agent3.render(&[("questions", "[]")]), "Answer: []");
        std::fs::write(&path, "Answer nothing").unwrap();
        assert!(PromptSet::load(&PromptPaths {
            agent3: Some(path),
            ..Default::default()
        })
        .is_err());
    }
}
