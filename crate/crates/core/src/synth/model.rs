//! A deterministic chat model over synthetic fixture corpora.
//!
//! It reads the rendered agent prompts (policy, OCR text, layout summary and
//! question lists) and answers each role from the facts they contain. Agent 3
//! and the evaluation role know every value but answer correctly only with a
//! seeded probability: high for single-fact questions, low for questions
//! combining two facts. Identical requests always get identical replies.

use std::collections::{BTreeMap, HashMap};
use std::sync::LazyLock;

use regex::Regex;
use serde_json::{json, Value};

use super::{term_value, ABSENT_PAGE_BASE};
use crate::agents::prompts::FEEDBACK_HEADER;
use crate::eval::UNANSWERABLE_MARKER;
use crate::gateway::{AttemptError, ChatRequest, ChatTransport, FinishReason, RawReply, RoleTag};
use crate::hashing::{stable_u64, unit_interval};
use crate::{Language, QuestionType};

static TERM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([A-Z]+)-(\d+)\b").expect("regex"));
static FACT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b([A-Z]+-\d+) (?:is|هي) (\d+)").expect("regex"));
static PAGE_MARK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\[page (\d+)\]$").expect("regex"));
static LAYOUT_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\[page (\d+)\] (.+)$").expect("regex"));
static UP_TO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"up to (\d+)").expect("regex"));
static LANGUAGE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"write questions and answers in (\w+)").expect("regex"));

const THRESHOLD: u64 = 500;
const WRONG_OFFSET: u64 = 37;

/// Page a fact was stated on, and its value.
type Located = (u32, u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Value,
    Threshold,
    Sum,
    Difference,
}

impl Kind {
    fn question(self, language: Language, a: &str, b: &str) -> String {
        match (self, language) {
            (Kind::Value, Language::English) => format!("What is the recorded value of {a}?"),
            (Kind::Value, Language::Arabic) => format!("ما هي القيمة المسجلة لـ {a}؟"),
            (Kind::Threshold, Language::English) => {
                format!("Is the recorded value of {a} greater than {THRESHOLD}?")
            }
            (Kind::Threshold, Language::Arabic) => {
                format!("هل القيمة المسجلة لـ {a} أكبر من {THRESHOLD}؟")
            }
            (Kind::Sum, Language::English) => {
                format!("What is the sum of the recorded values of {a} and {b}?")
            }
            (Kind::Sum, Language::Arabic) => format!("ما مجموع القيمتين المسجلتين لـ {a} و {b}؟"),
            (Kind::Difference, Language::English) => {
                format!(
                    "What is the absolute difference between the recorded values of {a} and {b}?"
                )
            }
            (Kind::Difference, Language::Arabic) => {
                format!("ما الفرق المطلق بين القيمتين المسجلتين لـ {a} و {b}؟")
            }
        }
    }

    fn question_type(self, salt: u64) -> QuestionType {
        match self {
            Kind::Value if salt.is_multiple_of(2) => QuestionType::FactualRecall,
            Kind::Value => QuestionType::DataRetrievalOcr,
            Kind::Threshold => QuestionType::Reasoning,
            Kind::Sum => QuestionType::MultiHopReasoning,
            Kind::Difference => QuestionType::Reasoning,
        }
    }
}

/// What a question asks, recovered from its text.
#[derive(Debug, Clone, PartialEq)]
struct Parsed {
    kind: Kind,
    terms: Vec<(String, u32)>,
    language: Language,
}

fn parse_question(text: &str) -> Option<Parsed> {
    let terms: Vec<(String, u32)> = TERM
        .captures_iter(text)
        .filter_map(|c| Some((c[0].to_string(), c[2].parse().ok()?)))
        .collect();
    let language = if text.chars().any(|c| ('\u{0600}'..='\u{06FF}').contains(&c)) {
        Language::Arabic
    } else {
        Language::English
    };
    let kind = match terms.len() {
        1 if text.contains(&format!(" {THRESHOLD}")) => Kind::Threshold,
        1 => Kind::Value,
        2 if text.contains("sum") || text.contains("مجموع") => Kind::Sum,
        2 => Kind::Difference,
        _ => return None,
    };
    Some(Parsed {
        kind,
        terms,
        language,
    })
}

fn yes_no(value: bool, language: Language) -> String {
    match (value, language) {
        (true, Language::English) => "Yes".into(),
        (false, Language::English) => "No".into(),
        (true, Language::Arabic) => "نعم".into(),
        (false, Language::Arabic) => "لا".into(),
    }
}

/// Answer from the given values, or the deliberately wrong variant.
fn render_answer(parsed: &Parsed, values: &[u64], correct: bool) -> String {
    let skew = if correct { 0 } else { WRONG_OFFSET };
    match parsed.kind {
        Kind::Value => (values[0] + skew).to_string(),
        Kind::Threshold => yes_no((values[0] > THRESHOLD) == correct, parsed.language),
        Kind::Sum => (values[0] + values[1] + skew).to_string(),
        Kind::Difference => (values[0].abs_diff(values[1]) + skew).to_string(),
    }
}

/// Known facts by term, with the page they were read on.
fn facts(prompt: &str) -> HashMap<String, (u32, u64)> {
    let mut out = HashMap::new();
    let mut page = 0;
    for line in prompt.lines() {
        if let Some(c) = PAGE_MARK.captures(line.trim()) {
            page = c[1].parse().unwrap_or(0);
            continue;
        }
        for c in FACT.captures_iter(line) {
            if let Ok(v) = c[2].parse() {
                out.insert(c[1].to_string(), (page, v));
            }
        }
    }
    out
}

fn fact_pages(prompt: &str) -> Vec<u32> {
    let mut pages: Vec<u32> = facts(prompt)
        .values()
        .map(|(p, _)| *p)
        .filter(|p| *p > 0)
        .collect();
    pages.sort_unstable();
    pages.dedup();
    pages
}

fn layout_categories(prompt: &str) -> BTreeMap<u32, Vec<String>> {
    let mut out = BTreeMap::new();
    for line in prompt.lines() {
        if let Some(c) = LAYOUT_LINE.captures(line.trim()) {
            let cats = c[2]
                .split("; ")
                .filter_map(|r| r.split_whitespace().next().map(str::to_string))
                .collect();
            out.insert(c[1].parse().unwrap_or(0), cats);
        }
    }
    out
}

/// The single-line JSON question list embedded in a prompt.
fn question_list(prompt: &str) -> Vec<Value> {
    prompt
        .lines()
        .rev()
        .filter(|l| l.trim_start().starts_with("[{") || l.trim() == "[]")
        .find_map(|l| serde_json::from_str::<Vec<Value>>(l.trim()).ok())
        .unwrap_or_default()
}

fn label_of(term: &str) -> &str {
    term.rsplit_once('-').map_or(term, |(l, _)| l)
}

#[derive(Debug, Clone)]
pub struct SyntheticModel {
    seed: String,
    /// Probability that the evaluation role answers an answerable record
    /// correctly.
    eval_accuracy: f64,
}

impl SyntheticModel {
    pub fn new(seed: &str) -> Self {
        Self {
            seed: seed.into(),
            eval_accuracy: 0.5,
        }
    }

    pub fn with_eval_accuracy(mut self, accuracy: f64) -> Self {
        self.eval_accuracy = accuracy.clamp(0.0, 1.0);
        self
    }

    fn draw(&self, parts: &[&str]) -> f64 {
        let mut all = vec![self.seed.as_str()];
        all.extend_from_slice(parts);
        unit_interval(&all)
    }

    fn agent1(&self, req: &ChatRequest) -> Value {
        let prompt = &req.system_prompt;
        let limit: usize = UP_TO
            .captures(prompt)
            .and_then(|c| c[1].parse().ok())
            .unwrap_or(5)
            .max(1);
        let language = match LANGUAGE
            .captures(prompt)
            .map(|c| c[1].to_string())
            .as_deref()
        {
            Some("Arabic") => Language::Arabic,
            _ => Language::English,
        };
        let refine = prompt.contains(FEEDBACK_HEADER);
        let known = facts(prompt);
        let pages = fact_pages(prompt);
        let mut questions = Vec::new();
        if pages.is_empty() {
            return json!({"questions": questions});
        }
        let mut terms: Vec<(&String, u32)> = known.iter().map(|(t, (p, _))| (t, *p)).collect();
        terms.sort_by_key(|(t, p)| (*p, (*t).clone()));
        let label = label_of(terms[0].0).to_string();
        let answerable = if limit > 1 { limit - 1 } else { limit };
        for i in 0..answerable {
            let salt = stable_u64(&[&self.seed, &req.request_id, &i.to_string()]);
            let a = terms[(salt % terms.len() as u64) as usize];
            let (kind, b) = if refine && terms.len() > 1 {
                let step = 1 + (salt >> 16) % (terms.len() as u64 - 1);
                let b = terms[((salt % terms.len() as u64 + step) % terms.len() as u64) as usize];
                (
                    if i % 2 == 0 {
                        Kind::Sum
                    } else {
                        Kind::Difference
                    },
                    Some(b),
                )
            } else {
                (
                    if i % 2 == 0 {
                        Kind::Value
                    } else {
                        Kind::Threshold
                    },
                    None,
                )
            };
            let mut evidence = vec![a.1];
            evidence.extend(b.map(|b| b.1));
            questions.push(json!({
                "question": kind.question(language, a.0, b.map_or("", |b| b.0.as_str())),
                "type": kind.question_type(salt >> 8).key(),
                "evidence_pages": evidence,
            }));
        }
        if limit > 1 {
            let absent = super::term(&label, ABSENT_PAGE_BASE + pages[0]);
            questions.push(json!({
                "question": Kind::Value.question(language, &absent, ""),
                "type": QuestionType::Unanswerable.key(),
                "evidence_pages": [],
            }));
        }
        json!({"questions": questions})
    }

    /// Answer as a reader who knows every value but errs with a seeded
    /// probability. Questions about absent pages get the abstention marker.
    fn guess(
        &self,
        role: &str,
        id: &str,
        question: &str,
        single_accuracy: f64,
        multi_accuracy: f64,
    ) -> String {
        let Some(parsed) = parse_question(question) else {
            return UNANSWERABLE_MARKER.into();
        };
        if parsed.terms.iter().any(|(_, p)| *p >= ABSENT_PAGE_BASE) {
            return UNANSWERABLE_MARKER.into();
        }
        let values: Vec<u64> = parsed.terms.iter().map(|(t, _)| term_value(t)).collect();
        let p = if parsed.terms.len() == 1 {
            single_accuracy
        } else {
            multi_accuracy
        };
        render_answer(&parsed, &values, self.draw(&[role, id]) < p)
    }

    fn agent3(&self, req: &ChatRequest) -> Value {
        let answers: Vec<Value> = question_list(&req.system_prompt)
            .iter()
            .map(|q| {
                let id = q["id"].as_str().unwrap_or_default();
                let text = q["question"].as_str().unwrap_or_default();
                json!({"id": id, "answer": self.guess("agent3", id, text, 0.75, 0.2)})
            })
            .collect();
        json!({"answers": answers})
    }

    fn reference(
        known: &HashMap<String, Located>,
        text: &str,
    ) -> Option<(Parsed, Vec<Located>, String)> {
        let parsed = parse_question(text)?;
        let found: Option<Vec<Located>> = parsed
            .terms
            .iter()
            .map(|(t, _)| known.get(t).copied())
            .collect();
        let found = found?;
        let values: Vec<u64> = found.iter().map(|(_, v)| *v).collect();
        let answer = render_answer(&parsed, &values, true);
        Some((parsed, found, answer))
    }

    fn agent4(&self, req: &ChatRequest) -> Value {
        let known = facts(&req.system_prompt);
        let mut shallow = false;
        let assessments: Vec<Value> = question_list(&req.system_prompt)
            .iter()
            .map(|q| {
                let text = q["question"].as_str().unwrap_or_default();
                let (answer, depth) = match Self::reference(&known, text) {
                    Some((parsed, _, answer)) => (answer, 1 + parsed.terms.len() as u8),
                    None => (UNANSWERABLE_MARKER.to_string(), 2),
                };
                shallow |= depth < 3;
                json!({"id": q["id"], "reference_answer": answer, "depth": depth, "difficulty": depth})
            })
            .collect();
        let feedback = if shallow {
            "Several questions read a single value from one page. Ask questions that combine recorded values from two different pages."
        } else {
            ""
        };
        json!({"assessments": assessments, "feedback": feedback})
    }

    fn agent5(&self, req: &ChatRequest) -> Value {
        let known = facts(&req.system_prompt);
        let layout = layout_categories(&req.system_prompt);
        let verdicts: Vec<Value> = question_list(&req.system_prompt)
            .iter()
            .map(|q| {
                let id = &q["id"];
                let text = q["question"].as_str().unwrap_or_default();
                let answer = q["answer"].as_str().unwrap_or_default();
                let cited: Vec<u64> = q["evidence_pages"].as_array().into_iter().flatten().filter_map(Value::as_u64).collect();
                match Self::reference(&known, text) {
                    None => {
                        let names: Vec<String> = TERM.find_iter(text).map(|m| m.as_str().to_string()).collect();
                        if answer.trim() == UNANSWERABLE_MARKER && cited.is_empty() {
                            json!({"id": id, "verdict": "approved", "evidence_sources": [],
                                   "justification": format!("No page of the chunk records {}.", names.join(" or ")), "reason": ""})
                        } else {
                            json!({"id": id, "verdict": "rejected", "evidence_sources": [], "justification": "",
                                   "reason": "the pages do not support this question"})
                        }
                    }
                    Some((_, found, expected)) => {
                        let pages_ok = found.iter().all(|(p, _)| cited.contains(&u64::from(*p)));
                        if !pages_ok || expected != answer.trim() {
                            return json!({"id": id, "verdict": "rejected", "evidence_sources": [], "justification": "",
                                          "reason": "cited pages or answer disagree with the document"});
                        }
                        let sources: Vec<Value> = found
                            .iter()
                            .map(|(p, _)| {
                                let cats = layout.get(p).cloned().unwrap_or_default();
                                let category = if cats.iter().any(|c| c == "paragraph") {
                                    "paragraph".to_string()
                                } else {
                                    cats.first().cloned().unwrap_or_else(|| "paragraph".into())
                                };
                                json!({"page": p, "category": category})
                            })
                            .collect();
                        let reading: Vec<String> =
                            found.iter().map(|(p, v)| format!("page {p} records the value {v}")).collect();
                        json!({"id": id, "verdict": "approved", "evidence_sources": sources,
                               "justification": format!("Confirmed: {}.", reading.join(" and ")), "reason": ""})
                    }
                }
            })
            .collect();
        json!({"verdicts": verdicts})
    }

    fn eval(&self, req: &ChatRequest) -> String {
        let question = req.user_text();
        let question = question
            .split_once("Question: ")
            .map_or(question.as_str(), |(_, q)| q);
        self.guess(
            "eval",
            &req.request_id,
            question,
            self.eval_accuracy,
            self.eval_accuracy,
        )
    }
}

impl ChatTransport for SyntheticModel {
    fn send(&self, req: &ChatRequest) -> Result<RawReply, AttemptError> {
        let text = match req.role_tag {
            RoleTag::Agent1 => self.agent1(req).to_string(),
            RoleTag::Agent3 => self.agent3(req).to_string(),
            RoleTag::Agent4 => self.agent4(req).to_string(),
            RoleTag::Agent5 => self.agent5(req).to_string(),
            RoleTag::EvalModel => self.eval(req),
            other => {
                return Err(AttemptError::Permanent(format!(
                    "synthetic model does not serve role {other}"
                )))
            }
        };
        Ok(RawReply {
            text,
            finish_reason: FinishReason::Complete,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn question_round_trip() {
        for language in Language::ALL {
            for kind in [Kind::Value, Kind::Threshold, Kind::Sum, Kind::Difference] {
                let q = kind.question(language, "AB-3", "AB-7");
                let parsed = parse_question(&q).unwrap();
                assert_eq!((parsed.kind, parsed.language), (kind, language), "{q}");
            }
        }
    }

    #[test]
    fn facts_are_read_per_page() {
        let prompt = "OCR text by page:\n[page 4]\nSection 4\nThe recorded value of AB-4 is 321.\n[page 5]\nالقسم 5\nالقيمة المسجلة لـ AB-5 هي 777.\n";
        let f = facts(prompt);
        assert_eq!(f["AB-4"], (4, 321));
        assert_eq!(f["AB-5"], (5, 777));
    }

    #[test]
    fn wrong_answers_do_not_match() {
        let parsed =
            parse_question("What is the sum of the recorded values of A-1 and A-2?").unwrap();
        assert_ne!(
            render_answer(&parsed, &[100, 200], true),
            render_answer(&parsed, &[100, 200], false)
        );
        let parsed = parse_question("Is the recorded value of A-1 greater than 500?").unwrap();
        assert_eq!(render_answer(&parsed, &[600], true), "Yes");
        assert_eq!(render_answer(&parsed, &[600], false), "No");
    }

    #[test]
    fn replies_are_deterministic() {
        let model = SyntheticModel::new("s");
        let req = ChatRequest::new(RoleTag::EvalModel, "eval/m/r1", "sys")
            .text("Question: What is the recorded value of Q-3?");
        let a = model.send(&req).unwrap().text;
        assert_eq!(a, model.send(&req).unwrap().text);
        let absent = ChatRequest::new(RoleTag::EvalModel, "eval/m/r2", "sys")
            .text("Question: What is the recorded value of Q-903?");
        assert_eq!(model.send(&absent).unwrap().text, UNANSWERABLE_MARKER);
    }
}
