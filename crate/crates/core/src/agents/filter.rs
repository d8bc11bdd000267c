//! Agent 2: removal of empty and near-duplicate drafts.

use super::{AgentError, QuestionDraft};
use crate::dataset::matcher::token_f1;
use crate::dataset::normalize::{detect_language, normalize_text};

/// Near-duplicate test on normalized text: equal, or token F1 at least
/// `threshold`.
pub fn near_duplicate(a: &str, b: &str, threshold: f64) -> bool {
    let lang = if detect_language(a) == detect_language(b) {
        detect_language(a)
    } else {
        crate::Language::Arabic
    };
    let (na, nb) = (normalize_text(a, lang), normalize_text(b, lang));
    na == nb || token_f1(a, b, lang) >= threshold
}

/// Keeps the first of each near-duplicate group, in input order.
pub fn filter_questions(
    drafts: &[QuestionDraft],
    threshold: f64,
) -> Result<Vec<QuestionDraft>, AgentError> {
    let mut kept: Vec<QuestionDraft> = Vec::new();
    for d in drafts {
        let lang = detect_language(&d.text);
        if normalize_text(&d.text, lang).is_empty() {
            continue;
        }
        if kept
            .iter()
            .any(|k| near_duplicate(&k.text, &d.text, threshold))
        {
            continue;
        }
        kept.push(d.clone());
    }
    if kept.is_empty() {
        return Err(AgentError::AllFiltered);
    }
    Ok(kept)
}
