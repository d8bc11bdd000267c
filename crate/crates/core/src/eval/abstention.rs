//! Detection of answers that decline to answer.

use std::sync::LazyLock;

use crate::dataset::normalize::{detect_language, normalize_text};
use crate::Language;

/// Token the eval prompt asks models to emit when the document has no answer.
pub const UNANSWERABLE_MARKER: &str = "UNANSWERABLE";

/// Phrases that signal abstention, matched on normalized text at token
/// boundaries.
pub const ENGLISH_PATTERNS: &[&str] = &[
    "unanswerable",
    "not in the document",
    "not in the provided",
    "not in the text",
    "not in the pages",
    "does not contain",
    "doesn't contain",
    "does not mention",
    "does not say",
    "does not specify",
    "does not provide",
    "not mentioned",
    "not provided",
    "not specified",
    "not stated",
    "not available in",
    "no information",
    "not enough information",
    "insufficient information",
    "cannot be answered",
    "can't be answered",
    "cannot be determined",
    "can't be determined",
    "cannot answer",
    "can't answer",
    "unable to answer",
    "unable to determine",
    "i don't know",
    "i do not know",
];

pub const ARABIC_PATTERNS: &[&str] = &[
    "لا يمكن الإجابة",
    "لا يمكن الاجابة",
    "لا يمكن تحديد",
    "لا يمكن معرفة",
    "غير مذكور",
    "غير مذكورة",
    "غير موجود",
    "غير موجودة",
    "غير متوفر",
    "غير متوفرة",
    "لا تحتوي",
    "لا يحتوي",
    "لا توجد معلومات",
    "لا تتوفر معلومات",
    "لا تذكر",
    "لا يذكر",
    "لم يذكر",
    "لم تذكر",
    "لم يتم ذكر",
    "لا أعرف",
    "لا اعلم",
    "لا أعلم",
];

static NORMALIZED: LazyLock<Vec<String>> = LazyLock::new(|| {
    let english = ENGLISH_PATTERNS
        .iter()
        .map(|p| normalize_text(p, Language::English));
    let arabic = ARABIC_PATTERNS
        .iter()
        .map(|p| normalize_text(p, Language::Arabic));
    let mut all: Vec<String> = english.chain(arabic).collect();
    all.sort();
    all.dedup();
    all
});

/// True iff the response matches an abstention phrase in either language.
/// Arabic folding is applied whenever the response contains Arabic script.
pub fn detect_abstention(response: &str, language: Language) -> bool {
    let language = if detect_language(response) == Language::Arabic {
        Language::Arabic
    } else {
        language
    };
    let normalized = normalize_text(response, language);
    if normalized.is_empty() {
        return false;
    }
    let padded = format!(" {normalized} ");
    NORMALIZED
        .iter()
        .any(|p| padded.contains(&format!(" {p} ")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CASES: &[(&str, Language, bool)] = &[
        (
            "The document does not contain this information.",
            Language::English,
            true,
        ),
        ("42", Language::English, false),
        ("لا يمكن الإجابة من الوثيقة", Language::Arabic, true),
        ("UNANSWERABLE", Language::English, true),
        ("unanswerable.", Language::Arabic, true),
        ("I don't know", Language::English, true),
        (
            "This cannot be determined from the pages shown.",
            Language::English,
            true,
        ),
        ("The answer is not mentioned.", Language::English, true),
        ("The table mentions 3 regions.", Language::English, false),
        ("Yes", Language::English, false),
        ("Knowledge graphs", Language::English, false),
        ("لا يُمكِنُ الإجابةُ", Language::Arabic, true),
        ("المعلومة غير مذكورة في النص", Language::Arabic, true),
        ("لا توجد معلومات كافية", Language::Arabic, true),
        ("الرياض", Language::Arabic, false),
        ("", Language::English, false),
        ("annotation", Language::English, false),
    ];

    #[test]
    fn pattern_table() {
        for (text, lang, expected) in CASES {
            assert_eq!(detect_abstention(text, *lang), *expected, "{text:?}");
        }
    }

    #[test]
    fn marker_is_a_pattern() {
        assert!(detect_abstention(UNANSWERABLE_MARKER, Language::English));
    }
}
