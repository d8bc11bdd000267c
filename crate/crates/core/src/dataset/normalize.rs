//! Text normalization for answer comparison.
//!
//! Rules applied in order:
//!
//! 1. Arabic only: strip harakat and Quranic annotation marks, drop tatweel,
//!    fold alef variants (أ إ آ ٱ) to bare alef and alef maqsura (ى) to ya.
//! 2. Case fold.
//! 3. Replace every Unicode punctuation character with a space.
//! 4. Collapse whitespace runs to a single space and trim.
//!
//! Every rule maps its output into its own fixed point, so the whole
//! function is idempotent.

use std::sync::LazyLock;

use regex::Regex;

use super::taxonomy::Language;

const TATWEEL: char = '\u{0640}';
const BARE_ALEF: char = '\u{0627}';
const ALEF_MAQSURA: char = '\u{0649}';
const YA: char = '\u{064A}';

static PUNCTUATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\p{P}").expect("valid regex"));

pub fn is_arabic_mark(c: char) -> bool {
    matches!(c,
        '\u{0610}'..='\u{061A}'
        | '\u{064B}'..='\u{065F}'
        | '\u{0670}'
        | '\u{06D6}'..='\u{06DC}'
        | '\u{06DF}'..='\u{06E8}'
        | '\u{06EA}'..='\u{06ED}')
}

fn fold_arabic_char(c: char) -> Option<char> {
    match c {
        c if is_arabic_mark(c) => None,
        TATWEEL => None,
        '\u{0622}' | '\u{0623}' | '\u{0625}' | '\u{0671}' | '\u{0672}' | '\u{0673}' => {
            Some(BARE_ALEF)
        }
        ALEF_MAQSURA => Some(YA),
        c => Some(c),
    }
}

pub fn normalize_text(text: &str, language: Language) -> String {
    let folded: String = match language {
        Language::Arabic => text.chars().filter_map(fold_arabic_char).collect(),
        Language::English => text.to_string(),
    };
    let lowered = folded.to_lowercase();
    let spaced = PUNCTUATION.replace_all(&lowered, " ");
    spaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whitespace tokens of the normalized text.
pub fn tokens(text: &str, language: Language) -> Vec<String> {
    normalize_text(text, language)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Guess the language of a free-text string: Arabic if any Arabic letter
/// occurs, English otherwise.
pub fn detect_language(text: &str) -> Language {
    if text.chars().any(|c| matches!(c, '\u{0600}'..='\u{06FF}' | '\u{0750}'..='\u{077F}' | '\u{FB50}'..='\u{FDFF}' | '\u{FE70}'..='\u{FEFF}')) {
        Language::Arabic
    } else {
        Language::English
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn english_case_and_punctuation() {
        assert_eq!(
            normalize_text("The Answer.", Language::English),
            "the answer"
        );
        assert_eq!(
            normalize_text("  What is X? ", Language::English),
            "what is x"
        );
        assert_eq!(
            normalize_text("what is x ?", Language::English),
            "what is x"
        );
        assert_eq!(normalize_text("", Language::English), "");
    }

    #[test]
    fn arabic_diacritics_and_alef() {
        assert_eq!(normalize_text("أَحْمَد", Language::Arabic), "احمد");
        assert_eq!(normalize_text("إِسْلَام", Language::Arabic), "اسلام");
        assert_eq!(normalize_text("آمـــن", Language::Arabic), "امن");
        assert_eq!(normalize_text("مستشفى", Language::Arabic), "مستشفي");
        assert_eq!(normalize_text("ما هو؟", Language::Arabic), "ما هو");
    }

    #[test]
    fn decomposed_hamza_folds_like_precomposed() {
        // alef + combining hamza above
        assert_eq!(
            normalize_text("\u{0627}\u{0654}حمد", Language::Arabic),
            normalize_text("أحمد", Language::Arabic)
        );
    }

    #[test]
    fn detects_arabic() {
        assert_eq!(detect_language("ما هو"), Language::Arabic);
        assert_eq!(detect_language("what"), Language::English);
    }

    proptest! {
        #[test]
        fn idempotent_any_string(s in any::<String>()) {
            for lang in Language::ALL {
                let once = normalize_text(&s, lang);
                prop_assert_eq!(normalize_text(&once, lang), once.clone());
            }
        }
    }
}
