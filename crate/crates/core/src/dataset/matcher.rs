//! Type-aware answer matching shared by the assessment agent and the
//! evaluation harness. A candidate that cannot be parsed as the gold type is
//! a non-match, never an error.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::answer_type::{
    infer_answer_type, parse_any_array, parse_boolean, parse_float, parse_integer,
    parse_json_object, parse_list_items,
};
use super::normalize::{detect_language, normalize_text};
use super::taxonomy::{AnswerType, Language};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Minimum token F1 over normalized text for a fuzzy text match.
    pub text_similarity_threshold: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            abs_tol: 1e-6,
            rel_tol: 1e-2,
            text_similarity_threshold: 0.85,
        }
    }
}

fn pair_language(a: &str, b: &str) -> Language {
    if detect_language(a) == Language::Arabic || detect_language(b) == Language::Arabic {
        Language::Arabic
    } else {
        Language::English
    }
}

/// Token-level F1 between two normalized strings, counting repeated tokens
/// as a multiset.
pub fn token_f1(a: &str, b: &str, language: Language) -> f64 {
    let left = normalize_text(a, language);
    let right = normalize_text(b, language);
    let left: Vec<&str> = left.split_whitespace().collect();
    let right: Vec<&str> = right.split_whitespace().collect();
    if left.is_empty() && right.is_empty() {
        return 1.0;
    }
    if left.is_empty() || right.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &right {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &left {
        if let Some(n) = counts.get_mut(t) {
            if *n > 0 {
                *n -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / left.len() as f64;
    let recall = common as f64 / right.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn floats_close(candidate: f64, gold: f64, tol: &Tolerances) -> bool {
    (candidate - gold).abs() <= tol.abs_tol.max(tol.rel_tol * gold.abs())
}

fn text_match(candidate: &str, gold: &str, tol: &Tolerances) -> bool {
    let language = pair_language(candidate, gold);
    normalize_text(candidate, language) == normalize_text(gold, language)
        || token_f1(candidate, gold, language) >= tol.text_similarity_threshold
}

fn integer_match(candidate: &str, gold: &str) -> bool {
    let Some(g) = parse_integer(gold) else {
        return false;
    };
    match parse_integer(candidate) {
        Some(c) => c == g,
        None => parse_float(candidate).is_some_and(|c| c.fract() == 0.0 && c == g as f64),
    }
}

/// Scalar items inside lists compare numerically when the gold item is a
/// number, otherwise by normalized text.
fn item_match(candidate: &str, gold: &str, tol: &Tolerances) -> bool {
    match infer_answer_type(gold) {
        AnswerType::Integer | AnswerType::Float => {
            match (parse_float(candidate), parse_float(gold)) {
                (Some(c), Some(g)) => floats_close(c, g, tol),
                _ => false,
            }
        }
        AnswerType::Boolean => {
            parse_boolean(candidate).is_some() && parse_boolean(candidate) == parse_boolean(gold)
        }
        _ => {
            let language = pair_language(candidate, gold);
            normalize_text(candidate, language) == normalize_text(gold, language)
        }
    }
}

/// Whether a perfect matching exists between the two item multisets.
fn unordered_match(candidate: &[String], gold: &[String], tol: &Tolerances) -> bool {
    if candidate.len() != gold.len() {
        return false;
    }
    let n = gold.len();
    let edges: Vec<Vec<usize>> = gold
        .iter()
        .map(|g| {
            (0..n)
                .filter(|&j| item_match(&candidate[j], g, tol))
                .collect()
        })
        .collect();
    // Kuhn's augmenting paths; lists are short.
    let mut owner: Vec<Option<usize>> = vec![None; n];
    fn augment(
        i: usize,
        edges: &[Vec<usize>],
        owner: &mut [Option<usize>],
        seen: &mut [bool],
    ) -> bool {
        for &j in &edges[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none() || augment(owner[j].expect("checked"), edges, owner, seen) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    (0..n).all(|i| augment(i, &edges, &mut owner, &mut vec![false; n]))
}

/// Structural equality ignoring object key order; numbers compare by value.
pub fn json_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        (Value::Array(xs), Value::Array(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| json_equal(x, y))
        }
        (Value::Object(xs), Value::Object(ys)) => {
            xs.len() == ys.len()
                && xs
                    .iter()
                    .all(|(k, v)| ys.get(k).is_some_and(|w| json_equal(v, w)))
        }
        _ => a == b,
    }
}

fn array_element_match(candidate: &Value, gold: &Value, tol: &Tolerances) -> bool {
    match (candidate, gold) {
        (Value::Number(c), Value::Number(g)) => match (c.as_f64(), g.as_f64()) {
            (Some(c), Some(g)) => floats_close(c, g, tol),
            _ => false,
        },
        (Value::String(c), Value::String(g)) => {
            let language = pair_language(c, g);
            normalize_text(c, language) == normalize_text(g, language)
        }
        (Value::Array(cs), Value::Array(gs)) => {
            cs.len() == gs.len()
                && cs
                    .iter()
                    .zip(gs)
                    .all(|(c, g)| array_element_match(c, g, tol))
        }
        _ => json_equal(candidate, gold),
    }
}

pub fn match_answer(
    candidate: &str,
    gold: &str,
    answer_type: AnswerType,
    tol: &Tolerances,
) -> bool {
    match answer_type {
        AnswerType::Integer => integer_match(candidate, gold),
        AnswerType::Float => match (parse_float(candidate), parse_float(gold)) {
            (Some(c), Some(g)) => floats_close(c, g, tol),
            _ => false,
        },
        AnswerType::Boolean => match (parse_boolean(candidate), parse_boolean(gold)) {
            (Some(c), Some(g)) => c == g,
            _ => false,
        },
        AnswerType::Text | AnswerType::Code => text_match(candidate, gold, tol),
        AnswerType::List => match (parse_list_items(candidate), parse_list_items(gold)) {
            (Some(c), Some(g)) => unordered_match(&c, &g, tol),
            _ => false,
        },
        AnswerType::Array => match (parse_any_array(candidate), parse_any_array(gold)) {
            (Some(c), Some(g)) => array_element_match(&Value::Array(c), &Value::Array(g), tol),
            _ => false,
        },
        AnswerType::Json => match (parse_json_object(candidate), parse_json_object(gold)) {
            (Some(c), Some(g)) => json_equal(&c, &g),
            _ => false,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn spec_examples() {
        assert!(match_answer("42", "42", AnswerType::Integer, &tol()));
        assert!(match_answer("3.1399", "3.14", AnswerType::Float, &tol()));
        assert!(!match_answer(
            "The answer is forty-two",
            "42",
            AnswerType::Integer,
            &tol()
        ));
    }

    #[test]
    fn integral_float_matches_integer() {
        assert!(match_answer("42.0", "42", AnswerType::Integer, &tol()));
        assert!(!match_answer("42.5", "42", AnswerType::Integer, &tol()));
    }

    #[test]
    fn abs_tol_floor_near_zero() {
        assert!(match_answer("0.0000005", "0", AnswerType::Float, &tol()));
        assert!(!match_answer("0.01", "0", AnswerType::Float, &tol()));
    }

    #[test]
    fn token_f1_values() {
        assert_eq!(token_f1("a b c d", "a b c d", Language::English), 1.0);
        // 3 common of 4 and 3: p=0.75 r=1 -> 6/7
        let f = token_f1("a b c d", "a b c", Language::English);
        assert!((f - 6.0 / 7.0).abs() < 1e-12);
        assert_eq!(token_f1("", "x", Language::English), 0.0);
    }

    #[test]
    fn list_matching_is_greedy_safe() {
        // 1.0099 fits both gold items, 0.995 only the first; first-fit
        // would hand 1.0099 to gold 1.0 and strand 0.995.
        let t = Tolerances {
            abs_tol: 0.0,
            rel_tol: 0.01,
            text_similarity_threshold: 0.85,
        };
        assert!(match_answer(
            "[1.0099, 0.995]",
            "[1.0, 1.02]",
            AnswerType::List,
            &t
        ));
        assert!(!match_answer(
            "[1.0099, 0.9]",
            "[1.0, 1.02]",
            AnswerType::List,
            &t
        ));
    }

    #[test]
    fn parse_mismatch_is_non_match() {
        let golds = [
            (AnswerType::Integer, "42"),
            (AnswerType::Float, "2.5"),
            (AnswerType::Boolean, "yes"),
            (AnswerType::List, "a, b, c"),
            (AnswerType::Array, "[[1], [2]]"),
            (AnswerType::Json, "{\"a\": 1}"),
        ];
        for (t, gold) in golds {
            assert!(match_answer(gold, gold, t, &tol()), "{t:?} reflexive");
            assert!(
                !match_answer("¯\\_(ツ)_/¯", gold, t, &tol()),
                "{t:?} garbage"
            );
        }
    }
}
