//! Answer-type inference and the literal parsers it shares with the matcher.
//!
//! Rule order (first match wins):
//! Json → Array → List → Boolean → Integer → Float → Code → Text.

use std::sync::LazyLock;

use regex::Regex;
use serde_json::Value;

use super::normalize::normalize_text;
use super::taxonomy::{AnswerType, Language};

static GROUPED_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[+-]?\d{1,3}(,\d{3})+(\.\d+)?$").expect("valid regex"));
static PLAIN_INTEGER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[+-]?\d+$").expect("valid regex"));
static PLAIN_FLOAT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$").expect("valid regex"));
static BULLET: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:[-*•]|\d+[.)])\s+(.+?)\s*$").expect("valid regex"));
static CALL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b[A-Za-z_]\w*\([^()]*\)").expect("valid regex"));
static KEYWORD_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^\s*(def|fn|class|import|from\s+\S+\s+import|return|let|const|var|function|public|private|#include|for\s*\(|while\s*\(|if\s*\()\b")
        .expect("valid regex")
});

const LIST_DELIMITERS: &[char] = &[',', ';', '\u{060C}', '\u{061B}'];

/// Map Arabic-Indic and Extended Arabic-Indic digits and separators to ASCII.
pub fn ascii_digits(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '\u{0660}'..='\u{0669}' => char::from(b'0' + (c as u32 - 0x0660) as u8),
            '\u{06F0}'..='\u{06F9}' => char::from(b'0' + (c as u32 - 0x06F0) as u8),
            '\u{066B}' => '.',
            '\u{066C}' => ',',
            '\u{2212}' => '-',
            c => c,
        })
        .collect()
}

fn numeric_core(s: &str) -> Option<String> {
    let s = ascii_digits(s.trim());
    if GROUPED_NUMBER.is_match(&s) {
        Some(s.replace(',', ""))
    } else {
        Some(s)
    }
}

pub fn parse_integer(s: &str) -> Option<i128> {
    let core = numeric_core(s)?;
    if !PLAIN_INTEGER.is_match(&core) {
        return None;
    }
    core.trim_start_matches('+').parse().ok()
}

pub fn parse_float(s: &str) -> Option<f64> {
    let core = numeric_core(s)?;
    if !PLAIN_FLOAT.is_match(&core) {
        return None;
    }
    core.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn parse_boolean(s: &str) -> Option<bool> {
    // Arabic folding is harmless on Latin text and lets one table cover both.
    match normalize_text(s, Language::Arabic).as_str() {
        "true" | "yes" | "نعم" | "صحيح" | "صح" => Some(true),
        "false" | "no" | "لا" | "خطا" | "خاطي" | "خاطىء" => Some(false),
        _ => None,
    }
}

pub fn parse_json_object(s: &str) -> Option<Value> {
    match serde_json::from_str::<Value>(s.trim()) {
        Ok(v @ Value::Object(_)) => Some(v),
        _ => None,
    }
}

fn parse_json_array(s: &str) -> Option<Vec<Value>> {
    match serde_json::from_str::<Value>(s.trim()) {
        Ok(Value::Array(items)) => Some(items),
        _ => None,
    }
}

/// A JSON array with at least one array or object element.
pub fn parse_nested_array(s: &str) -> Option<Vec<Value>> {
    parse_json_array(s).filter(|items| items.iter().any(|v| v.is_array() || v.is_object()))
}

/// Any JSON array, nested or flat.
pub fn parse_any_array(s: &str) -> Option<Vec<Value>> {
    parse_json_array(s)
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Null => Some("null".to_string()),
        _ => None,
    }
}

/// Parse a flat enumeration: a flat JSON array, two or more bullet lines,
/// or three or more short delimiter-separated items.
pub fn parse_list_items(s: &str) -> Option<Vec<String>> {
    let trimmed = s.trim();
    if let Some(items) = parse_json_array(trimmed) {
        return items.iter().map(scalar_text).collect();
    }
    let lines: Vec<&str> = trimmed.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() >= 2 {
        let bullets: Option<Vec<String>> = lines
            .iter()
            .map(|l| BULLET.captures(l).map(|c| c[1].to_string()))
            .collect();
        if bullets.is_some() {
            return bullets;
        }
    }
    if trimmed.contains('\n') || GROUPED_NUMBER.is_match(&ascii_digits(trimmed)) {
        return None;
    }
    let parts: Vec<String> = trimmed
        .split(LIST_DELIMITERS)
        .map(|p| p.trim().to_string())
        .collect();
    let short = |p: &String| !p.is_empty() && p.split_whitespace().count() <= 3;
    if parts.len() >= 3 && parts.iter().all(short) {
        Some(parts)
    } else {
        None
    }
}

fn code_signal_count(s: &str) -> usize {
    let signals = [
        s.lines().any(|l| l.trim_end().ends_with(';')),
        s.contains('{') && s.contains('}'),
        s.contains("=>") || s.contains("->"),
        KEYWORD_LINE.is_match(s),
        CALL.is_match(s),
        ["==", "!=", "&&", "||", "+=", "::"]
            .iter()
            .any(|op| s.contains(op)),
    ];
    signals.iter().filter(|&&b| b).count()
}

pub fn looks_like_code(s: &str) -> bool {
    s.trim_start().starts_with("```") || code_signal_count(s) >= 2
}

pub fn infer_answer_type(answer: &str) -> AnswerType {
    if parse_json_object(answer).is_some() {
        AnswerType::Json
    } else if parse_nested_array(answer).is_some() {
        AnswerType::Array
    } else if parse_list_items(answer).is_some() {
        AnswerType::List
    } else if parse_boolean(answer).is_some() {
        AnswerType::Boolean
    } else if parse_integer(answer).is_some() {
        AnswerType::Integer
    } else if parse_float(answer).is_some() {
        AnswerType::Float
    } else if looks_like_code(answer) {
        AnswerType::Code
    } else {
        AnswerType::Text
    }
}
