//! Dataset statistics: question-type, answer-type and language breakdowns.
//!
//! Question shares are over all records; answer-type shares are over
//! records that carry a typed answer, so the two totals can differ.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::record::QaRecord;
use super::taxonomy::{AnswerType, Language, QuestionType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub label: String,
    pub count: usize,
    /// Percentage of the relevant total, rounded to one decimal.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub total_questions: usize,
    pub question_types: Vec<Share>,
    pub total_typed_answers: usize,
    pub answer_types: Vec<Share>,
    pub languages: Vec<Share>,
}

pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn share(label: &str, count: usize, total: usize) -> Share {
    let percent = if total == 0 {
        0.0
    } else {
        round1(100.0 * count as f64 / total as f64)
    };
    Share {
        label: label.to_string(),
        count,
        percent,
    }
}

pub fn dataset_stats(records: &[QaRecord]) -> StatsReport {
    let total = records.len();
    let question_types = QuestionType::ALL
        .iter()
        .map(|&t| {
            share(
                t.label(),
                records.iter().filter(|r| r.question_type == t).count(),
                total,
            )
        })
        .collect();
    let typed: Vec<AnswerType> = records.iter().filter_map(|r| r.answer_type).collect();
    let answer_types = AnswerType::ALL
        .iter()
        .map(|&t| {
            share(
                t.label(),
                typed.iter().filter(|&&a| a == t).count(),
                typed.len(),
            )
        })
        .collect();
    let languages = Language::ALL
        .iter()
        .map(|&l| {
            share(
                l.label(),
                records.iter().filter(|r| r.language == l).count(),
                total,
            )
        })
        .collect();
    StatsReport {
        total_questions: total,
        question_types,
        total_typed_answers: typed.len(),
        answer_types,
        languages,
    }
}

impl StatsReport {
    pub fn question_share(&self, t: QuestionType) -> &Share {
        self.question_types
            .iter()
            .find(|s| s.label == t.label())
            .expect("all types present")
    }

    pub fn answer_share(&self, t: AnswerType) -> &Share {
        self.answer_types
            .iter()
            .find(|s| s.label == t.label())
            .expect("all types present")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let mut section = |title: &str, total: usize, rows: &[Share]| {
            let _ = writeln!(out, "{title} (total {total})");
            for row in rows {
                let _ = writeln!(
                    out,
                    "  {:<28} {:>7} {:>6.1}%",
                    row.label, row.count, row.percent
                );
            }
        };
        section("Question types", self.total_questions, &self.question_types);
        section("Answer types", self.total_typed_answers, &self.answer_types);
        section("Languages", self.total_questions, &self.languages);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::record::tests::sample;

    #[test]
    fn empty_is_all_zero() {
        let report = dataset_stats(&[]);
        assert_eq!(report.total_questions, 0);
        assert_eq!(report.total_typed_answers, 0);
        assert!(report
            .question_types
            .iter()
            .all(|s| s.count == 0 && s.percent == 0.0));
        assert_eq!(report.question_types.len(), 12);
        assert_eq!(report.answer_types.len(), 8);
    }

    #[test]
    fn untyped_records_excluded_from_answer_total() {
        let mut a = sample("a");
        a.answer_type = None;
        let b = sample("b");
        let report = dataset_stats(&[a, b]);
        assert_eq!(report.total_questions, 2);
        assert_eq!(report.total_typed_answers, 1);
        assert_eq!(report.answer_share(AnswerType::Integer).percent, 100.0);
    }

    #[test]
    fn table_mentions_totals() {
        let report = dataset_stats(&[sample("a")]);
        let table = report.to_table();
        assert!(table.contains("Question types (total 1)"));
        assert!(table.contains("Factual Recall"));
    }
}
