//! Rendering evaluation reports as plain text, markdown or CSV.

use std::fmt::Write;
use std::str::FromStr;

use super::bucket::Bucket;
use super::evaluate::EvalReport;
use crate::Language;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Text,
    Markdown,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Text => "txt",
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(ReportFormat::Text),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!(
                "unknown report format `{other}` (expected text, markdown or csv)"
            )),
        }
    }
}

pub const NA: &str = "NA";

/// Column headers after the model column: one group per language, then the
/// overall average.
pub fn column_headers() -> Vec<String> {
    let mut out: Vec<String> = Language::ALL
        .iter()
        .flat_map(|lang| {
            Bucket::ALL
                .iter()
                .map(move |b| format!("{} {}", lang.label(), b.label()))
        })
        .collect();
    out.push("Average".into());
    out
}

/// Accuracy values in column order; `None` is an empty cell.
pub fn row_values(report: &EvalReport) -> Vec<Option<f64>> {
    let mut out: Vec<Option<f64>> = Language::ALL
        .iter()
        .flat_map(|lang| {
            Bucket::ALL
                .iter()
                .map(move |b| report.cell(*lang, *b).accuracy())
        })
        .collect();
    out.push(report.average());
    out
}

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |v| format!("{:.1}%", v * 100.0))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    render_reports(std::slice::from_ref(report), format)
}

/// One row per model.
pub fn render_reports(reports: &[EvalReport], format: ReportFormat) -> String {
    let headers = column_headers();
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str("model");
            for h in &headers {
                let _ = write!(out, ",{}", csv_field(h));
            }
            out.push('\n');
            for r in reports {
                out.push_str(&csv_field(&r.model));
                for v in row_values(r) {
                    // `{}` on f64 prints the shortest string that parses back exactly.
                    let _ = write!(
                        out,
                        ",{}",
                        v.map_or_else(|| NA.to_string(), |v| v.to_string())
                    );
                }
                out.push('\n');
            }
        }
        ReportFormat::Markdown => {
            let _ = writeln!(out, "| Model | {} |", headers.join(" | "));
            let _ = writeln!(out, "|---|{}", "---:|".repeat(headers.len()));
            for r in reports {
                let cells: Vec<String> = row_values(r).into_iter().map(percent).collect();
                let _ = writeln!(out, "| {} | {} |", r.model, cells.join(" | "));
            }
            out.push('\n');
            for r in reports {
                let _ = writeln!(
                    out,
                    "{}: {} records, {} scored, {} unscored",
                    r.model, r.overall.records, r.overall.attempted, r.unscored
                );
            }
        }
        ReportFormat::Text => {
            let model_width = reports
                .iter()
                .map(|r| r.model.chars().count())
                .max()
                .unwrap_or(0)
                .max(5);
            let _ = write!(out, "{:<model_width$}", "Model");
            for lang in Language::ALL {
                let _ = write!(out, " | {:^41}", lang.label());
            }
            out.push_str(" |        \n");
            let _ = write!(out, "{:<model_width$}", "");
            for _ in Language::ALL {
                out.push_str(" |");
                for b in Bucket::ALL {
                    let _ = write!(out, " {:>6}", b.label());
                }
            }
            out.push_str(" | Average\n");
            for r in reports {
                let values = row_values(r);
                let _ = write!(out, "{:<model_width$}", r.model);
                for group in values[..values.len() - 1].chunks(Bucket::ALL.len()) {
                    out.push_str(" |");
                    for v in group {
                        let _ = write!(out, " {:>6}", percent(*v));
                    }
                }
                let _ = writeln!(out, " | {:>7}", percent(values[values.len() - 1]));
            }
            for r in reports {
                let _ = writeln!(
                    out,
                    "{}: {} records, {} scored, {} unscored",
                    r.model, r.overall.records, r.overall.attempted, r.unscored
                );
            }
        }
    }
    out
}

/// Model name and per-column values of one CSV row.
pub type CsvRow = (String, Vec<Option<f64>>);

/// Parses CSV produced by [`render_reports`] back into `(model, values)`.
pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("empty CSV")?;
    let expected = std::iter::once("model".to_string())
        .chain(column_headers())
        .collect::<Vec<_>>()
        .join(",");
    if header != expected {
        return Err(format!("unexpected header `{header}`"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let (model, rest) =
            split_first_field(line).ok_or_else(|| format!("row {}: malformed", i + 1))?;
        let values: Vec<Option<f64>> = rest
            .split(',')
            .map(|f| {
                if f == NA {
                    Ok(None)
                } else {
                    f.parse::<f64>()
                        .map(Some)
                        .map_err(|e| format!("row {}: {e}", i + 1))
                }
            })
            .collect::<Result<_, _>>()?;
        if values.len() != column_headers().len() {
            return Err(format!(
                "row {}: expected {} values, found {}",
                i + 1,
                column_headers().len(),
                values.len()
            ));
        }
        rows.push((model, values));
    }
    Ok(rows)
}

fn split_first_field(line: &str) -> Option<(String, &str)> {
    if let Some(rest) = line.strip_prefix('"') {
        let mut model = String::new();
        let mut chars = rest.char_indices();
        while let Some((i, c)) = chars.next() {
            if c == '"' {
                if rest[i + 1..].starts_with('"') {
                    model.push('"');
                    chars.next();
                } else {
                    return rest[i + 1..].strip_prefix(',').map(|r| (model, r));
                }
            } else {
                model.push(c);
            }
        }
        None
    } else {
        line.split_once(',').map(|(m, r)| (m.to_string(), r))
    }
}
