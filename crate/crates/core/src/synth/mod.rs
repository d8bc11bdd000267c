//! Synthetic corpora for offline runs.
//!
//! Every page of a fixture document records one fact, `LABEL-p is v`, where
//! `LABEL` comes from the file stem and `v` is a pure function of the term.
//! [`write_fixture_corpus`] writes the PDFs, a manifest and perception
//! scripts; [`model::SyntheticModel`] plays every agent over such a corpus.

pub mod model;

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use lopdf::content::{Content, Operation};
use lopdf::{dictionary, Object, Stream};
use serde_json::json;

use crate::hashing::stable_u64;
use crate::Language;

pub use model::SyntheticModel;

/// Page numbers at or above this never exist in a fixture; questions about
/// them are unanswerable.
pub const ABSENT_PAGE_BASE: u32 = 900;

const A4: [f64; 2] = [595.0, 842.0];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureDoc {
    pub stem: String,
    pub pages: u32,
    pub language: Language,
    pub license_tag: Option<String>,
}

impl FixtureDoc {
    pub fn new(stem: &str, pages: u32, language: Language) -> Self {
        Self {
            stem: stem.into(),
            pages,
            language,
            license_tag: Some("cc-by-4.0".into()),
        }
    }

    pub fn label(&self) -> String {
        term_label(&self.stem)
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub manifest: PathBuf,
    pub scripts_dir: PathBuf,
    pub pdfs: Vec<PathBuf>,
}

pub fn term_label(stem: &str) -> String {
    let label: String = stem
        .chars()
        .filter(char::is_ascii_alphabetic)
        .map(|c| c.to_ascii_uppercase())
        .collect();
    if label.is_empty() {
        "DOC".into()
    } else {
        label
    }
}

pub fn term(label: &str, page: u32) -> String {
    format!("{label}-{page}")
}

/// Recorded value of a term, in 100..1000.
pub fn term_value(term: &str) -> u64 {
    100 + stable_u64(&["synthetic-value", term]) % 900
}

pub fn page_text(label: &str, page: u32, language: Language) -> String {
    let t = term(label, page);
    let v = term_value(&t);
    match language {
        Language::English => format!("Section {page}\nThe recorded value of {t} is {v}."),
        Language::Arabic => format!("القسم {page}\nالقيمة المسجلة لـ {t} هي {v}."),
    }
}

/// Layout regions of a page in points, top-left origin.
fn page_regions(page: u32) -> Vec<(&'static str, [f64; 4])> {
    let mut regions = vec![
        ("heading", [50.0, 40.0, 545.0, 70.0]),
        ("paragraph", [50.0, 90.0, 545.0, 300.0]),
    ];
    if page.is_multiple_of(3) {
        regions.push(("table", [50.0, 330.0, 545.0, 520.0]));
    }
    if page.is_multiple_of(5) {
        regions.push(("figure", [150.0, 560.0, 445.0, 760.0]));
    }
    regions
}

fn op(name: &str, operands: Vec<Object>) -> Operation {
    Operation::new(name, operands)
}

fn reals(values: &[f64]) -> Vec<Object> {
    values.iter().map(|v| Object::Real(*v as f32)).collect()
}

fn text_line(ops: &mut Vec<Operation>, size: f64, x: f64, top: f64, text: &str) {
    ops.push(op("BT", vec![]));
    ops.push(op("Tf", vec!["F1".into(), Object::Real(size as f32)]));
    ops.push(op("Td", reals(&[x, A4[1] - top])));
    ops.push(op("Tj", vec![Object::string_literal(text)]));
    ops.push(op("ET", vec![]));
}

fn page_content(label: &str, page: u32) -> Content {
    let t = term(label, page);
    let mut ops = Vec::new();
    text_line(&mut ops, 18.0, 50.0, 62.0, &format!("Section {page}"));
    text_line(
        &mut ops,
        11.0,
        50.0,
        110.0,
        &format!("The recorded value of {t} is {}.", term_value(&t)),
    );
    for line in 0..8 {
        text_line(
            &mut ops,
            11.0,
            50.0,
            130.0 + 20.0 * line as f64,
            "Supporting prose about the measurement and its context.",
        );
    }
    for (category, [x0, y0, x1, y1]) in page_regions(page) {
        match category {
            "table" => {
                ops.push(op("w", vec![Object::Real(1.0)]));
                for row in 0..5 {
                    let y = A4[1] - y0 - (y1 - y0) * row as f64 / 4.0;
                    ops.push(op("m", reals(&[x0, y])));
                    ops.push(op("l", reals(&[x1, y])));
                    ops.push(op("S", vec![]));
                }
            }
            "figure" => {
                ops.push(op("rg", reals(&[0.6, 0.7, 0.8])));
                ops.push(op("re", reals(&[x0, A4[1] - y1, x1 - x0, y1 - y0])));
                ops.push(op("f", vec![]));
                ops.push(op("rg", reals(&[0.0, 0.0, 0.0])));
            }
            _ => {}
        }
    }
    Content { operations: ops }
}

/// A4 document with one fact per page.
pub fn fixture_pdf(label: &str, pages: u32) -> Vec<u8> {
    let mut doc = lopdf::Document::with_version("1.5");
    let pages_id = doc.new_object_id();
    let font_id = doc.add_object(dictionary! {
        "Type" => "Font",
        "Subtype" => "Type1",
        "BaseFont" => "Helvetica",
    });
    let resources_id = doc.add_object(dictionary! { "Font" => dictionary! { "F1" => font_id } });
    let kids: Vec<Object> = (1..=pages)
        .map(|page| {
            let content = page_content(label, page).encode().expect("content encodes");
            let content_id = doc.add_object(Stream::new(dictionary! {}, content));
            doc.add_object(dictionary! {
                "Type" => "Page",
                "Parent" => pages_id,
                "Contents" => content_id,
            })
            .into()
        })
        .collect();
    doc.objects.insert(
        pages_id,
        Object::Dictionary(dictionary! {
            "Type" => "Pages",
            "Kids" => kids,
            "Count" => pages as i64,
            "Resources" => resources_id,
            "MediaBox" => reals(&[0.0, 0.0, A4[0], A4[1]]),
        }),
    );
    let catalog = doc.add_object(dictionary! { "Type" => "Catalog", "Pages" => pages_id });
    doc.trailer.set("Root", catalog);
    let mut out = Vec::new();
    doc.save_to(&mut out).expect("in-memory save");
    out
}

/// Region script lines for one page, in pixels at `dpi`.
pub fn region_script(page: u32, dpi: u32) -> String {
    let scale = dpi as f64 / 72.0;
    let mut out = String::new();
    for (category, bbox) in page_regions(page) {
        let px: Vec<f64> = bbox.iter().map(|v| (v * scale).floor()).collect();
        let _ = writeln!(
            out,
            "{}",
            json!({"category": category, "bbox": px, "confidence": 0.95})
        );
    }
    out
}

/// Writes `<stem>.pdf` per document, `manifest.jsonl` and perception
/// scripts under `scripts/<stem>/`.
pub fn write_fixture_corpus(dir: &Path, docs: &[FixtureDoc], dpi: u32) -> io::Result<Fixture> {
    let mut labels: Vec<String> = docs.iter().map(FixtureDoc::label).collect();
    labels.sort();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "fixture stems must have distinct letter labels",
        ));
    }
    fs::create_dir_all(dir)?;
    let scripts_dir = dir.join("scripts");
    let mut manifest = String::new();
    let mut pdfs = Vec::new();
    for doc in docs {
        let label = doc.label();
        let pdf = dir.join(format!("{}.pdf", doc.stem));
        fs::write(&pdf, fixture_pdf(&label, doc.pages))?;
        pdfs.push(pdf);
        let mut line = json!({"path": format!("{}.pdf", doc.stem), "language": doc.language});
        if let Some(tag) = &doc.license_tag {
            line["license_tag"] = json!(tag);
        }
        let _ = writeln!(manifest, "{line}");
        let doc_scripts = scripts_dir.join(&doc.stem);
        fs::create_dir_all(&doc_scripts)?;
        for page in 1..=doc.pages {
            fs::write(
                doc_scripts.join(format!("{page}.txt")),
                page_text(&label, page, doc.language),
            )?;
            fs::write(
                doc_scripts.join(format!("{page}.regions.jsonl")),
                region_script(page, dpi),
            )?;
        }
    }
    let manifest_path = dir.join("manifest.jsonl");
    fs::write(&manifest_path, manifest)?;
    Ok(Fixture {
        manifest: manifest_path,
        scripts_dir,
        pdfs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{load_corpus, rasterize};

    #[test]
    fn labels_and_values() {
        assert_eq!(term_label("report-a"), "REPORTA");
        assert_eq!(term_label("123"), "DOC");
        for p in 1..50 {
            let v = term_value(&term("X", p));
            assert!((100..1000).contains(&v));
        }
        assert!(page_text("X", 3, Language::Arabic).contains("X-3 هي"));
    }

    #[test]
    fn corpus_loads_and_renders() {
        let dir = tempfile::tempdir().unwrap();
        let fx = write_fixture_corpus(
            dir.path(),
            &[
                FixtureDoc::new("alpha", 3, Language::English),
                FixtureDoc::new("beta", 2, Language::Arabic),
            ],
            72,
        )
        .unwrap();
        let docs = load_corpus(&fx.manifest).unwrap();
        assert_eq!(
            docs.iter().map(|d| d.page_count).collect::<Vec<_>>(),
            [3, 2]
        );
        assert_eq!(docs[1].language, Language::Arabic);
        let images = rasterize(&docs[0], 72).unwrap();
        assert_eq!((images[0].width_px, images[0].height_px), (595, 842));
        assert!(fx.scripts_dir.join("beta/2.regions.jsonl").is_file());
    }

    #[test]
    fn duplicate_labels_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let docs = [
            FixtureDoc::new("a-1", 1, Language::English),
            FixtureDoc::new("a-2", 1, Language::English),
        ];
        assert!(write_fixture_corpus(dir.path(), &docs, 72).is_err());
    }
}
