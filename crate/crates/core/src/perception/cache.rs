//! Per-document perception cache under `<run_dir>/perception/<doc_id>/`.
//!
//! `ocr.jsonl` holds one [`OcrResult`] per page and `layout.jsonl` one line
//! per page listing its regions, so pages without regions are still
//! recorded. Files are written to a temporary name and renamed into place.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DocPerception, LayoutRegion, OcrResult, PerceptionError};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PageLayout {
    page_index: u32,
    regions: Vec<LayoutRegion>,
}

fn cache_err(path: &Path, message: impl ToString) -> PerceptionError {
    PerceptionError::Cache {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

fn write_atomic(path: &Path, body: &str) -> Result<(), PerceptionError> {
    let tmp = path.with_extension("jsonl.tmp");
    std::fs::write(&tmp, body).map_err(|e| cache_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| cache_err(path, e))
}

pub fn store_perception(
    dir: &Path,
    page_count: u32,
    doc: &DocPerception,
) -> Result<(), PerceptionError> {
    std::fs::create_dir_all(dir).map_err(|e| cache_err(dir, e))?;
    let mut ocr = String::new();
    for o in &doc.ocr {
        ocr.push_str(&serde_json::to_string(o).map_err(|e| cache_err(dir, e))?);
        ocr.push('\n');
    }
    let mut layout = String::new();
    for page in 1..=page_count {
        let line = PageLayout {
            page_index: page,
            regions: doc
                .layout
                .iter()
                .filter(|r| r.page_index == page)
                .cloned()
                .collect(),
        };
        layout.push_str(&serde_json::to_string(&line).map_err(|e| cache_err(dir, e))?);
        layout.push('\n');
    }
    write_atomic(&dir.join("ocr.jsonl"), &ocr)?;
    write_atomic(&dir.join("layout.jsonl"), &layout)
}

/// Returns the cached perception if it covers pages `1..=page_count`
/// exactly; anything missing or unreadable means "recompute".
pub fn load_perception(dir: &Path, doc_id: &str, page_count: u32) -> Option<DocPerception> {
    let ocr_body = std::fs::read_to_string(dir.join("ocr.jsonl")).ok()?;
    let layout_body = std::fs::read_to_string(dir.join("layout.jsonl")).ok()?;
    let ocr: Vec<OcrResult> = ocr_body
        .lines()
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()
        .ok()?;
    let pages: Vec<PageLayout> = layout_body
        .lines()
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()
        .ok()?;
    let expected: Vec<u32> = (1..=page_count).collect();
    let complete = ocr
        .iter()
        .map(|o| o.page_index)
        .eq(expected.iter().copied())
        && pages
            .iter()
            .map(|p| p.page_index)
            .eq(expected.iter().copied())
        && ocr.iter().all(|o| o.doc_id == doc_id);
    if !complete {
        tracing::info!(%doc_id, "perception cache incomplete; recomputing");
        return None;
    }
    Some(DocPerception {
        ocr,
        layout: pages.into_iter().flat_map(|p| p.regions).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::tests::ocr;
    use crate::RegionCategory;

    #[test]
    fn round_trip_and_incomplete_detection() {
        let dir = tempfile::tempdir().unwrap();
        let doc = DocPerception {
            ocr: (1..=3).map(|p| ocr("d", p)).collect(),
            layout: vec![LayoutRegion {
                doc_id: "d".into(),
                page_index: 2,
                category: RegionCategory::Figure,
                bbox: [0.0, 0.0, 5.0, 5.0],
                confidence: 0.5,
            }],
        };
        store_perception(dir.path(), 3, &doc).unwrap();
        assert_eq!(load_perception(dir.path(), "d", 3), Some(doc));
        assert_eq!(load_perception(dir.path(), "d", 4), None);
        assert_eq!(load_perception(dir.path(), "other", 3), None);
        std::fs::write(dir.path().join("ocr.jsonl"), "{\"torn").unwrap();
        assert_eq!(load_perception(dir.path(), "d", 3), None);
    }
}
