//! Deterministic scripted provider keyed by `(doc_id, page_index)`.
//!
//! On disk a script is a directory per document, named by doc_id or by an
//! alias such as the PDF file stem, holding `<page>.txt` for OCR text and
//! `<page>.regions.jsonl` for layout regions:
//!
//! ```text
//! {"category": "table", "bbox": [10, 20, 300, 400], "confidence": 0.9}
//! ```

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::{LayoutProvider, OcrProvider, OcrReading, PerceptionError, RegionReading};
use crate::ingest::PageImage;
use crate::RegionCategory;

#[derive(Debug, Clone, Default)]
pub struct MockPerception {
    text: HashMap<(String, u32), String>,
    regions: HashMap<(String, u32), Vec<RegionReading>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionLine {
    category: String,
    bbox: [f64; 4],
    #[serde(default)]
    confidence: Option<f64>,
}

impl MockPerception {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn page(mut self, doc_id: &str, page: u32, text: impl Into<String>) -> Self {
        self.text.insert((doc_id.to_string(), page), text.into());
        self
    }

    pub fn region(mut self, doc_id: &str, page: u32, region: RegionReading) -> Self {
        self.regions
            .entry((doc_id.to_string(), page))
            .or_default()
            .push(region);
        self
    }

    /// Loads scripts for each `(doc_id, aliases)` pair, using the first of
    /// `doc_id` or its aliases that names a directory under `dir`.
    pub fn load(dir: &Path, documents: &[(String, Vec<String>)]) -> Result<Self, PerceptionError> {
        let mut mock = Self::new();
        for (doc_id, aliases) in documents {
            let Some(doc_dir) = std::iter::once(doc_id)
                .chain(aliases)
                .map(|name| dir.join(name))
                .find(|p| p.is_dir())
            else {
                tracing::debug!(%doc_id, "no perception script; pages read as blank");
                continue;
            };
            mock.load_document_dir(doc_id, &doc_dir)?;
        }
        Ok(mock)
    }

    fn load_document_dir(&mut self, doc_id: &str, doc_dir: &Path) -> Result<(), PerceptionError> {
        let cache_err = |path: &Path, message: String| PerceptionError::Cache {
            path: path.display().to_string(),
            message,
        };
        let entries = std::fs::read_dir(doc_dir).map_err(|e| cache_err(doc_dir, e.to_string()))?;
        for entry in entries {
            let path = entry.map_err(|e| cache_err(doc_dir, e.to_string()))?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            if let Some(page) = name
                .strip_suffix(".regions.jsonl")
                .and_then(|p| p.parse::<u32>().ok())
            {
                let body =
                    std::fs::read_to_string(&path).map_err(|e| cache_err(&path, e.to_string()))?;
                for (i, line) in body
                    .lines()
                    .enumerate()
                    .filter(|(_, l)| !l.trim().is_empty())
                {
                    let parsed: RegionLine = serde_json::from_str(line)
                        .map_err(|e| cache_err(&path, format!("line {}: {e}", i + 1)))?;
                    let category = parsed
                        .category
                        .parse::<RegionCategory>()
                        .map_err(|e| cache_err(&path, format!("line {}: {e}", i + 1)))?;
                    self.regions
                        .entry((doc_id.to_string(), page))
                        .or_default()
                        .push(RegionReading {
                            category,
                            bbox: parsed.bbox,
                            confidence: parsed.confidence,
                        });
                }
            } else if let Some(page) = name
                .strip_suffix(".txt")
                .and_then(|p| p.parse::<u32>().ok())
            {
                let body =
                    std::fs::read_to_string(&path).map_err(|e| cache_err(&path, e.to_string()))?;
                self.text.insert(
                    (doc_id.to_string(), page),
                    body.trim_end_matches('\n').to_string(),
                );
            }
        }
        Ok(())
    }
}

impl OcrProvider for MockPerception {
    fn provider_id(&self) -> &str {
        "mock"
    }

    fn read(&self, image: &PageImage) -> Result<OcrReading, PerceptionError> {
        match self.text.get(&(image.doc_id.clone(), image.page_index)) {
            Some(text) if !text.trim().is_empty() => Ok(OcrReading {
                text: text.clone(),
                confidence: None,
            }),
            _ => Ok(OcrReading {
                text: String::new(),
                confidence: Some(0.0),
            }),
        }
    }
}

impl LayoutProvider for MockPerception {
    fn detect(&self, image: &PageImage) -> Result<Vec<RegionReading>, PerceptionError> {
        Ok(self
            .regions
            .get(&(image.doc_id.clone(), image.page_index))
            .cloned()
            .unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::tests::image;
    use crate::perception::{analyze_layout, ocr_page};

    fn table(bbox: [f64; 4]) -> RegionReading {
        RegionReading {
            category: RegionCategory::Table,
            bbox,
            confidence: Some(0.8),
        }
    }

    #[test]
    fn echoes_scripted_text_with_default_confidence() {
        let mock = MockPerception::new().page("d", 1, "Chapter 1");
        let r = ocr_page(&image("d", 1), &mock).unwrap();
        assert_eq!(
            (r.text.as_str(), r.confidence, r.provider_id.as_str()),
            ("Chapter 1", 1.0, "mock")
        );
    }

    #[test]
    fn blank_page_has_zero_confidence() {
        let r = ocr_page(&image("d", 2), &MockPerception::new()).unwrap();
        assert_eq!((r.text.as_str(), r.confidence), ("", 0.0));
    }

    #[test]
    fn empty_payload_is_rejected() {
        let mut img = image("d", 1);
        img.png.clear();
        assert!(matches!(
            ocr_page(&img, &MockPerception::new()),
            Err(PerceptionError::InvalidInput(_))
        ));
    }

    #[test]
    fn out_of_bounds_region_is_dropped() {
        let mock = MockPerception::new()
            .region("d", 1, table([0.0, 0.0, 50.0, 50.0]))
            .region("d", 1, table([0.0, 0.0, 101.0, 50.0]));
        let regions = analyze_layout(&image("d", 1), &mock).unwrap();
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].bbox, [0.0, 0.0, 50.0, 50.0]);
        assert!(analyze_layout(&image("d", 2), &mock).unwrap().is_empty());
    }

    #[test]
    fn loads_from_directory_by_alias() {
        let dir = tempfile::tempdir().unwrap();
        let doc_dir = dir.path().join("report");
        std::fs::create_dir(&doc_dir).unwrap();
        std::fs::write(doc_dir.join("3.txt"), "Revenue table\n").unwrap();
        std::fs::write(
            doc_dir.join("3.regions.jsonl"),
            "{\"category\":\"table\",\"bbox\":[1,2,30,40]}\n\n{\"category\":\"title\",\"bbox\":[1,2,3,4],\"confidence\":0.5}\n",
        )
        .unwrap();
        let mock =
            MockPerception::load(dir.path(), &[("abc".into(), vec!["report".into()])]).unwrap();
        assert_eq!(mock.read(&image("abc", 3)).unwrap().text, "Revenue table");
        let regions = mock.detect(&image("abc", 3)).unwrap();
        assert_eq!(regions.len(), 2);
        assert_eq!(regions[1].category, RegionCategory::Heading);
    }

    #[test]
    fn bad_region_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("d")).unwrap();
        std::fs::write(
            dir.path().join("d/1.regions.jsonl"),
            "{\"category\":\"sidebar\",\"bbox\":[0,0,1,1]}\n",
        )
        .unwrap();
        assert!(MockPerception::load(dir.path(), &[("d".into(), vec![])]).is_err());
    }
}
