//! Overlapping page windows.
//!
//! Windows start at page 1 and advance by `chunk_size - overlap`; the last
//! window is clamped at the final page, so every adjacent pair shares
//! exactly `overlap` pages.

use serde::{Deserialize, Serialize};

use super::document::Document;
use super::IngestError;

pub const DEFAULT_CHUNK_SIZE: u32 = 20;
pub const DEFAULT_OVERLAP: u32 = 10;

/// Inclusive 1-based page range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PageRange {
    pub start: u32,
    pub end: u32,
}

impl PageRange {
    pub fn new(start: u32, end: u32) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> u32 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, page: u32) -> bool {
        (self.start..=self.end).contains(&page)
    }

    pub fn pages(&self) -> impl Iterator<Item = u32> {
        self.start..=self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub start_page: u32,
    pub end_page: u32,
    pub overlap_with_prev: u32,
}

impl Chunk {
    pub fn range(&self) -> PageRange {
        PageRange::new(self.start_page, self.end_page)
    }

    pub fn page_count(&self) -> u32 {
        self.end_page - self.start_page + 1
    }
}

pub fn chunk_id(doc_id: &str, range: PageRange) -> String {
    let prefix: String = doc_id.chars().take(16).collect();
    format!("{prefix}_{:04}_{:04}", range.start, range.end)
}

/// Parses the page range back out of a chunk id.
pub fn parse_chunk_id(chunk_id: &str) -> Option<PageRange> {
    let mut parts = chunk_id.rsplitn(3, '_');
    let end = parts.next()?.parse().ok()?;
    let start = parts.next()?.parse().ok()?;
    parts.next()?;
    (start >= 1 && start <= end).then_some(PageRange::new(start, end))
}

pub fn chunk_pages(
    page_count: u32,
    chunk_size: u32,
    overlap: u32,
) -> Result<Vec<PageRange>, IngestError> {
    if chunk_size < 1 || overlap >= chunk_size {
        return Err(IngestError::InvalidChunkParams {
            chunk_size,
            overlap,
        });
    }
    if page_count == 0 {
        return Ok(Vec::new());
    }
    if page_count <= chunk_size {
        return Ok(vec![PageRange::new(1, page_count)]);
    }
    let stride = chunk_size - overlap;
    let count = 1 + (page_count - chunk_size).div_ceil(stride);
    Ok((0..count)
        .map(|k| {
            let start = 1 + k * stride;
            PageRange::new(start, (start + chunk_size - 1).min(page_count))
        })
        .collect())
}

pub fn chunk_document(
    doc: &Document,
    chunk_size: u32,
    overlap: u32,
) -> Result<Vec<Chunk>, IngestError> {
    let ranges = chunk_pages(doc.page_count, chunk_size, overlap)?;
    let mut prev_end = None;
    Ok(ranges
        .into_iter()
        .map(|range| {
            let overlap_with_prev =
                prev_end.map_or(0, |e: u32| (e + 1).saturating_sub(range.start));
            prev_end = Some(range.end);
            Chunk {
                chunk_id: chunk_id(&doc.doc_id, range),
                doc_id: doc.doc_id.clone(),
                start_page: range.start,
                end_page: range.end,
                overlap_with_prev,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Walk starts 1, 1+stride, ... and clamp the window that reaches the
    /// last page.
    fn oracle(page_count: u32, size: u32, overlap: u32) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        let mut start = 1;
        loop {
            let end = start + size - 1;
            if end >= page_count {
                out.push((start, page_count));
                return out;
            }
            out.push((start, end));
            start += size - overlap;
        }
    }

    fn pairs(ranges: &[PageRange]) -> Vec<(u32, u32)> {
        ranges.iter().map(|r| (r.start, r.end)).collect()
    }

    #[test]
    fn documented_examples() {
        assert_eq!(
            pairs(&chunk_pages(25, 20, 10).unwrap()),
            vec![(1, 20), (11, 25)]
        );
        assert_eq!(pairs(&chunk_pages(15, 20, 10).unwrap()), vec![(1, 15)]);
        assert_eq!(
            pairs(&chunk_pages(30, 20, 10).unwrap()),
            vec![(1, 20), (11, 30)]
        );
        assert_eq!(oracle(25, 20, 10), vec![(1, 20), (11, 25)]);
    }

    #[test]
    fn invalid_params() {
        assert!(matches!(
            chunk_pages(10, 20, 20),
            Err(IngestError::InvalidChunkParams { .. })
        ));
        assert!(matches!(
            chunk_pages(10, 0, 0),
            Err(IngestError::InvalidChunkParams { .. })
        ));
    }

    #[test]
    fn chunk_ids_round_trip() {
        let doc = Document {
            doc_id: "ab".repeat(32),
            path: "x.pdf".into(),
            page_count: 77,
            language: crate::Language::English,
            license_tag: None,
            byte_size: 1,
        };
        let chunks = chunk_document(&doc, 20, 10).unwrap();
        assert_eq!(chunks.len(), 7);
        assert_eq!(chunks[0].overlap_with_prev, 0);
        assert!(chunks[1..].iter().all(|c| c.overlap_with_prev == 10));
        for c in &chunks {
            assert_eq!(parse_chunk_id(&c.chunk_id), Some(c.range()));
        }
    }

    proptest! {
        #[test]
        fn matches_oracle(page_count in 1u32..2000, size in 1u32..80, overlap_frac in 0.0f64..1.0) {
            let overlap = ((size as f64) * overlap_frac) as u32 % size;
            prop_assert_eq!(pairs(&chunk_pages(page_count, size, overlap).unwrap()), oracle(page_count, size, overlap));
        }
    }
}
