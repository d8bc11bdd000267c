//! Per-page OCR and layout analysis through pluggable providers, and
//! assembly of per-chunk context bundles.

pub mod cache;
pub mod mock;
pub mod remote;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::gateway::GatewayError;
use crate::ingest::{Chunk, PageImage};
use crate::RegionCategory;

pub use cache::{load_perception, store_perception};
pub use mock::MockPerception;
pub use remote::{RemoteLayout, RemoteOcr};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcrResult {
    pub doc_id: String,
    pub page_index: u32,
    pub text: String,
    pub confidence: f64,
    pub provider_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutRegion {
    pub doc_id: String,
    pub page_index: u32,
    pub category: RegionCategory,
    /// `[x0, y0, x1, y1]` in pixels of the rasterized page.
    pub bbox: [f64; 4],
    pub confidence: f64,
}

/// What a provider reports for one page, before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct OcrReading {
    pub text: String,
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionReading {
    pub category: RegionCategory,
    pub bbox: [f64; 4],
    pub confidence: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum PerceptionError {
    #[error("provider unavailable after {attempts} attempts: {last}")]
    ProviderUnavailable { attempts: u32, last: String },
    #[error("provider refused: {0}")]
    ProviderRefused(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("chunk context mismatch: {0}")]
    ContextMismatch(String),
    #[error("perception cache {path}: {message}")]
    Cache { path: String, message: String },
}

impl From<GatewayError> for PerceptionError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::ProviderUnavailable { attempts, last } => {
                PerceptionError::ProviderUnavailable { attempts, last }
            }
            other => PerceptionError::ProviderRefused(other.to_string()),
        }
    }
}

pub trait OcrProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn read(&self, image: &PageImage) -> Result<OcrReading, PerceptionError>;
}

pub trait LayoutProvider: Send + Sync {
    fn detect(&self, image: &PageImage) -> Result<Vec<RegionReading>, PerceptionError>;
}

pub fn ocr_page(
    image: &PageImage,
    provider: &dyn OcrProvider,
) -> Result<OcrResult, PerceptionError> {
    if image.png.is_empty() {
        return Err(PerceptionError::InvalidInput(format!(
            "page {} has an empty image payload",
            image.page_index
        )));
    }
    let reading = provider.read(image)?;
    let confidence = match reading.confidence {
        Some(c) if c.is_finite() => c.clamp(0.0, 1.0),
        Some(_) | None => 1.0,
    };
    Ok(OcrResult {
        doc_id: image.doc_id.clone(),
        page_index: image.page_index,
        text: reading.text,
        confidence,
        provider_id: provider.provider_id().to_string(),
    })
}

fn in_bounds(bbox: &[f64; 4], width: u32, height: u32) -> bool {
    let [x0, y0, x1, y1] = *bbox;
    bbox.iter().all(|v| v.is_finite())
        && 0.0 <= x0
        && x0 < x1
        && x1 <= f64::from(width)
        && 0.0 <= y0
        && y0 < y1
        && y1 <= f64::from(height)
}

/// Runs layout detection. Boxes outside the page are dropped and logged.
pub fn analyze_layout(
    image: &PageImage,
    provider: &dyn LayoutProvider,
) -> Result<Vec<LayoutRegion>, PerceptionError> {
    let readings = provider.detect(image)?;
    let mut regions = Vec::with_capacity(readings.len());
    for r in readings {
        if !in_bounds(&r.bbox, image.width_px, image.height_px) {
            tracing::warn!(
                doc_id = %image.doc_id,
                page = image.page_index,
                bbox = ?r.bbox,
                "dropping malformed layout region outside {}x{}",
                image.width_px,
                image.height_px
            );
            continue;
        }
        regions.push(LayoutRegion {
            doc_id: image.doc_id.clone(),
            page_index: image.page_index,
            category: r.category,
            bbox: r.bbox,
            confidence: r
                .confidence
                .filter(|c| c.is_finite())
                .map_or(1.0, |c| c.clamp(0.0, 1.0)),
        });
    }
    Ok(regions)
}

/// OCR and layout for every page of one document, sorted by page.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DocPerception {
    pub ocr: Vec<OcrResult>,
    pub layout: Vec<LayoutRegion>,
}

type PageOutcome = Result<(OcrResult, Vec<LayoutRegion>), PerceptionError>;

/// Perceives all pages with up to `workers` pages in flight. Results are in
/// page order regardless of completion order.
pub fn perceive_pages(
    images: &[PageImage],
    ocr: &dyn OcrProvider,
    layout: &dyn LayoutProvider,
    workers: usize,
) -> Result<DocPerception, PerceptionError> {
    let slots: Vec<Mutex<Option<PageOutcome>>> = images.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, images.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(image) = images.get(i) else { break };
                let outcome =
                    ocr_page(image, ocr).and_then(|o| Ok((o, analyze_layout(image, layout)?)));
                let failed = outcome.is_err();
                *slots[i].lock().expect("slot lock") = Some(outcome);
                if failed {
                    // Let other workers drain; no new pages are started.
                    next.store(images.len(), Ordering::SeqCst);
                }
            });
        }
    });
    let mut out = DocPerception::default();
    for slot in slots {
        match slot.into_inner().expect("slot lock") {
            Some(Ok((o, regions))) => {
                out.ocr.push(o);
                out.layout.extend(regions);
            }
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkContext {
    pub chunk: Chunk,
    pub images: Vec<PageImage>,
    pub ocr: Vec<OcrResult>,
    /// Sorted by page, keeping provider order within a page.
    pub layout: Vec<LayoutRegion>,
}

impl ChunkContext {
    pub fn regions_on(&self, page: u32) -> impl Iterator<Item = &LayoutRegion> {
        self.layout.iter().filter(move |r| r.page_index == page)
    }

    pub fn ocr_on(&self, page: u32) -> Option<&OcrResult> {
        self.ocr.iter().find(|o| o.page_index == page)
    }
}

fn check_pages(what: &str, chunk: &Chunk, pages: &[(u32, &str)]) -> Result<(), PerceptionError> {
    let expected: Vec<u32> = chunk.range().pages().collect();
    let got: Vec<u32> = pages.iter().map(|(p, _)| *p).collect();
    if got != expected {
        return Err(PerceptionError::ContextMismatch(format!(
            "{what} pages {:?} do not match chunk pages {}..{}",
            got, chunk.start_page, chunk.end_page
        )));
    }
    if let Some((p, doc)) = pages.iter().find(|(_, d)| *d != chunk.doc_id) {
        return Err(PerceptionError::ContextMismatch(format!(
            "{what} for page {p} belongs to document {doc}"
        )));
    }
    Ok(())
}

pub fn assemble_chunk_context(
    chunk: &Chunk,
    mut images: Vec<PageImage>,
    mut ocr: Vec<OcrResult>,
    mut layout: Vec<LayoutRegion>,
) -> Result<ChunkContext, PerceptionError> {
    images.sort_by_key(|i| i.page_index);
    ocr.sort_by_key(|o| o.page_index);
    layout.sort_by_key(|r| r.page_index);
    let image_pages: Vec<(u32, &str)> = images
        .iter()
        .map(|i| (i.page_index, i.doc_id.as_str()))
        .collect();
    check_pages("image", chunk, &image_pages)?;
    let ocr_pages: Vec<(u32, &str)> = ocr
        .iter()
        .map(|o| (o.page_index, o.doc_id.as_str()))
        .collect();
    check_pages("ocr", chunk, &ocr_pages)?;
    let range = chunk.range();
    if let Some(r) = layout
        .iter()
        .find(|r| !range.contains(r.page_index) || r.doc_id != chunk.doc_id)
    {
        return Err(PerceptionError::ContextMismatch(format!(
            "layout region on page {} of {} lies outside chunk {}..{}",
            r.page_index, r.doc_id, chunk.start_page, chunk.end_page
        )));
    }
    Ok(ChunkContext {
        chunk: chunk.clone(),
        images,
        ocr,
        layout,
    })
}

/// Slices a document's perception down to one chunk and assembles it.
pub fn chunk_context(
    chunk: &Chunk,
    images: &[PageImage],
    doc: &DocPerception,
) -> Result<ChunkContext, PerceptionError> {
    let range = chunk.range();
    assemble_chunk_context(
        chunk,
        images
            .iter()
            .filter(|i| range.contains(i.page_index))
            .cloned()
            .collect(),
        doc.ocr
            .iter()
            .filter(|o| range.contains(o.page_index))
            .cloned()
            .collect(),
        doc.layout
            .iter()
            .filter(|r| range.contains(r.page_index))
            .cloned()
            .collect(),
    )
}
