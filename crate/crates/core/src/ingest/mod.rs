//! Corpus ingestion: PDF loading, corpus filtering, page rasterization and
//! overlapping chunking.

pub mod chunk;
pub mod document;
pub mod raster;

use std::path::PathBuf;

pub use chunk::{chunk_document, chunk_pages, Chunk, PageRange};
pub use document::{
    filter_corpus, load_corpus, load_document, read_manifest, Document, FilterOutcome,
    ManifestEntry, RejectReason,
};
pub use raster::{load_page_images, rasterize, write_page_images, PageImage, DEFAULT_DPI};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("malformed document {}: {reason}", path.display())]
    MalformedDocument { path: PathBuf, reason: String },
    #[error("document {} has no pages", path.display())]
    EmptyDocument { path: PathBuf },
    #[error("invalid chunk parameters: chunk_size={chunk_size}, overlap={overlap} (need 0 <= overlap < chunk_size)")]
    InvalidChunkParams { chunk_size: u32, overlap: u32 },
    #[error("invalid dpi {0}: must be within 72..=600")]
    InvalidDpi(u32),
    #[error("failed to rasterize page {page}: {reason}")]
    RasterizationFailure { page: u32, reason: String },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("i/o failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
