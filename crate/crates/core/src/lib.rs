//! Multi-agent question generation over long PDF documents.
//!
//! The crate is organised as a batch pipeline:
//!
//! * [`ingest`] loads and filters PDFs, rasterizes pages and cuts them into
//!   overlapping chunks.
//! * [`perception`] runs OCR and layout providers per page and bundles the
//!   results per chunk.
//! * [`gateway`] is the single chokepoint for every model call.
//! * [`agents`] implements the five-agent generate / filter / answer /
//!   assess / validate loop.
//! * [`dataset`] owns the output record schema, taxonomies, normalization,
//!   answer matching and statistics.
//! * [`eval`] buckets records and scores candidate models.
//! * [`run`] and [`config`] wire everything into the command-line surface.
//! * [`synth`] builds deterministic fixture corpora and a scripted model for
//!   offline runs.

pub mod agents;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod gateway;
pub mod hashing;
pub mod ingest;
pub mod perception;
pub mod run;
pub mod synth;

pub use dataset::taxonomy::{AnswerType, Language, QuestionType, RegionCategory};
