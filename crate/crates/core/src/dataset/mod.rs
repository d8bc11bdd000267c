//! Output schema, taxonomies, normalization, answer matching and statistics.

pub mod answer_type;
pub mod matcher;
pub mod normalize;
pub mod record;
pub mod stats;
pub mod taxonomy;

pub use answer_type::infer_answer_type;
pub use matcher::{match_answer, Tolerances};
pub use normalize::normalize_text;
pub use record::{
    append_records, audit_records, read_records, write_records, DatasetError, EvidenceSource,
    QaRecord, RecordViolation, Validation,
};
pub use stats::{dataset_stats, StatsReport};
