//! Bucketing, scoring and reporting of candidate models over a dataset.

pub mod abstention;
pub mod bucket;
pub mod evaluate;
pub mod report;

pub use abstention::{detect_abstention, UNANSWERABLE_MARKER};
pub use bucket::{
    bucket_record, Bucket, BucketAssignment, BucketThresholds, ContextBucket, SpanBucket,
};
pub use evaluate::{
    aggregate, run_model, score_response, Cell, EvalError, EvalReport, PageSource, RecordResult,
};
pub use report::{parse_csv, render_report, render_reports, ReportFormat};
