//! Context-length and evidence-span buckets.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::QaRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BucketUnit {
    #[default]
    #[serde(rename = "document_pages")]
    DocumentPages,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketThresholds {
    pub sc_max: u32,
    pub mc_max: u32,
    #[serde(default)]
    pub unit: BucketUnit,
}

impl Default for BucketThresholds {
    fn default() -> Self {
        Self {
            sc_max: 100,
            mc_max: 200,
            unit: BucketUnit::DocumentPages,
        }
    }
}

impl BucketThresholds {
    pub fn check(&self) -> Result<(), String> {
        if self.sc_max == 0 || self.sc_max >= self.mc_max {
            return Err(format!(
                "need 0 < sc_max < mc_max, got sc_max={} mc_max={}",
                self.sc_max, self.mc_max
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContextBucket {
    SC,
    MC,
    LC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpanBucket {
    SP,
    CP,
    UA,
}

/// Column order used by reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bucket {
    Context(ContextBucket),
    Span(SpanBucket),
}

impl Bucket {
    pub const ALL: [Bucket; 6] = [
        Bucket::Context(ContextBucket::SC),
        Bucket::Context(ContextBucket::MC),
        Bucket::Context(ContextBucket::LC),
        Bucket::Span(SpanBucket::SP),
        Bucket::Span(SpanBucket::CP),
        Bucket::Span(SpanBucket::UA),
    ];

    pub fn label(self) -> &'static str {
        match self {
            Bucket::Context(ContextBucket::SC) => "SC",
            Bucket::Context(ContextBucket::MC) => "MC",
            Bucket::Context(ContextBucket::LC) => "LC",
            Bucket::Span(SpanBucket::SP) => "SP",
            Bucket::Span(SpanBucket::CP) => "CP",
            Bucket::Span(SpanBucket::UA) => "UA",
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketAssignment {
    pub record_id: String,
    pub context_bucket: ContextBucket,
    pub span_bucket: SpanBucket,
}

impl BucketAssignment {
    pub fn buckets(&self) -> [Bucket; 2] {
        [
            Bucket::Context(self.context_bucket),
            Bucket::Span(self.span_bucket),
        ]
    }
}

pub fn context_bucket(page_count: u32, thresholds: &BucketThresholds) -> ContextBucket {
    if page_count < thresholds.sc_max {
        ContextBucket::SC
    } else if page_count <= thresholds.mc_max {
        ContextBucket::MC
    } else {
        ContextBucket::LC
    }
}

pub fn bucket_record(
    record: &QaRecord,
    page_count: u32,
    thresholds: &BucketThresholds,
) -> BucketAssignment {
    let span_bucket = if record.is_unanswerable() {
        SpanBucket::UA
    } else if record.evidence_pages.len() > 1 {
        SpanBucket::CP
    } else {
        SpanBucket::SP
    };
    BucketAssignment {
        record_id: record.record_id.clone(),
        context_bucket: context_bucket(page_count, thresholds),
        span_bucket,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::record::tests::sample;
    use crate::QuestionType;

    #[test]
    fn documented_assignments() {
        let t = BucketThresholds::default();
        let mut r = sample("a");
        r.evidence_pages = vec![12];
        let b = bucket_record(&r, 77, &t);
        assert_eq!(
            (b.context_bucket, b.span_bucket),
            (ContextBucket::SC, SpanBucket::SP)
        );
        r.evidence_pages = vec![3, 40];
        let b = bucket_record(&r, 150, &t);
        assert_eq!(
            (b.context_bucket, b.span_bucket),
            (ContextBucket::MC, SpanBucket::CP)
        );
        r.question_type = QuestionType::Unanswerable;
        r.evidence_pages.clear();
        let b = bucket_record(&r, 250, &t);
        assert_eq!(
            (b.context_bucket, b.span_bucket),
            (ContextBucket::LC, SpanBucket::UA)
        );
    }

    #[test]
    fn boundaries_belong_to_mc() {
        let t = BucketThresholds::default();
        assert_eq!(context_bucket(99, &t), ContextBucket::SC);
        assert_eq!(context_bucket(100, &t), ContextBucket::MC);
        assert_eq!(context_bucket(200, &t), ContextBucket::MC);
        assert_eq!(context_bucket(201, &t), ContextBucket::LC);
    }

    #[test]
    fn threshold_check() {
        assert!(BucketThresholds::default().check().is_ok());
        assert!(BucketThresholds {
            sc_max: 200,
            mc_max: 200,
            unit: BucketUnit::DocumentPages
        }
        .check()
        .is_err());
        assert!(BucketThresholds {
            sc_max: 0,
            mc_max: 5,
            unit: BucketUnit::DocumentPages
        }
        .check()
        .is_err());
    }
}
