//! Providers backed by a model endpoint through the gateway.

use serde_json::Value;

use super::{LayoutProvider, OcrProvider, OcrReading, PerceptionError, RegionReading};
use crate::gateway::{ChatRequest, Field, Gateway, RoleTag, Schema};
use crate::ingest::PageImage;
use crate::RegionCategory;

const OCR_PROMPT: &str = "You transcribe document page images. Return every piece of text on the page in reading \
order, preserving the original language and numbers exactly. Reply with JSON: {\"text\": string, \"confidence\": \
number between 0 and 1}.";

const LAYOUT_PROMPT: &str = "You analyse document page layout. Identify headings, paragraphs, tables and figures. \
Coordinates are pixels of the supplied image with the origin at the top-left. Reply with JSON: {\"regions\": \
[{\"category\": \"heading\"|\"paragraph\"|\"table\"|\"figure\", \"bbox\": [x0, y0, x1, y1], \"confidence\": number}]}.";

fn page_request(role: RoleTag, system: &str, image: &PageImage, max_tokens: u32) -> ChatRequest {
    let mut req = ChatRequest::new(
        role,
        format!(
            "{}/{}/p{:04}",
            role.key(),
            &image.doc_id[..image.doc_id.len().min(16)],
            image.page_index
        ),
        system,
    )
    .text(format!(
        "Page {} ({}x{} px).",
        image.page_index, image.width_px, image.height_px
    ))
    .image_png(image.png.clone());
    req.max_output_tokens = max_tokens;
    req
}

pub struct RemoteOcr {
    gateway: Gateway,
    provider_id: String,
}

impl RemoteOcr {
    pub fn new(gateway: Gateway, model: &str) -> Self {
        Self {
            gateway,
            provider_id: format!("remote:{model}"),
        }
    }
}

impl OcrProvider for RemoteOcr {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn read(&self, image: &PageImage) -> Result<OcrReading, PerceptionError> {
        let schema = Schema::object(vec![
            Field::required("text", Schema::String),
            Field::optional("confidence", Schema::Nullable(Box::new(Schema::Number))),
        ]);
        let reply = self.gateway.complete_structured(
            &page_request(RoleTag::Ocr, OCR_PROMPT, image, 4096),
            &schema,
        )?;
        Ok(OcrReading {
            text: reply.value["text"].as_str().unwrap_or_default().to_string(),
            confidence: reply.value.get("confidence").and_then(Value::as_f64),
        })
    }
}

pub struct RemoteLayout {
    gateway: Gateway,
}

impl RemoteLayout {
    pub fn new(gateway: Gateway) -> Self {
        Self { gateway }
    }
}

impl LayoutProvider for RemoteLayout {
    fn detect(&self, image: &PageImage) -> Result<Vec<RegionReading>, PerceptionError> {
        let region = Schema::object(vec![
            Field::required("category", Schema::String),
            Field::required("bbox", Schema::array(Schema::Number)),
            Field::optional("confidence", Schema::Nullable(Box::new(Schema::Number))),
        ]);
        let schema = Schema::object(vec![Field::required("regions", Schema::array(region))]);
        let reply = self.gateway.complete_structured(
            &page_request(RoleTag::Layout, LAYOUT_PROMPT, image, 2048),
            &schema,
        )?;
        let mut out = Vec::new();
        for r in reply.value["regions"].as_array().into_iter().flatten() {
            let category = r["category"].as_str().unwrap_or_default();
            let Ok(category) = category.parse::<RegionCategory>() else {
                tracing::warn!(
                    page = image.page_index,
                    category,
                    "dropping region with unknown category"
                );
                continue;
            };
            let coords: Vec<f64> = r["bbox"]
                .as_array()
                .into_iter()
                .flatten()
                .filter_map(Value::as_f64)
                .collect();
            let Ok(bbox) = <[f64; 4]>::try_from(coords) else {
                tracing::warn!(
                    page = image.page_index,
                    "dropping region without four bbox coordinates"
                );
                continue;
            };
            out.push(RegionReading {
                category,
                bbox,
                confidence: r.get("confidence").and_then(Value::as_f64),
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::mock::{Scripted, ScriptedTransport};
    use crate::perception::tests::image;
    use crate::perception::{analyze_layout, ocr_page};

    #[test]
    fn three_failures_exhaust_budget_two() {
        let t = Arc::new(
            ScriptedTransport::new()
                .push(RoleTag::Ocr, Scripted::status(503))
                .push(RoleTag::Ocr, Scripted::status(503))
                .push(RoleTag::Ocr, Scripted::status(503))
                .push(RoleTag::Ocr, Scripted::reply("{\"text\": \"late\"}")),
        );
        let ocr = RemoteOcr::new(Gateway::for_testing(t.clone(), 2), "m");
        match ocr_page(&image("d", 1), &ocr) {
            Err(PerceptionError::ProviderUnavailable { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("{other:?}"),
        }
        assert_eq!(t.requests().len(), 3);
    }

    #[test]
    fn remote_ocr_sends_image_and_reads_confidence() {
        let t = Arc::new(ScriptedTransport::new().push(
            RoleTag::Ocr,
            Scripted::reply("{\"text\": \"Chapter 1\", \"confidence\": 0.7}"),
        ));
        let ocr = RemoteOcr::new(Gateway::for_testing(t.clone(), 0), "m");
        let r = ocr_page(&image("d", 4), &ocr).unwrap();
        assert_eq!((r.text.as_str(), r.confidence), ("Chapter 1", 0.7));
        assert_eq!(t.requests()[0].image_count(), 1);
    }

    #[test]
    fn remote_layout_filters_bad_regions() {
        let reply = r#"{"regions": [
            {"category": "table", "bbox": [1, 1, 50, 50]},
            {"category": "sidebar", "bbox": [1, 1, 5, 5]},
            {"category": "figure", "bbox": [1, 1, 5]},
            {"category": "figure", "bbox": [1, 1, 500, 5]}
        ]}"#;
        let t = Arc::new(ScriptedTransport::new().push(RoleTag::Layout, Scripted::reply(reply)));
        let layout = RemoteLayout::new(Gateway::for_testing(t, 0));
        let regions = analyze_layout(&image("d", 1), &layout).unwrap();
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].category, RegionCategory::Table);
    }

    #[test]
    fn refusal_maps_to_provider_refused() {
        let t = Arc::new(ScriptedTransport::new().push(RoleTag::Ocr, Scripted::status(403)));
        let ocr = RemoteOcr::new(Gateway::for_testing(t, 3), "m");
        assert!(matches!(
            ocr_page(&image("d", 1), &ocr),
            Err(PerceptionError::ProviderRefused(_))
        ));
    }
}
