//! Transport for OpenAI-compatible chat completion endpoints.

use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{AttemptError, ChatRequest, ChatTransport, FinishReason, RawReply, UserPart};

#[derive(Debug, Clone)]
pub struct OpenAiTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl OpenAiTransport {
    pub fn new(
        base_url: &str,
        model: &str,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| format!("http client: {e}"))?;
        Ok(Self {
            client,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
        })
    }

    /// Reads the key from `env_var`; an unset variable is allowed for local
    /// endpoints that need no auth.
    pub fn from_env(
        base_url: &str,
        model: &str,
        env_var: Option<&str>,
        timeout: Duration,
    ) -> Result<Self, String> {
        let api_key = env_var
            .and_then(|v| std::env::var(v).ok())
            .filter(|k| !k.is_empty());
        Self::new(base_url, model, api_key, timeout)
    }

    pub fn body(&self, request: &ChatRequest) -> Value {
        let content: Vec<Value> = request
            .user_parts
            .iter()
            .map(|part| match part {
                UserPart::Text(t) => json!({"type": "text", "text": t}),
                UserPart::Image { mime, data } => {
                    let b64 = base64::engine::general_purpose::STANDARD.encode(data);
                    json!({"type": "image_url", "image_url": {"url": format!("data:{mime};base64,{b64}")}})
                }
            })
            .collect();
        json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": content},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        })
    }
}

pub fn classify_status(status: u16, body: &str) -> AttemptError {
    let snippet: String = body.chars().take(200).collect();
    let message = format!("{status}: {snippet}");
    if status == 408 || status == 429 || (500..600).contains(&status) {
        AttemptError::Transient(message)
    } else {
        AttemptError::Permanent(message)
    }
}

pub fn parse_reply(body: &Value) -> Result<RawReply, AttemptError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| AttemptError::Transient("response has no choices".into()))?;
    let text = match choice.pointer("/message/content") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Array(parts)) => parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join(""),
        _ => String::new(),
    };
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("length") => FinishReason::Truncated,
        Some("content_filter") => FinishReason::Refused,
        _ => FinishReason::Complete,
    };
    Ok(RawReply {
        text,
        finish_reason,
    })
}

impl ChatTransport for OpenAiTransport {
    fn send(&self, request: &ChatRequest) -> Result<RawReply, AttemptError> {
        let mut builder = self.client.post(&self.endpoint).json(&self.body(request));
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| AttemptError::Transient(format!("transport: {e}")))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| AttemptError::Transient(format!("reading body: {e}")))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &text));
        }
        let body: Value = serde_json::from_str(&text)
            .map_err(|e| AttemptError::Transient(format!("malformed body: {e}")))?;
        parse_reply(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::RoleTag;

    #[test]
    fn status_classes() {
        for s in [408, 429, 500, 502, 503] {
            assert!(
                matches!(classify_status(s, ""), AttemptError::Transient(_)),
                "{s}"
            );
        }
        for s in [400, 401, 403, 404, 422] {
            assert!(
                matches!(classify_status(s, ""), AttemptError::Permanent(_)),
                "{s}"
            );
        }
    }

    #[test]
    fn body_carries_images_inline() {
        let t = OpenAiTransport::new("http://x/v1/", "m", None, Duration::from_secs(1)).unwrap();
        assert_eq!(t.endpoint, "http://x/v1/chat/completions");
        let req = ChatRequest::new(RoleTag::Ocr, "r", "sys")
            .text("hi")
            .image_png(vec![1, 2, 3]);
        let body = t.body(&req);
        assert_eq!(body["messages"][0]["content"], "sys");
        assert_eq!(
            body["messages"][1]["content"][1]["image_url"]["url"],
            "data:image/png;base64,AQID"
        );
    }

    #[test]
    fn finish_reasons() {
        let r = parse_reply(
            &json!({"choices": [{"message": {"content": "a"}, "finish_reason": "length"}]}),
        )
        .unwrap();
        assert_eq!(
            r,
            RawReply {
                text: "a".into(),
                finish_reason: FinishReason::Truncated
            }
        );
        let r = parse_reply(&json!({"choices": [{"message": {"content": null}, "finish_reason": "content_filter"}]}))
            .unwrap();
        assert_eq!(r.finish_reason, FinishReason::Refused);
        assert!(parse_reply(&json!({})).is_err());
    }
}
