//! Single chokepoint for model calls.
//!
//! A [`Gateway`] wraps a [`ChatTransport`] with request validation, a shared
//! in-flight cap, optional rate limiting, retry with backoff, structured
//! reply parsing with one repair round, and the run transcript.

pub mod mock;
pub mod openai;
pub mod retry;
pub mod structured;
pub mod transcript;

use std::collections::HashSet;
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::hashing::sha256_hex;
pub use retry::{AttemptError, RetryPolicy, Sleeper, ThreadSleeper};
pub use structured::{extract_json, Field, Schema};
pub use transcript::{Transcript, TranscriptEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleTag {
    Agent1,
    Agent2,
    Agent3,
    Agent4,
    Agent5,
    Ocr,
    Layout,
    EvalModel,
}

impl RoleTag {
    pub fn key(self) -> &'static str {
        match self {
            RoleTag::Agent1 => "agent1",
            RoleTag::Agent2 => "agent2",
            RoleTag::Agent3 => "agent3",
            RoleTag::Agent4 => "agent4",
            RoleTag::Agent5 => "agent5",
            RoleTag::Ocr => "ocr",
            RoleTag::Layout => "layout",
            RoleTag::EvalModel => "eval_model",
        }
    }
}

impl fmt::Display for RoleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Clone, PartialEq)]
pub enum UserPart {
    Text(String),
    /// Encoded image bytes, sent inline as a base64 data URL.
    Image {
        mime: String,
        data: Vec<u8>,
    },
}

impl UserPart {
    pub fn png(data: Vec<u8>) -> Self {
        UserPart::Image {
            mime: "image/png".into(),
            data,
        }
    }
}

impl fmt::Debug for UserPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UserPart::Text(t) => f.debug_tuple("Text").field(t).finish(),
            UserPart::Image { mime, data } => write!(f, "Image({mime}, {} bytes)", data.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub role_tag: RoleTag,
    pub system_prompt: String,
    pub user_parts: Vec<UserPart>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_id: String,
}

impl ChatRequest {
    pub fn new(
        role_tag: RoleTag,
        request_id: impl Into<String>,
        system_prompt: impl Into<String>,
    ) -> Self {
        Self {
            role_tag,
            system_prompt: system_prompt.into(),
            user_parts: Vec::new(),
            temperature: 0.0,
            max_output_tokens: 2048,
            request_id: request_id.into(),
        }
    }

    pub fn text(mut self, text: impl Into<String>) -> Self {
        self.user_parts.push(UserPart::Text(text.into()));
        self
    }

    pub fn image_png(mut self, data: Vec<u8>) -> Self {
        self.user_parts.push(UserPart::png(data));
        self
    }

    /// Concatenated text parts.
    pub fn user_text(&self) -> String {
        self.user_parts
            .iter()
            .filter_map(|p| match p {
                UserPart::Text(t) => Some(t.as_str()),
                UserPart::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn image_count(&self) -> usize {
        self.user_parts
            .iter()
            .filter(|p| matches!(p, UserPart::Image { .. }))
            .count()
    }

    /// Hash of everything the model sees; excludes the request id.
    pub fn prompt_hash(&self) -> String {
        let mut buf = Vec::new();
        buf.extend_from_slice(self.role_tag.key().as_bytes());
        buf.push(0);
        buf.extend_from_slice(self.system_prompt.as_bytes());
        for part in &self.user_parts {
            buf.push(0);
            match part {
                UserPart::Text(t) => {
                    buf.extend_from_slice(b"text:");
                    buf.extend_from_slice(t.as_bytes());
                }
                UserPart::Image { mime, data } => {
                    buf.extend_from_slice(b"image:");
                    buf.extend_from_slice(mime.as_bytes());
                    buf.extend_from_slice(sha256_hex(data).as_bytes());
                }
            }
        }
        buf.push(0);
        buf.extend_from_slice(&self.temperature.to_bits().to_le_bytes());
        buf.extend_from_slice(&self.max_output_tokens.to_le_bytes());
        sha256_hex(&buf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Complete,
    Truncated,
    Refused,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawReply {
    pub text: String,
    pub finish_reason: FinishReason,
}

impl RawReply {
    pub fn complete(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            finish_reason: FinishReason::Complete,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub request_id: String,
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
    pub attempt_count: u32,
}

/// One attempt against a provider. Implementations classify failures as
/// transient (retried) or permanent.
pub trait ChatTransport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<RawReply, AttemptError>;
}

impl<T: ChatTransport + ?Sized> ChatTransport for Arc<T> {
    fn send(&self, request: &ChatRequest) -> Result<RawReply, AttemptError> {
        (**self).send(request)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("provider unavailable after {attempts} attempts: {last}")]
    ProviderUnavailable { attempts: u32, last: String },
    #[error("provider refused the request: {0}")]
    ProviderRefused(String),
    #[error("structured reply rejected after repair: {0}")]
    SchemaViolation(String),
    /// The reply parsed and matched the schema but failed the caller's
    /// semantic check, also after repair.
    #[error("reply failed the content check after repair: {0}")]
    Unacceptable(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transcript write failed: {0}")]
    Transcript(#[from] std::io::Error),
}

/// Counting semaphore for the global in-flight cap.
#[derive(Debug)]
pub struct Semaphore {
    available: Mutex<usize>,
    cond: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self {
            available: Mutex::new(permits.max(1)),
            cond: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().expect("semaphore lock");
        while *n == 0 {
            n = self.cond.wait(n).expect("semaphore lock");
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().expect("semaphore lock") += 1;
        self.0.cond.notify_one();
    }
}

/// Token bucket allowing `rate` requests per second with a burst of
/// `max(1, rate)`.
#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(rate: f64) -> Self {
        Self {
            rate,
            state: Mutex::new((rate.max(1.0), Instant::now())),
        }
    }

    /// Takes one token, returning how long the caller must wait first.
    pub fn reserve(&self) -> Duration {
        let mut guard = self.state.lock().expect("bucket lock");
        let (tokens, last) = *guard;
        let now = Instant::now();
        let refilled =
            (tokens + now.duration_since(last).as_secs_f64() * self.rate).min(self.rate.max(1.0));
        let remaining = refilled - 1.0;
        *guard = (remaining, now);
        if remaining >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-remaining / self.rate)
        }
    }
}

/// Settings and state shared by every gateway of a run.
pub struct GatewayShared {
    pub retry: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
    in_flight: Semaphore,
    rate: Option<TokenBucket>,
    transcript: Option<Transcript>,
    issued: Mutex<HashSet<String>>,
}

impl GatewayShared {
    pub fn new(retry: RetryPolicy, max_in_flight: usize) -> Self {
        Self {
            retry,
            sleeper: Arc::new(ThreadSleeper),
            in_flight: Semaphore::new(max_in_flight),
            rate: None,
            transcript: None,
            issued: Mutex::new(HashSet::new()),
        }
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_second: f64) -> Self {
        if requests_per_second > 0.0 {
            self.rate = Some(TokenBucket::new(requests_per_second));
        }
        self
    }

    pub fn with_transcript(mut self, transcript: Transcript) -> Self {
        self.transcript = Some(transcript);
        self
    }
}

#[derive(Clone)]
pub struct Gateway {
    transport: Arc<dyn ChatTransport>,
    shared: Arc<GatewayShared>,
}

/// Parsed structured reply and the number of requests it took (1 or 2).
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredReply {
    pub value: Value,
    pub requests_issued: u32,
}

impl Gateway {
    pub fn new(transport: Arc<dyn ChatTransport>, shared: Arc<GatewayShared>) -> Self {
        Self { transport, shared }
    }

    /// Gateway with no backoff delay and a generous in-flight cap.
    pub fn for_testing(transport: Arc<dyn ChatTransport>, retry_budget: u32) -> Self {
        Self::new(
            transport,
            Arc::new(GatewayShared::new(RetryPolicy::immediate(retry_budget), 64)),
        )
    }

    /// Same shared state, different provider.
    pub fn with_transport(&self, transport: Arc<dyn ChatTransport>) -> Self {
        Self {
            transport,
            shared: Arc::clone(&self.shared),
        }
    }

    pub fn shared(&self) -> &Arc<GatewayShared> {
        &self.shared
    }

    fn check(&self, request: &ChatRequest) -> Result<(), GatewayError> {
        if request.user_parts.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "request has no user parts".into(),
            ));
        }
        if !(request.temperature.is_finite() && request.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} out of range",
                request.temperature
            )));
        }
        if request.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        if !self
            .shared
            .issued
            .lock()
            .expect("issued lock")
            .insert(request.request_id.clone())
        {
            return Err(GatewayError::InvalidRequest(format!(
                "duplicate request_id `{}`",
                request.request_id
            )));
        }
        Ok(())
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.check(request)?;
        let shared = &self.shared;
        let started = Instant::now();
        let outcome = retry::with_retry(
            &shared.retry,
            shared.sleeper.as_ref(),
            &request.request_id,
            |_| {
                if let Some(bucket) = &shared.rate {
                    shared.sleeper.sleep(bucket.reserve());
                }
                let _permit = shared.in_flight.acquire();
                self.transport.send(request)
            },
        );
        let (reply, attempts) = outcome.map_err(|e| match e {
            retry::RetryFailure::Exhausted { attempts, last } => {
                GatewayError::ProviderUnavailable { attempts, last }
            }
            retry::RetryFailure::Permanent { message, .. } => {
                GatewayError::ProviderRefused(message)
            }
        })?;
        let response = ChatResponse {
            request_id: request.request_id.clone(),
            text: reply.text,
            finish_reason: reply.finish_reason,
            latency_ms: started.elapsed().as_millis() as u64,
            attempt_count: attempts,
        };
        if let Some(transcript) = &shared.transcript {
            transcript.append(&TranscriptEntry {
                request_id: request.request_id.clone(),
                role_tag: request.role_tag,
                prompt_hash: request.prompt_hash(),
                response_text: response.text.clone(),
                attempts,
            })?;
        }
        Ok(response)
    }

    pub fn complete_structured(
        &self,
        request: &ChatRequest,
        schema: &Schema,
    ) -> Result<StructuredReply, GatewayError> {
        self.complete_structured_checked(request, schema, |_| Ok(()))
    }

    /// Like [`Gateway::complete_structured`], with an extra semantic check.
    /// A failed parse, schema check or `accept` check triggers exactly one
    /// repair request quoting the bad reply and the schema.
    pub fn complete_structured_checked(
        &self,
        request: &ChatRequest,
        schema: &Schema,
        accept: impl Fn(&Value) -> Result<(), String>,
    ) -> Result<StructuredReply, GatewayError> {
        enum Problem {
            Shape(String),
            Content(String),
        }
        let parse = |text: &str| -> Result<Value, Problem> {
            let value = extract_json(text).map_err(Problem::Shape)?;
            schema.validate(&value).map_err(Problem::Shape)?;
            accept(&value).map_err(Problem::Content)?;
            Ok(value)
        };
        let first = self.complete(request)?;
        let problem = match parse(&first.text) {
            Ok(value) => {
                return Ok(StructuredReply {
                    value,
                    requests_issued: 1,
                })
            }
            Err(Problem::Shape(p) | Problem::Content(p)) => p,
        };
        let mut repair = request.clone();
        repair.request_id = format!("{}.repair", request.request_id);
        repair.user_parts.push(UserPart::Text(format!(
            "Your previous reply could not be used ({problem}).\nPrevious reply:\n{}\n\nReply again with only JSON matching this schema:\n{}",
            first.text,
            schema.describe()
        )));
        let second = self.complete(&repair)?;
        match parse(&second.text) {
            Ok(value) => Ok(StructuredReply {
                value,
                requests_issued: 2,
            }),
            Err(Problem::Shape(p)) => Err(GatewayError::SchemaViolation(p)),
            Err(Problem::Content(p)) => Err(GatewayError::Unacceptable(p)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::mock::{Scripted, ScriptedTransport};
    use super::*;

    fn req(id: &str) -> ChatRequest {
        ChatRequest::new(RoleTag::Agent3, id, "system").text("question")
    }

    #[test]
    fn echo_mock() {
        let t = Arc::new(ScriptedTransport::new().push(RoleTag::Agent3, Scripted::reply("hello")));
        let gw = Gateway::for_testing(t, 3);
        let r = gw.complete(&req("a")).unwrap();
        assert_eq!(r.text, "hello");
        assert_eq!(r.attempt_count, 1);
    }

    #[test]
    fn retries_429_then_succeeds() {
        let t = Arc::new(
            ScriptedTransport::new()
                .push(RoleTag::Agent3, Scripted::status(429))
                .push(RoleTag::Agent3, Scripted::status(429))
                .push(RoleTag::Agent3, Scripted::reply("ok")),
        );
        let gw = Gateway::for_testing(t.clone(), 3);
        let r = gw.complete(&req("a")).unwrap();
        assert_eq!(r.attempt_count, 3);
        assert_eq!(t.requests().len(), 3);
    }

    #[test]
    fn four_503_exhaust_budget_three() {
        let mut t = ScriptedTransport::new();
        for _ in 0..4 {
            t = t.push(RoleTag::Agent3, Scripted::status(503));
        }
        let t = Arc::new(t);
        let gw = Gateway::for_testing(t.clone(), 3);
        match gw.complete(&req("a")) {
            Err(GatewayError::ProviderUnavailable { attempts, .. }) => assert_eq!(attempts, 4),
            other => panic!("{other:?}"),
        }
        assert_eq!(t.requests().len(), 4);
    }

    #[test]
    fn auth_failure_is_refused_without_retry() {
        let t = Arc::new(ScriptedTransport::new().push(RoleTag::Agent3, Scripted::status(401)));
        let gw = Gateway::for_testing(t.clone(), 3);
        assert!(matches!(
            gw.complete(&req("a")),
            Err(GatewayError::ProviderRefused(_))
        ));
        assert_eq!(t.requests().len(), 1);
    }

    #[test]
    fn rejects_invalid_and_duplicate_requests() {
        let t = Arc::new(ScriptedTransport::new().push(RoleTag::Agent3, Scripted::reply("x")));
        let gw = Gateway::for_testing(t, 0);
        assert!(matches!(
            gw.complete(&ChatRequest::new(RoleTag::Agent3, "e", "s")),
            Err(GatewayError::InvalidRequest(_))
        ));
        gw.complete(&req("dup")).unwrap();
        assert!(matches!(
            gw.complete(&req("dup")),
            Err(GatewayError::InvalidRequest(_))
        ));
    }

    fn schema() -> Schema {
        Schema::object(vec![Field::required("n", Schema::Integer)])
    }

    #[test]
    fn structured_valid_first_time() {
        let t =
            Arc::new(ScriptedTransport::new().push(RoleTag::Agent3, Scripted::reply("{\"n\": 3}")));
        let gw = Gateway::for_testing(t, 0);
        let r = gw.complete_structured(&req("a"), &schema()).unwrap();
        assert_eq!(r.value["n"], 3);
        assert_eq!(r.requests_issued, 1);
    }

    #[test]
    fn structured_repair_quotes_bad_output_and_schema() {
        let t = Arc::new(
            ScriptedTransport::new()
                .push(RoleTag::Agent3, Scripted::reply("{\"n\": \"three\"}"))
                .push(RoleTag::Agent3, Scripted::reply("{\"n\": 3}")),
        );
        let gw = Gateway::for_testing(t.clone(), 0);
        let r = gw.complete_structured(&req("a"), &schema()).unwrap();
        assert_eq!(r.requests_issued, 2);
        let sent = t.requests();
        assert_eq!(sent.len(), 2);
        let repair_text = sent[1].user_text();
        assert!(repair_text.contains("{\"n\": \"three\"}"));
        assert!(repair_text.contains("{\"n\": integer}"));
        assert_eq!(sent[1].request_id, "a.repair");
    }

    #[test]
    fn structured_fails_after_single_repair() {
        let t = Arc::new(
            ScriptedTransport::new()
                .push(RoleTag::Agent3, Scripted::reply("nope"))
                .push(RoleTag::Agent3, Scripted::reply("still nope"))
                .push(RoleTag::Agent3, Scripted::reply("{\"n\": 1}")),
        );
        let gw = Gateway::for_testing(t.clone(), 0);
        assert!(matches!(
            gw.complete_structured(&req("a"), &schema()),
            Err(GatewayError::SchemaViolation(_))
        ));
        assert_eq!(t.requests().len(), 2);
    }

    #[test]
    fn prompt_hash_ignores_request_id() {
        assert_eq!(req("a").prompt_hash(), req("b").prompt_hash());
        assert_ne!(req("a").prompt_hash(), req("a").text("more").prompt_hash());
    }

    #[test]
    fn semaphore_caps_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let sem = Arc::new(Semaphore::new(2));
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        std::thread::scope(|s| {
            for _ in 0..8 {
                let (sem, active, peak) = (sem.clone(), active.clone(), peak.clone());
                s.spawn(move || {
                    let _p = sem.acquire();
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    active.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
