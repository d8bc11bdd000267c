//! In-process transports for tests and offline runs.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use super::{AttemptError, ChatRequest, ChatTransport, RawReply, RoleTag, TranscriptEntry};

#[derive(Debug, Clone)]
pub enum Scripted {
    Reply(RawReply),
    Fail(AttemptError),
}

impl Scripted {
    pub fn reply(text: impl Into<String>) -> Self {
        Scripted::Reply(RawReply::complete(text))
    }

    /// HTTP-style failure classified like the real transport.
    pub fn status(code: u16) -> Self {
        Scripted::Fail(super::openai::classify_status(code, ""))
    }
}

/// Per-role queues of replies, consumed in order. Records every request.
#[derive(Debug, Default)]
pub struct ScriptedTransport {
    queues: Mutex<HashMap<RoleTag, VecDeque<Scripted>>>,
    sent: Mutex<Vec<ChatRequest>>,
}

impl ScriptedTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(self, role: RoleTag, item: Scripted) -> Self {
        self.queues
            .lock()
            .expect("queue lock")
            .entry(role)
            .or_default()
            .push_back(item);
        self
    }

    /// Items still waiting for `role`.
    pub fn queued(&self, role: RoleTag) -> usize {
        self.queues
            .lock()
            .expect("queue lock")
            .get(&role)
            .map_or(0, VecDeque::len)
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.sent.lock().expect("sent lock").clone()
    }

    pub fn requests_for(&self, role: RoleTag) -> Vec<ChatRequest> {
        self.requests()
            .into_iter()
            .filter(|r| r.role_tag == role)
            .collect()
    }
}

impl ChatTransport for ScriptedTransport {
    fn send(&self, request: &ChatRequest) -> Result<RawReply, AttemptError> {
        self.sent.lock().expect("sent lock").push(request.clone());
        let next = self
            .queues
            .lock()
            .expect("queue lock")
            .get_mut(&request.role_tag)
            .and_then(VecDeque::pop_front);
        match next {
            Some(Scripted::Reply(r)) => Ok(r),
            Some(Scripted::Fail(e)) => Err(e),
            None => Err(AttemptError::Permanent(format!(
                "no scripted reply left for {}",
                request.role_tag
            ))),
        }
    }
}

/// Answers each request with a closure; the closure must be deterministic
/// for runs to be reproducible.
pub struct FnTransport<F>(pub F);

impl<F> ChatTransport for FnTransport<F>
where
    F: Fn(&ChatRequest) -> Result<RawReply, AttemptError> + Send + Sync,
{
    fn send(&self, request: &ChatRequest) -> Result<RawReply, AttemptError> {
        (self.0)(request)
    }
}

/// Serves responses recorded in a transcript, keyed by prompt hash.
#[derive(Debug, Default)]
pub struct ReplayTransport {
    by_hash: Mutex<HashMap<String, VecDeque<String>>>,
}

impl ReplayTransport {
    pub fn from_entries(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        let mut by_hash: HashMap<String, VecDeque<String>> = HashMap::new();
        for e in entries {
            by_hash
                .entry(e.prompt_hash)
                .or_default()
                .push_back(e.response_text);
        }
        Self {
            by_hash: Mutex::new(by_hash),
        }
    }
}

impl ChatTransport for ReplayTransport {
    fn send(&self, request: &ChatRequest) -> Result<RawReply, AttemptError> {
        let hash = request.prompt_hash();
        let mut map = self.by_hash.lock().expect("replay lock");
        let queue = map.get_mut(&hash).ok_or_else(|| {
            AttemptError::Permanent(format!(
                "no recorded reply for {} prompt {hash}",
                request.role_tag
            ))
        })?;
        // The last recorded reply is reused once the queue runs dry.
        let text = if queue.len() > 1 {
            queue.pop_front()
        } else {
            queue.front().cloned()
        };
        Ok(RawReply::complete(text.unwrap_or_default()))
    }
}
