//! Deterministic replay backend: a script of (matcher, reply) entries stands
//! in for a live model, making every protocol path testable offline.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;

use super::{Backend, ChatRequest, Completion, GatewayError};

/// Decides whether a script entry answers a given request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Matcher {
    /// Matches any request.
    Any,
    /// Matches when the latest transmitted message contains this substring.
    Substring(String),
}

impl Matcher {
    fn matches(&self, latest: &str) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Substring(s) => latest.contains(s.as_str()),
        }
    }
}

/// One scripted exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptEntry {
    pub matcher: Matcher,
    pub reply: String,
}

impl ScriptEntry {
    /// Entry that answers any request.
    pub fn any(reply: impl Into<String>) -> Self {
        Self { matcher: Matcher::Any, reply: reply.into() }
    }

    /// Entry that answers only requests whose latest message contains
    /// `needle`.
    pub fn on(needle: impl Into<String>, reply: impl Into<String>) -> Self {
        Self { matcher: Matcher::Substring(needle.into()), reply: reply.into() }
    }
}

/// In-memory script replayer.
///
/// Each `complete` call consumes the first unconsumed entry whose matcher
/// matches the latest transmitted message. Consumption state belongs to one
/// session; [`Backend::fork_for_session`] hands out a fresh cursor over the
/// same script so concurrent consultations replay independently. The log of
/// received requests is shared across all forks for test assertions.
pub struct ScriptedBackend {
    entries: Arc<Vec<ScriptEntry>>,
    consumed: Mutex<Vec<bool>>,
    received: Arc<Mutex<Vec<ChatRequest>>>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let consumed = vec![false; entries.len()];
        Self {
            entries: Arc::new(entries),
            consumed: Mutex::new(consumed),
            received: Arc::new(Mutex::new(Vec::new())),
        }
    }

    /// Every request this script (all session forks included) has answered
    /// or rejected, in arrival order.
    pub fn received(&self) -> Vec<ChatRequest> {
        self.received.lock().expect("request log poisoned").clone()
    }

    /// Unconsumed entries remaining in this session's cursor.
    pub fn remaining(&self) -> usize {
        self.consumed.lock().expect("cursor poisoned").iter().filter(|c| !**c).count()
    }
}

#[async_trait]
impl Backend for ScriptedBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        self.received.lock().expect("request log poisoned").push(request.clone());

        let latest = request.latest_text();
        let mut consumed = self.consumed.lock().expect("cursor poisoned");
        if consumed.iter().all(|c| *c) {
            return Err(GatewayError::EmptyCompletion);
        }
        let hit = self
            .entries
            .iter()
            .enumerate()
            .find(|(i, entry)| !consumed[*i] && entry.matcher.matches(latest));
        match hit {
            Some((i, entry)) => {
                consumed[i] = true;
                Ok(Completion { text: entry.reply.clone(), latency: Duration::ZERO })
            }
            None => Err(GatewayError::ScriptExhausted { latest: latest.to_string() }),
        }
    }

    fn fork_for_session(self: Arc<Self>) -> Arc<dyn Backend> {
        Arc::new(ScriptedBackend {
            entries: self.entries.clone(),
            consumed: Mutex::new(vec![false; self.entries.len()]),
            received: self.received.clone(),
        })
    }
}
