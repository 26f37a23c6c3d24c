//! Uniform chat-completion interface over remote model providers plus a
//! deterministic scripted backend for offline tests.
//!
//! Every role in the harness (doctor, patient, reporter, organizer, reasoner,
//! verifier, judge, constructor) talks through an [`Endpoint`]. An endpoint
//! wraps a [`Backend`] — either the OpenAI-compatible HTTP client or the
//! scripted replayer — behind a shared rate limiter and call counter, so
//! swapping a live model for a script changes nothing above this layer.

mod http;
mod scripted;

pub use http::HttpBackend;
pub use scripted::{Matcher, ScriptEntry, ScriptedBackend};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;

/// Who produced a message, from the calling agent's point of view.
///
/// `Agent` maps to the assistant role on the wire, `Environment` to the user
/// role; the role prompt travels as the system message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Speaker {
    Agent,
    Environment,
}

/// One conversation message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub speaker: Speaker,
    pub text: String,
}

impl Message {
    pub fn agent(text: impl Into<String>) -> Self {
        Self { speaker: Speaker::Agent, text: text.into() }
    }

    pub fn environment(text: impl Into<String>) -> Self {
        Self { speaker: Speaker::Environment, text: text.into() }
    }
}

/// How much history accompanies a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextWindow {
    Unlimited,
    /// Transmit only the last `n` messages (n ≥ 1).
    Last(usize),
}

impl ContextWindow {
    /// Bounded window of the last `n` messages.
    ///
    /// Panics if `n` is zero — a window that transmits nothing is always a
    /// programming error.
    pub fn last(n: usize) -> Self {
        assert!(n >= 1, "context window must transmit at least one message");
        ContextWindow::Last(n)
    }
}

/// A fully-specified completion request.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    /// System instruction; omitted from the wire when empty.
    pub role_prompt: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub context_window: ContextWindow,
    pub model_id: String,
}

impl ChatRequest {
    /// The slice of `messages` actually sent, after applying the window.
    pub fn transmitted_messages(&self) -> &[Message] {
        match self.context_window {
            ContextWindow::Unlimited => &self.messages,
            ContextWindow::Last(n) => {
                let start = self.messages.len().saturating_sub(n);
                &self.messages[start..]
            }
        }
    }

    /// Text of the newest transmitted message; the role prompt when there
    /// are no messages at all.
    pub fn latest_text(&self) -> &str {
        self.transmitted_messages()
            .last()
            .map(|m| m.text.as_str())
            .unwrap_or(&self.role_prompt)
    }
}

/// A completed model call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Wall-clock duration of the successful call; zero for scripted
    /// backends so scripted runs stay bit-deterministic.
    pub latency: Duration,
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {detail}")]
    TransportError { attempts: u32, detail: String },
    #[error("provider refused the request (HTTP {status}): {body}")]
    ProviderRefusal { status: u16, body: String },
    #[error("model returned an empty completion")]
    EmptyCompletion,
    #[error("script has unconsumed entries but none match the latest message: {latest}")]
    ScriptExhausted { latest: String },
    #[error("API key environment variable `{var}` is not set")]
    MissingApiKey { var: String },
}

/// A provider of chat completions.
#[async_trait]
pub trait Backend: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError>;

    /// A backend handle scoped to one consultation.
    ///
    /// HTTP backends are stateless and return themselves; the scripted
    /// backend returns a fresh replay cursor over the same script so
    /// concurrent consultations cannot steal each other's entries.
    fn fork_for_session(self: Arc<Self>) -> Arc<dyn Backend>;
}

/// Schedules calls so an endpoint never exceeds its requests-per-second cap.
///
/// Each acquisition claims the next free slot (previous slot + minimum
/// interval) and sleeps until it; unlimited when no cap is set.
pub struct RateLimiter {
    min_interval: Option<Duration>,
    next_slot: tokio::sync::Mutex<Option<tokio::time::Instant>>,
}

impl RateLimiter {
    pub fn new(rps_limit: Option<f64>) -> Self {
        let min_interval = rps_limit
            .filter(|rps| *rps > 0.0)
            .map(|rps| Duration::from_secs_f64(1.0 / rps));
        Self { min_interval, next_slot: tokio::sync::Mutex::new(None) }
    }

    pub async fn acquire(&self) {
        let Some(interval) = self.min_interval else { return };
        let slot = {
            let mut next = self.next_slot.lock().await;
            let now = tokio::time::Instant::now();
            let slot = next.map_or(now, |s| s.max(now));
            *next = Some(slot + interval);
            slot
        };
        tokio::time::sleep_until(slot).await;
    }
}

/// A named model endpoint: backend + rate limiter + call accounting.
///
/// Cloning shares the limiter and counter; [`Endpoint::session`] additionally
/// forks the backend for one consultation.
#[derive(Clone)]
pub struct Endpoint {
    pub name: String,
    pub model_id: String,
    /// Used when callers do not force a temperature of their own.
    pub default_temperature: f64,
    backend: Arc<dyn Backend>,
    limiter: Arc<RateLimiter>,
    calls: Arc<AtomicU64>,
}

impl std::fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Endpoint")
            .field("name", &self.name)
            .field("model_id", &self.model_id)
            .field("default_temperature", &self.default_temperature)
            .field("calls", &self.call_count())
            .finish()
    }
}

impl Endpoint {
    pub fn new(
        name: impl Into<String>,
        model_id: impl Into<String>,
        backend: Arc<dyn Backend>,
        rps_limit: Option<f64>,
        default_temperature: f64,
    ) -> Self {
        Self {
            name: name.into(),
            model_id: model_id.into(),
            default_temperature,
            backend,
            limiter: Arc::new(RateLimiter::new(rps_limit)),
            calls: Arc::new(AtomicU64::new(0)),
        }
    }

    /// Endpoint backed by an in-memory script; also returns the backend
    /// handle so tests can inspect the requests it received.
    pub fn scripted(name: impl Into<String>, script: Vec<ScriptEntry>) -> (Self, Arc<ScriptedBackend>) {
        let name = name.into();
        let backend = Arc::new(ScriptedBackend::new(script));
        let endpoint = Self::new(name.clone(), name, backend.clone(), None, 0.0);
        (endpoint, backend)
    }

    /// Same endpoint with a different default temperature (shared backend,
    /// limiter, and counter) — used for per-role temperature overrides.
    pub fn with_temperature(&self, temperature: f64) -> Self {
        let mut ep = self.clone();
        ep.default_temperature = temperature;
        ep
    }

    /// Fork a handle scoped to one consultation.
    pub fn session(&self) -> Self {
        let mut ep = self.clone();
        ep.backend = self.backend.clone().fork_for_session();
        ep
    }

    /// Build a request against this endpoint's model with its default
    /// temperature.
    pub fn request(
        &self,
        role_prompt: impl Into<String>,
        messages: Vec<Message>,
        context_window: ContextWindow,
    ) -> ChatRequest {
        ChatRequest {
            role_prompt: role_prompt.into(),
            messages,
            temperature: self.default_temperature,
            context_window,
            model_id: self.model_id.clone(),
        }
    }

    /// Total completed or attempted calls through this endpoint (all
    /// sessions included).
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    /// Execute a completion: rate-limit, delegate to the backend, reject
    /// blank output.
    pub async fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        self.limiter.acquire().await;
        self.calls.fetch_add(1, Ordering::Relaxed);
        let completion = self.backend.complete(request).await?;
        if completion.text.trim().is_empty() {
            return Err(GatewayError::EmptyCompletion);
        }
        Ok(completion)
    }
}
