//! OpenAI-compatible HTTP backend: one client covers every provider that
//! serves the `/chat/completions` JSON protocol.

use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;

use super::{Backend, ChatRequest, Completion, GatewayError, Speaker};

/// Chat-completion client for one provider base URL.
///
/// Auth is a secret *reference*: the name of an environment variable, read
/// at call time and never stored, so no key can leak into transcripts,
/// configs, or reports.
#[derive(Clone)]
pub struct HttpBackend {
    client: reqwest::Client,
    base_url: String,
    api_key_env: Option<String>,
    max_retries: u32,
    retry_base_delay: Duration,
}

impl HttpBackend {
    pub fn new(
        base_url: impl Into<String>,
        api_key_env: Option<String>,
        max_retries: u32,
        request_timeout: Duration,
    ) -> Self {
        let client = reqwest::Client::builder()
            .timeout(request_timeout)
            .build()
            .expect("HTTP client construction cannot fail with static options");
        Self {
            client,
            base_url: base_url.into(),
            api_key_env,
            max_retries,
            retry_base_delay: Duration::from_secs(1),
        }
    }

    fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    fn api_key(&self) -> Result<Option<String>, GatewayError> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(key) if !key.trim().is_empty() => Ok(Some(key)),
                _ => Err(GatewayError::MissingApiKey { var: var.clone() }),
            },
        }
    }
}

/// Wire form of the message list: windowed history with the role prompt as
/// a leading system message (omitted when empty).
pub(crate) fn wire_messages(request: &ChatRequest) -> Vec<serde_json::Value> {
    let mut out = Vec::new();
    if !request.role_prompt.is_empty() {
        out.push(json!({"role": "system", "content": request.role_prompt}));
    }
    for message in request.transmitted_messages() {
        let role = match message.speaker {
            Speaker::Agent => "assistant",
            Speaker::Environment => "user",
        };
        out.push(json!({"role": role, "content": message.text}));
    }
    out
}

/// Transient failures worth retrying: rate limiting and server-side errors.
pub(crate) fn retriable_status(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[async_trait]
impl Backend for HttpBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let body = json!({
            "model": request.model_id,
            "temperature": request.temperature,
            "messages": wire_messages(request),
        });
        let key = self.api_key()?;
        let url = self.completions_url();

        let mut last_transport = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                let delay = self.retry_base_delay * 2u32.pow(attempt - 1);
                tracing::debug!(attempt, ?delay, "retrying after transient failure");
                tokio::time::sleep(delay).await;
            }

            let started = Instant::now();
            let mut builder = self.client.post(&url).json(&body);
            if let Some(key) = &key {
                builder = builder.bearer_auth(key);
            }
            let response = match builder.send().await {
                Ok(r) => r,
                Err(e) => {
                    last_transport = e.to_string();
                    continue;
                }
            };

            let status = response.status().as_u16();
            if retriable_status(status) {
                last_transport = format!("HTTP {status}");
                continue;
            }
            if !(200..300).contains(&status) {
                let body = response.text().await.unwrap_or_default();
                return Err(GatewayError::ProviderRefusal { status, body });
            }

            let parsed: CompletionBody = response.json().await.map_err(|e| {
                GatewayError::ProviderRefusal {
                    status,
                    body: format!("unparseable completion body: {e}"),
                }
            })?;
            let text = parsed
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
                .unwrap_or_default();
            if text.trim().is_empty() {
                return Err(GatewayError::EmptyCompletion);
            }
            return Ok(Completion { text, latency: started.elapsed() });
        }

        Err(GatewayError::TransportError {
            attempts: self.max_retries + 1,
            detail: last_transport,
        })
    }

    fn fork_for_session(self: Arc<Self>) -> Arc<dyn Backend> {
        // Stateless: every session shares the same client.
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ContextWindow, Message};

    fn request() -> ChatRequest {
        ChatRequest {
            role_prompt: "be brief".into(),
            messages: vec![
                Message::environment("q1"),
                Message::agent("a1"),
                Message::environment("q2"),
            ],
            temperature: 0.7,
            context_window: ContextWindow::Unlimited,
            model_id: "m".into(),
        }
    }

    #[test]
    fn wire_messages_map_speakers_to_chat_roles() {
        let wire = wire_messages(&request());
        let roles: Vec<&str> = wire.iter().map(|m| m["role"].as_str().unwrap()).collect();
        assert_eq!(roles, ["system", "user", "assistant", "user"]);
        assert_eq!(wire[0]["content"], "be brief");
        assert_eq!(wire[3]["content"], "q2");
    }

    #[test]
    fn empty_role_prompt_sends_no_system_message() {
        let mut req = request();
        req.role_prompt.clear();
        let wire = wire_messages(&req);
        assert!(wire.iter().all(|m| m["role"] != "system"));
        assert_eq!(wire.len(), 3);
    }

    #[test]
    fn wire_messages_respect_the_window() {
        let mut req = request();
        req.context_window = ContextWindow::last(1);
        let wire = wire_messages(&req);
        // system + exactly the latest message
        assert_eq!(wire.len(), 2);
        assert_eq!(wire[1]["content"], "q2");
    }

    #[test]
    fn retry_classification_covers_timeouts_rate_limits_and_5xx_only() {
        assert!(retriable_status(429));
        assert!(retriable_status(500));
        assert!(retriable_status(503));
        assert!(!retriable_status(400));
        assert!(!retriable_status(401));
        assert!(!retriable_status(404));
        assert!(!retriable_status(200));
    }

    #[test]
    fn url_join_tolerates_trailing_slash() {
        let b = HttpBackend::new("https://api.example.com/v1/", None, 3, Duration::from_secs(30));
        assert_eq!(b.completions_url(), "https://api.example.com/v1/chat/completions");
    }

    #[tokio::test]
    async fn missing_api_key_is_reported_before_any_network_io() {
        let b = HttpBackend::new(
            "http://127.0.0.1:1",
            Some("DEFINITELY_UNSET_KEY_VAR_1234".into()),
            0,
            Duration::from_millis(10),
        );
        match b.complete(&request()).await {
            Err(GatewayError::MissingApiKey { var }) => {
                assert_eq!(var, "DEFINITELY_UNSET_KEY_VAR_1234")
            }
            other => panic!("expected MissingApiKey, got {other:?}"),
        }
    }
}
