//! HTTP clients for chat completion, embeddings, and external scoring,
//! speaking the common JSON wire shapes.
//!
//! Chat request body: `{model, messages, temperature, max_tokens, seed?}`;
//! response: `{choices: [{message: {content}}]}` (first choice used).
//! Transient failures (transport errors, timeouts, 429, 5xx) are retried
//! with exponential backoff plus seeded jitter.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::sync::Mutex;
use std::time::Duration;

use super::{ChatClient, ChatRequest, ChatResponse, EmbeddingClient, LlmError};

/// Retry/backoff settings. Attempt `i` (zero-based) sleeps
/// `base * 2^i + jitter` before retrying, where jitter is uniform in
/// `[0, base/2)` drawn from a seeded generator.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_backoff: Duration,
    pub seed: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_backoff: Duration::from_millis(250),
            seed: 0,
        }
    }
}

fn build_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn classify(err: ureq::Error) -> LlmError {
    match err {
        ureq::Error::Timeout(_) => LlmError::Timeout,
        other => LlmError::Network(other.to_string()),
    }
}

fn excerpt(body: &str) -> String {
    body.chars().take(200).collect()
}

/// Sends one JSON POST and reads the response body; non-2xx statuses are
/// reported as [`LlmError::Transport`].
fn post_json<B: Serialize, T: DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    body: &B,
) -> Result<T, LlmError> {
    let mut request = agent.post(url);
    if let Some(key) = api_key {
        request = request.header("authorization", &format!("Bearer {key}"));
    }
    let mut response = request.send_json(body).map_err(classify)?;
    let status = response.status().as_u16();
    let text = response
        .body_mut()
        .read_to_string()
        .map_err(|e| LlmError::Network(e.to_string()))?;
    if !(200..300).contains(&status) {
        return Err(LlmError::Transport {
            status,
            body: excerpt(&text),
        });
    }
    serde_json::from_str(&text).map_err(|e| LlmError::Network(format!("bad response body: {e}")))
}

fn retryable(err: &LlmError) -> bool {
    match err {
        LlmError::Timeout | LlmError::Network(_) => true,
        LlmError::Transport { status, .. } => *status == 429 || (500..600).contains(status),
        _ => false,
    }
}

/// Runs `call` under the retry policy, sleeping between attempts.
fn with_retries<T>(
    policy: &RetryPolicy,
    rng: &Mutex<ChaCha8Rng>,
    what: &str,
    mut call: impl FnMut() -> Result<T, LlmError>,
) -> Result<T, LlmError> {
    let mut attempt = 0u32;
    loop {
        match call() {
            Ok(value) => {
                if attempt > 0 {
                    log::info!("{what}: succeeded on attempt {}", attempt + 1);
                }
                return Ok(value);
            }
            Err(err) if retryable(&err) && attempt < policy.max_retries => {
                let base = policy.base_backoff.as_millis() as u64;
                let jitter = if base >= 2 {
                    rng.lock().expect("rng lock").random_range(0..base / 2)
                } else {
                    0
                };
                let sleep = base.saturating_mul(1 << attempt.min(16)) + jitter;
                log::warn!(
                    "{what}: attempt {} failed ({err}); retrying in {sleep} ms",
                    attempt + 1
                );
                std::thread::sleep(Duration::from_millis(sleep));
                attempt += 1;
            }
            Err(err) => return Err(err),
        }
    }
}

#[derive(Serialize)]
struct WireChatRequest<'a> {
    model: &'a str,
    messages: &'a [super::ChatMessage],
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: String,
}

#[derive(Deserialize)]
struct WireChatResponse {
    choices: Vec<WireChoice>,
}

/// Chat-completion endpoint client.
pub struct HttpChatClient {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    retry: RetryPolicy,
    rng: Mutex<ChaCha8Rng>,
}

impl HttpChatClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        let retry = RetryPolicy::default();
        let rng = Mutex::new(ChaCha8Rng::seed_from_u64(retry.seed));
        HttpChatClient {
            endpoint: endpoint.into(),
            api_key: None,
            agent: build_agent(Duration::from_secs(60)),
            retry,
            rng,
        }
    }

    /// Reads the API key from the named environment variable.
    pub fn with_api_key_env(mut self, var: &str) -> Result<Self, LlmError> {
        let key = std::env::var(var).map_err(|_| LlmError::MissingApiKey(var.to_string()))?;
        self.api_key = Some(key);
        Ok(self)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.agent = build_agent(timeout);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.rng = Mutex::new(ChaCha8Rng::seed_from_u64(retry.seed));
        self.retry = retry;
        self
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let body = WireChatRequest {
            model: &request.model,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            seed: request.seed,
        };
        let wire: WireChatResponse =
            with_retries(&self.retry, &self.rng, "chat completion", || {
                post_json(&self.agent, &self.endpoint, self.api_key.as_deref(), &body)
            })?;
        let first = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LlmError::Network("response carried no choices".to_string()))?;
        Ok(ChatResponse {
            content: first.message.content,
        })
    }
}

#[derive(Serialize)]
struct WireEmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct WireEmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Embedding endpoint client. Wire: `{texts: [..]}` -> `{vectors: [[..]]}`.
pub struct HttpEmbeddingClient {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpEmbeddingClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpEmbeddingClient {
            endpoint: endpoint.into(),
            api_key: None,
            agent: build_agent(Duration::from_secs(60)),
        }
    }

    pub fn with_api_key_env(mut self, var: &str) -> Result<Self, LlmError> {
        let key = std::env::var(var).map_err(|_| LlmError::MissingApiKey(var.to_string()))?;
        self.api_key = Some(key);
        Ok(self)
    }
}

impl EmbeddingClient for HttpEmbeddingClient {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        let body = WireEmbedRequest { texts };
        let response: WireEmbedResponse =
            post_json(&self.agent, &self.endpoint, self.api_key.as_deref(), &body)?;
        Ok(response.vectors)
    }
}

/// Generic scoring endpoint call used by the external reranker:
/// `{question, hint}` -> `{score}`.
pub fn post_score(
    agent_timeout: Duration,
    endpoint: &str,
    question: &str,
    hint: &str,
) -> Result<f64, LlmError> {
    #[derive(Serialize)]
    struct Req<'a> {
        question: &'a str,
        hint: &'a str,
    }
    #[derive(Deserialize)]
    struct Resp {
        score: f64,
    }
    let agent = build_agent(agent_timeout);
    let resp: Resp = post_json(&agent, endpoint, None, &Req { question, hint })?;
    Ok(resp.score)
}
