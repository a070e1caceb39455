//! The single gateway for model calls.
//!
//! Every prompt in the pipeline goes through the [`ChatClient`] trait, so a
//! whole experiment can run against the scripted [`MockChatClient`], a real
//! chat-completion endpoint ([`HttpChatClient`]), or either wrapped in the
//! on-disk [`CachedClient`] and the in-flight [`LimitedClient`].

mod cache;
mod http;
mod limit;
mod mock;

pub use cache::{CacheMode, CachedClient};
pub use http::{post_score, HttpChatClient, HttpEmbeddingClient, RetryPolicy};
pub use limit::{with_concurrency_limit, LimitedClient};
pub use mock::{HashEmbeddingClient, MockChatClient, MockEmbeddingClient, MockMatcher, MockRule};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport error (status {status}): {body}")]
    Transport { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("network error: {0}")]
    Network(String),
    #[error("cache entry for key {key} is corrupt: {reason}")]
    CacheCorruption { key: String, reason: String },
    #[error("offline mode and no cache entry for key {key}")]
    CacheMiss { key: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("api key environment variable `{0}` is not set")]
    MissingApiKey(String),
    #[error("no mock script rule matches prompt starting with {0:?}")]
    NoScriptMatch(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("embedding error: {0}")]
    Embedding(String),
}

impl From<std::io::Error> for LlmError {
    fn from(err: std::io::Error) -> Self {
        LlmError::Io(err.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// A chat-completion request. The serialized field order is fixed, which
/// makes [`ChatRequest::canonical_json`] stable across runs and platforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(LlmError::Config(
                "chat request has no user message".to_string(),
            ));
        }
        Ok(())
    }

    /// Content of the last user message; mock rules match against this.
    pub fn last_user_content(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// Canonical serialization: fixed field order, UTF-8.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("chat request serializes")
    }

    /// Content hash of the canonical serialization.
    pub fn cache_key(&self) -> CacheKey {
        CacheKey::of(self)
    }
}

/// 256-bit content hash identifying a request in the cache.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn of(request: &ChatRequest) -> Self {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(request.canonical_json().as_bytes());
        CacheKey(hex::encode(digest))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
}

/// A chat-completion backend. Implementations must be deterministic for a
/// fixed configuration so cached and live runs agree.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

impl<T: ChatClient + ?Sized> ChatClient for std::sync::Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }
}

/// Batch text embedder. Wire contract: request `{texts: [string]}`,
/// response `{vectors: [[number]]}`.
pub trait EmbeddingClient: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError>;
}

/// Decoding defaults applied to every request an operation builds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestDefaults {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for RequestDefaults {
    fn default() -> Self {
        RequestDefaults {
            model: "default".to_string(),
            temperature: 0.0,
            max_tokens: 256,
            seed: None,
        }
    }
}

impl RequestDefaults {
    /// A single-user-message request carrying these defaults.
    pub fn user_request(&self, content: impl Into<String>) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            messages: vec![ChatMessage {
                role: Role::User,
                content: content.into(),
            }],
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed: self.seed,
        }
    }
}

/// Reads a model reply as a yes/no verdict: leading punctuation is skipped,
/// then a case-insensitive `yes`/`no` prefix decides.
pub fn parse_yes_no(raw: &str) -> Option<bool> {
    let cleaned = raw
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    if cleaned.starts_with("yes") {
        Some(true)
    } else if cleaned.starts_with("no") {
        Some(false)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(content: &str) -> ChatRequest {
        RequestDefaults::default().user_request(content)
    }

    #[test]
    fn canonical_json_is_stable() {
        let req = request("hello");
        // Frozen golden: guards the canonical field order across refactors.
        assert_eq!(
            req.canonical_json(),
            "{\"model\":\"default\",\"messages\":[{\"role\":\"user\",\"content\":\"hello\"}],\
             \"temperature\":0.0,\"max_tokens\":256}"
        );
        assert_eq!(req.cache_key(), request("hello").cache_key());
        assert_ne!(req.cache_key(), request("goodbye").cache_key());
    }

    #[test]
    fn request_without_user_message_is_invalid() {
        let req = ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage {
                role: Role::System,
                content: "sys".into(),
            }],
            temperature: 0.0,
            max_tokens: 16,
            seed: None,
        };
        assert!(req.validate().is_err());
    }

    #[test]
    fn yes_no_parsing() {
        assert_eq!(parse_yes_no("yes"), Some(true));
        assert_eq!(parse_yes_no("Yes, it is correct."), Some(true));
        assert_eq!(parse_yes_no("  NO way"), Some(false));
        assert_eq!(parse_yes_no("\"Yes\""), Some(true));
        assert_eq!(parse_yes_no("maybe"), None);
        assert_eq!(parse_yes_no(""), None);
    }
}
