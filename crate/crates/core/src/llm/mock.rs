//! Script-driven mock backends for offline, deterministic pipeline runs.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use super::{ChatClient, ChatRequest, ChatResponse, EmbeddingClient, LlmError};

/// How a script rule recognizes a request. `Exact` and `Regex` match the
/// last user message; `Hash` matches the request's cache key.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockMatcher {
    Exact { value: String },
    Regex { pattern: String },
    Hash { value: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(rename = "match")]
    pub matcher: MockMatcher,
    pub response: String,
}

enum Compiled {
    Exact(String),
    Regex(Regex),
    Hash(String),
}

/// A deterministic chat backend driven by an ordered rule list; the first
/// matching rule answers. Tracks how many times it was called so tests can
/// observe cache hits.
pub struct MockChatClient {
    rules: Vec<(Compiled, String)>,
    calls: AtomicU64,
    delay: Option<Duration>,
}

impl Default for MockChatClient {
    fn default() -> Self {
        Self::new()
    }
}

impl MockChatClient {
    pub fn new() -> Self {
        MockChatClient {
            rules: Vec::new(),
            calls: AtomicU64::new(0),
            delay: None,
        }
    }

    pub fn from_rules(rules: Vec<MockRule>) -> Result<Self, LlmError> {
        let mut client = Self::new();
        for rule in rules {
            client.push_rule(rule)?;
        }
        Ok(client)
    }

    /// Loads a JSON script file: an array of `{match, response}` rules.
    pub fn from_script_file(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let rules: Vec<MockRule> = serde_json::from_str(&text)
            .map_err(|e| LlmError::Config(format!("bad mock script: {e}")))?;
        Self::from_rules(rules)
    }

    fn push_rule(&mut self, rule: MockRule) -> Result<(), LlmError> {
        let compiled = match rule.matcher {
            MockMatcher::Exact { value } => Compiled::Exact(value),
            MockMatcher::Regex { pattern } => Compiled::Regex(
                Regex::new(&pattern)
                    .map_err(|e| LlmError::Config(format!("bad mock regex: {e}")))?,
            ),
            MockMatcher::Hash { value } => Compiled::Hash(value),
        };
        self.rules.push((compiled, rule.response));
        Ok(())
    }

    pub fn with_exact_rule(
        mut self,
        prompt: impl Into<String>,
        response: impl Into<String>,
    ) -> Self {
        self.rules
            .push((Compiled::Exact(prompt.into()), response.into()));
        self
    }

    pub fn with_regex_rule(
        mut self,
        pattern: &str,
        response: impl Into<String>,
    ) -> Result<Self, LlmError> {
        let regex =
            Regex::new(pattern).map_err(|e| LlmError::Config(format!("bad mock regex: {e}")))?;
        self.rules.push((Compiled::Regex(regex), response.into()));
        Ok(self)
    }

    pub fn with_hash_rule(mut self, key: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules
            .push((Compiled::Hash(key.into()), response.into()));
        self
    }

    /// Adds an artificial per-call delay; used to observe in-flight limits.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatClient for MockChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(delay) = self.delay {
            std::thread::sleep(delay);
        }
        let prompt = request.last_user_content().unwrap_or_default();
        let key = request.cache_key();
        for (matcher, response) in &self.rules {
            let hit = match matcher {
                Compiled::Exact(value) => value == prompt,
                Compiled::Regex(regex) => regex.is_match(prompt),
                Compiled::Hash(value) => value == key.as_str(),
            };
            if hit {
                return Ok(ChatResponse {
                    content: response.clone(),
                });
            }
        }
        Err(LlmError::NoScriptMatch(
            prompt.chars().take(120).collect::<String>(),
        ))
    }
}

/// Embedder returning fixed vectors for known texts.
#[derive(Debug, Default)]
pub struct MockEmbeddingClient {
    vectors: BTreeMap<String, Vec<f64>>,
}

impl MockEmbeddingClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_vector(mut self, text: impl Into<String>, vector: Vec<f64>) -> Self {
        self.vectors.insert(text.into(), vector);
        self
    }
}

impl EmbeddingClient for MockEmbeddingClient {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        texts
            .iter()
            .map(|t| {
                self.vectors
                    .get(t)
                    .cloned()
                    .ok_or_else(|| LlmError::Embedding(format!("no fixture vector for {t:?}")))
            })
            .collect()
    }
}

/// Deterministic fallback embedder: folds the text's bytes into a fixed-size
/// vector and L2-normalizes. Identical strings always embed identically.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbeddingClient {
    pub dim: usize,
}

impl HashEmbeddingClient {
    pub fn new(dim: usize) -> Self {
        HashEmbeddingClient { dim: dim.max(1) }
    }
}

impl EmbeddingClient for HashEmbeddingClient {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        Ok(texts
            .iter()
            .map(|t| {
                let mut v = vec![0.0f64; self.dim];
                for (i, b) in t.bytes().enumerate() {
                    v[i % self.dim] += f64::from(b) / 255.0;
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for x in &mut v {
                        *x /= norm;
                    }
                }
                v
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::RequestDefaults;

    #[test]
    fn first_matching_rule_wins() {
        let mock = MockChatClient::new()
            .with_regex_rule("city", "first")
            .unwrap()
            .with_exact_rule("what city?", "second");
        let resp = mock
            .complete(&RequestDefaults::default().user_request("what city?"))
            .unwrap();
        assert_eq!(resp.content, "first");
        assert_eq!(mock.call_count(), 1);
    }

    #[test]
    fn hash_rule_matches_request_key() {
        let req = RequestDefaults::default().user_request("ping");
        let mock = MockChatClient::new().with_hash_rule(req.cache_key().as_str(), "pong");
        assert_eq!(mock.complete(&req).unwrap().content, "pong");
    }

    #[test]
    fn unmatched_prompt_is_an_error() {
        let mock = MockChatClient::new();
        let err = mock
            .complete(&RequestDefaults::default().user_request("hello"))
            .unwrap_err();
        assert!(matches!(err, LlmError::NoScriptMatch(_)));
    }

    #[test]
    fn script_file_round_trip() {
        let rules = vec![MockRule {
            matcher: MockMatcher::Regex {
                pattern: "hints".to_string(),
            },
            response: "1. A\n2. B".to_string(),
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        std::fs::write(&path, serde_json::to_string_pretty(&rules).unwrap()).unwrap();
        let mock = MockChatClient::from_script_file(&path).unwrap();
        let resp = mock
            .complete(&RequestDefaults::default().user_request("give me hints"))
            .unwrap();
        assert_eq!(resp.content, "1. A\n2. B");
    }

    #[test]
    fn hash_embedder_is_deterministic_and_normalized() {
        let emb = HashEmbeddingClient::new(8);
        let a = emb.embed(&["same text".to_string()]).unwrap();
        let b = emb.embed(&["same text".to_string()]).unwrap();
        assert_eq!(a, b);
        let norm: f64 = a[0].iter().map(|x| x * x).sum::<f64>();
        assert!((norm - 1.0).abs() < 1e-9);
    }
}
