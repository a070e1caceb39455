//! Content-addressed on-disk response cache.
//!
//! One file per request key plus an append-only index, so every experiment
//! is replayable offline and the cache directory is diffable. Writes go
//! through a temp file and an atomic rename; the index append holds a lock,
//! giving single-writer, multi-reader discipline.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{ChatClient, ChatRequest, ChatResponse, LlmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheMode {
    /// Serve hits from disk, forward misses to the inner client and store
    /// the result.
    ReadWrite,
    /// Cache-only: a miss is an error and the inner client is never called.
    Offline,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    content: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexLine {
    key: String,
    model: String,
}

/// Wraps any [`ChatClient`] with the on-disk cache. Identical requests yield
/// byte-identical responses once cached.
pub struct CachedClient {
    inner: Arc<dyn ChatClient>,
    dir: PathBuf,
    mode: CacheMode,
    index_lock: Mutex<()>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl CachedClient {
    pub fn new(inner: Arc<dyn ChatClient>, dir: impl Into<PathBuf>) -> Result<Self, LlmError> {
        Self::with_mode(inner, dir, CacheMode::ReadWrite)
    }

    pub fn with_mode(
        inner: Arc<dyn ChatClient>,
        dir: impl Into<PathBuf>,
        mode: CacheMode,
    ) -> Result<Self, LlmError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(CachedClient {
            inner,
            dir,
            mode,
            index_lock: Mutex::new(()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::SeqCst)
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn read_entry(&self, path: &Path, key: &str) -> Result<ChatResponse, LlmError> {
        let text = fs::read_to_string(path)?;
        let entry: CacheEntry =
            serde_json::from_str(&text).map_err(|e| LlmError::CacheCorruption {
                key: key.to_string(),
                reason: e.to_string(),
            })?;
        Ok(ChatResponse {
            content: entry.content,
        })
    }

    fn write_entry(&self, key: &str, model: &str, response: &ChatResponse) -> Result<(), LlmError> {
        let entry = CacheEntry {
            content: response.content.clone(),
        };
        let body = serde_json::to_string_pretty(&entry).expect("cache entry serializes");
        let final_path = self.entry_path(key);
        let tmp_path = self.dir.join(format!(".{key}.tmp"));
        fs::write(&tmp_path, body)?;
        fs::rename(&tmp_path, &final_path)?;

        let _guard = self.index_lock.lock().expect("index lock");
        let line = serde_json::to_string(&IndexLine {
            key: key.to_string(),
            model: model.to_string(),
        })
        .expect("index line serializes");
        let mut index = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join("index.jsonl"))?;
        use std::io::Write;
        writeln!(index, "{line}")?;
        Ok(())
    }
}

impl ChatClient for CachedClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let key = request.cache_key();
        let path = self.entry_path(key.as_str());
        if path.exists() {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return self.read_entry(&path, key.as_str());
        }
        if self.mode == CacheMode::Offline {
            return Err(LlmError::CacheMiss {
                key: key.as_str().to_string(),
            });
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let response = self.inner.complete(request)?;
        self.write_entry(key.as_str(), &request.model, &response)?;
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockChatClient, RequestDefaults};

    fn mock() -> Arc<MockChatClient> {
        Arc::new(
            MockChatClient::new()
                .with_regex_rule(".*", "Miami")
                .unwrap(),
        )
    }

    #[test]
    fn second_identical_request_hits_cache() {
        let inner = mock();
        let dir = tempfile::tempdir().unwrap();
        let cached = CachedClient::new(inner.clone(), dir.path()).unwrap();
        let req = RequestDefaults::default().user_request("what city?");

        let first = cached.complete(&req).unwrap();
        let second = cached.complete(&req).unwrap();
        assert_eq!(first, second);
        assert_eq!(inner.call_count(), 1);
        assert_eq!(cached.hits(), 1);
        assert_eq!(cached.misses(), 1);
    }

    #[test]
    fn offline_mode_serves_only_cached_requests() {
        let inner = mock();
        let dir = tempfile::tempdir().unwrap();
        let warm = CachedClient::new(inner.clone(), dir.path()).unwrap();
        let req = RequestDefaults::default().user_request("what city?");
        warm.complete(&req).unwrap();

        let offline =
            CachedClient::with_mode(inner.clone(), dir.path(), CacheMode::Offline).unwrap();
        assert_eq!(offline.complete(&req).unwrap().content, "Miami");

        let other = RequestDefaults::default().user_request("what country?");
        assert!(matches!(
            offline.complete(&other),
            Err(LlmError::CacheMiss { .. })
        ));
        // inner never consulted in offline mode
        assert_eq!(inner.call_count(), 1);
    }

    #[test]
    fn corrupt_entry_is_reported() {
        let inner = mock();
        let dir = tempfile::tempdir().unwrap();
        let cached = CachedClient::new(inner, dir.path()).unwrap();
        let req = RequestDefaults::default().user_request("what city?");
        let key = req.cache_key();
        std::fs::write(dir.path().join(format!("{key}.json")), "not json").unwrap();
        assert!(matches!(
            cached.complete(&req),
            Err(LlmError::CacheCorruption { .. })
        ));
    }

    #[test]
    fn index_records_written_entries() {
        let inner = mock();
        let dir = tempfile::tempdir().unwrap();
        let cached = CachedClient::new(inner, dir.path()).unwrap();
        cached
            .complete(&RequestDefaults::default().user_request("one"))
            .unwrap();
        cached
            .complete(&RequestDefaults::default().user_request("two"))
            .unwrap();
        let index = std::fs::read_to_string(dir.path().join("index.jsonl")).unwrap();
        assert_eq!(index.lines().count(), 2);
    }
}
