//! Record/replay fixtures: one JSON file per request hash.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{ChatProvider, LlmError, LlmResponse, PromptRequest, ProviderError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub request_hash: String,
    pub request_tag: String,
    pub request: PromptRequest,
    pub response: LlmResponse,
}

#[derive(Debug, Clone)]
pub struct FixtureStore {
    dir: PathBuf,
}

impl FixtureStore {
    /// Opens an existing fixture directory (required for replay).
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(LlmError::Config(format!(
                "fixture directory {} does not exist",
                dir.display()
            )));
        }
        Ok(Self { dir })
    }

    /// Opens `dir`, creating it if needed (for recording).
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .map_err(|e| LlmError::Config(format!("creating fixture directory {}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }

    pub fn get(&self, request: &PromptRequest) -> Option<FixtureRecord> {
        let text = fs::read_to_string(self.path_for(&request.request_hash())).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn put(&self, request: &PromptRequest, response: &LlmResponse) -> std::io::Result<PathBuf> {
        let record = FixtureRecord {
            request_hash: request.request_hash(),
            request_tag: request.request_tag.clone(),
            request: request.clone(),
            response: response.clone(),
        };
        let path = self.path_for(&record.request_hash);
        let tmp = self.dir.join(format!(".{}.tmp", record.request_hash));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(serde_json::to_string_pretty(&record)?.as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_all()?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    /// Every readable record in the directory, sorted by request hash.
    pub fn records(&self) -> std::io::Result<Vec<FixtureRecord>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let text = fs::read_to_string(&path)?;
                if let Ok(rec) = serde_json::from_str::<FixtureRecord>(&text) {
                    out.push(rec);
                }
            }
        }
        out.sort_by(|a, b| a.request_hash.cmp(&b.request_hash));
        Ok(out)
    }
}

/// Serves recorded responses; never touches the network.
pub struct ReplayProvider {
    store: FixtureStore,
}

impl ReplayProvider {
    pub fn new(store: FixtureStore) -> Self {
        Self { store }
    }
}

#[async_trait]
impl ChatProvider for ReplayProvider {
    async fn chat(&self, request: &PromptRequest) -> Result<LlmResponse, ProviderError> {
        self.store
            .get(request)
            .map(|r| r.response)
            .ok_or_else(|| ProviderError::FixtureMiss {
                tag: request.request_tag.clone(),
                hash: request.request_hash(),
            })
    }
}

/// Forwards to an inner provider and persists every successful exchange.
pub struct RecordingProvider<P> {
    inner: P,
    store: FixtureStore,
}

impl<P> RecordingProvider<P> {
    pub fn new(inner: P, store: FixtureStore) -> Self {
        Self { inner, store }
    }
}

#[async_trait]
impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    async fn chat(&self, request: &PromptRequest) -> Result<LlmResponse, ProviderError> {
        let response = self.inner.chat(request).await?;
        self.store
            .put(request, &response)
            .map_err(|e| ProviderError::Fatal(format!("writing fixture: {e}")))?;
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn response(text: &str) -> LlmResponse {
        LlmResponse {
            text: text.into(),
            prompt_tokens: 11,
            completion_tokens: 7,
            provider_latency_ms: 1234,
            retry_count: 0,
        }
    }

    #[tokio::test]
    async fn replay_hit_and_miss() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::open(dir.path()).unwrap();
        let req = PromptRequest::new("gpt-4", "themes", "list themes");
        store.put(&req, &response("ok")).unwrap();

        let replay = ReplayProvider::new(store);
        let got = replay.chat(&req).await.unwrap();
        assert_eq!(got, response("ok"));
        assert_eq!(got.provider_latency_ms, 1234);

        let miss = PromptRequest::new("gpt-4", "quotes.0002", "other");
        match replay.chat(&miss).await.unwrap_err() {
            ProviderError::FixtureMiss { tag, .. } => assert_eq!(tag, "quotes.0002"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn replay_requires_existing_dir() {
        assert!(matches!(
            FixtureStore::open("/nonexistent/fixtures"),
            Err(LlmError::Config(_))
        ));
    }

    struct Echo;

    #[async_trait]
    impl ChatProvider for Echo {
        async fn chat(&self, request: &PromptRequest) -> Result<LlmResponse, ProviderError> {
            Ok(response(&request.user_text))
        }
    }

    #[tokio::test]
    async fn recording_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let rec = RecordingProvider::new(Echo, FixtureStore::create(dir.path().join("f")).unwrap());
        let req = PromptRequest::new("m", "t", "ping");
        rec.chat(&req).await.unwrap();
        let replay = ReplayProvider::new(FixtureStore::open(dir.path().join("f")).unwrap());
        assert_eq!(replay.chat(&req).await.unwrap().text, "ping");
        let records = FixtureStore::open(dir.path().join("f")).unwrap().records().unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].request_tag, "t");
    }
}
