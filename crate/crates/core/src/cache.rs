//! Content-addressed, filesystem-backed store for stage artifacts.
//!
//! Each key maps to a directory named by a digest of the key's stable string
//! form. The directory holds `key.json` and `artifact.json`; artifacts are
//! written to a temporary file and renamed into place.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::artifact::{Stage, StageArtifact};
use crate::model::Theme;
use crate::text::sha256_hex;

const KEY_FILE: &str = "key.json";
const ARTIFACT_FILE: &str = "artifact.json";

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("corrupt cache entry {key}: {reason} (evicted)")]
    CorruptEntry { key: String, reason: String },
    #[error("invalid cache key: {0}")]
    InvalidKey(String),
    #[error("cache i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CacheError + '_ {
    move |source| CacheError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub dataset_id: String,
    pub stage: Stage,
    pub theme_digest: String,
    pub prompt_version: String,
    pub model_id: String,
}

/// Digest of a theme title after trimming and case folding. Stages that
/// are not theme-specific use the digest of the empty title.
pub fn theme_digest(theme: Option<&Theme>) -> String {
    let normalized = theme.map(Theme::normalized_title).unwrap_or_default();
    sha256_hex(normalized)[..16].to_string()
}

impl CacheKey {
    pub fn new(dataset_id: &str, stage: Stage, theme: Option<&Theme>, prompt_version: &str, model_id: &str) -> Self {
        Self {
            dataset_id: dataset_id.to_string(),
            stage,
            theme_digest: theme_digest(theme),
            prompt_version: prompt_version.to_string(),
            model_id: model_id.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), CacheError> {
        for (name, v) in [
            ("dataset_id", &self.dataset_id),
            ("theme_digest", &self.theme_digest),
            ("prompt_version", &self.prompt_version),
            ("model_id", &self.model_id),
        ] {
            if v.is_empty() {
                return Err(CacheError::InvalidKey(format!("{name} is empty")));
            }
        }
        Ok(())
    }

    /// Unambiguous serialization: a JSON array of the components.
    pub fn stable_string(&self) -> String {
        serde_json::to_string(&[
            self.dataset_id.as_str(),
            self.stage.as_str(),
            self.theme_digest.as_str(),
            self.prompt_version.as_str(),
            self.model_id.as_str(),
        ])
        .expect("key serializes")
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.stable_string())[..32].to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub artifact_path: PathBuf,
    pub created_at: DateTime<Utc>,
    pub size_bytes: u64,
}

#[derive(Debug)]
pub struct CacheStore {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl CacheStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self {
            root,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn key_lock(&self, digest: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .expect("lock table")
            .entry(digest.to_string())
            .or_default()
            .clone()
    }

    fn entry_dir(&self, key: &CacheKey) -> PathBuf {
        self.root.join(key.digest())
    }

    /// Returns the artifact stored under `key`. An entry that no longer
    /// decodes or validates is removed and reported as `CorruptEntry`.
    pub fn get(&self, key: &CacheKey) -> Result<Option<StageArtifact>, CacheError> {
        let dir = self.entry_dir(key);
        let path = dir.join(ARTIFACT_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let checked = serde_json::from_str::<StageArtifact>(&text)
            .map_err(|e| e.to_string())
            .and_then(|a| {
                if a.stage != key.stage {
                    return Err(format!("stored stage {} differs from key stage {}", a.stage, key.stage));
                }
                a.validate().map(|()| a)
            });
        match checked {
            Ok(a) => Ok(Some(a)),
            Err(reason) => {
                let lock = self.key_lock(&key.digest());
                let _g = lock.lock().expect("key lock");
                if let Err(e) = fs::remove_dir_all(&dir) {
                    warn!(dir = %dir.display(), error = %e, "failed to evict corrupt cache entry");
                }
                Err(CacheError::CorruptEntry {
                    key: key.stable_string(),
                    reason,
                })
            }
        }
    }

    /// Stores `artifact` under `key`, replacing any previous value.
    pub fn put(&self, key: &CacheKey, artifact: &StageArtifact) -> Result<CacheEntry, CacheError> {
        key.validate()?;
        let digest = key.digest();
        let lock = self.key_lock(&digest);
        let _g = lock.lock().expect("key lock");

        let dir = self.root.join(&digest);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let key_path = dir.join(KEY_FILE);
        fs::write(&key_path, serde_json::to_string_pretty(key).expect("key serializes")).map_err(io_err(&key_path))?;

        let body = artifact.to_pretty_json();
        let tmp = dir.join(format!(".{ARTIFACT_FILE}.tmp"));
        {
            let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(body.as_bytes()).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        let path = dir.join(ARTIFACT_FILE);
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        Ok(CacheEntry {
            key: key.clone(),
            artifact_path: path,
            created_at: artifact.produced_at,
            size_bytes: body.len() as u64,
        })
    }

    /// Every live entry, ordered by key digest.
    pub fn entries(&self) -> Result<Vec<CacheEntry>, CacheError> {
        let mut out = Vec::new();
        let read = fs::read_dir(&self.root).map_err(io_err(&self.root))?;
        let mut dirs: Vec<PathBuf> = read.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
        dirs.sort();
        for dir in dirs {
            let Ok(key_text) = fs::read_to_string(dir.join(KEY_FILE)) else {
                continue;
            };
            let Ok(key) = serde_json::from_str::<CacheKey>(&key_text) else {
                continue;
            };
            let path = dir.join(ARTIFACT_FILE);
            let Ok(meta) = fs::metadata(&path) else {
                continue;
            };
            let created_at = fs::read_to_string(&path)
                .ok()
                .and_then(|t| serde_json::from_str::<StageArtifact>(&t).ok())
                .map(|a| a.produced_at)
                .unwrap_or_else(|| DateTime::<Utc>::from(meta.modified().unwrap_or(std::time::SystemTime::UNIX_EPOCH)));
            out.push(CacheEntry {
                key,
                artifact_path: path,
                created_at,
                size_bytes: meta.len(),
            });
        }
        Ok(out)
    }

    /// Removes every entry whose key matches `predicate`; returns the count.
    pub fn invalidate(&self, predicate: impl Fn(&CacheKey) -> bool) -> Result<usize, CacheError> {
        let mut removed = 0;
        for entry in self.entries()? {
            if !predicate(&entry.key) {
                continue;
            }
            let digest = entry.key.digest();
            let lock = self.key_lock(&digest);
            let _g = lock.lock().expect("key lock");
            let dir = self.root.join(&digest);
            match fs::remove_dir_all(&dir) {
                Ok(()) => removed += 1,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(io_err(&dir)(e)),
            }
        }
        Ok(removed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact::{SubtopicsDoc, ThemesDoc};
    use crate::model::Subtopic;
    use chrono::TimeZone;

    fn artifact(version: &str) -> StageArtifact {
        let doc = SubtopicsDoc {
            code_count: 1,
            subtopics: vec![Subtopic {
                code: 1,
                name: "Screen time".into(),
                description: "limits".into(),
            }],
            warnings: vec![],
        };
        StageArtifact::new(
            Stage::Subtopics,
            &doc,
            Utc.timestamp_opt(1_700_000_000, 0).unwrap(),
            version,
            "gpt-4",
        )
    }

    fn key(version: &str, theme: &str) -> CacheKey {
        CacheKey::new("ds-1", Stage::Subtopics, Some(&Theme::user_defined(theme, "")), version, "gpt-4")
    }

    #[test]
    fn empty_store_misses() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path()).unwrap();
        assert!(store.get(&key("v1", "t")).unwrap().is_none());
    }

    #[test]
    fn put_then_get_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path()).unwrap();
        let a = artifact("v1");
        let entry = store.put(&key("v1", "t"), &a).unwrap();
        assert!(entry.artifact_path.exists());
        assert_eq!(store.get(&key("v1", "t")).unwrap(), Some(a.clone()));
        assert_eq!(fs::read_to_string(&entry.artifact_path).unwrap(), a.to_pretty_json());
    }

    #[test]
    fn last_write_wins() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path()).unwrap();
        store.put(&key("v1", "t"), &artifact("v1")).unwrap();
        let mut b = artifact("v1");
        b.model_id = "other".into();
        store.put(&key("v1", "t"), &b).unwrap();
        assert_eq!(store.get(&key("v1", "t")).unwrap().unwrap().model_id, "other");
    }

    #[test]
    fn theme_normalization_shares_entries() {
        assert_eq!(key("v1", "Climate Change"), key("v1", "  climate change "));
        assert_ne!(key("v1", "Climate Change"), key("v1", "Climate"));
    }

    #[test]
    fn invalidate_removes_only_matching() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path()).unwrap();
        for t in ["a", "b", "c"] {
            store.put(&key("v1", t), &artifact("v1")).unwrap();
        }
        for t in ["a", "b"] {
            store.put(&key("v2", t), &artifact("v2")).unwrap();
        }
        let removed = store.invalidate(|k| k.prompt_version != "v2").unwrap();
        assert_eq!(removed, 3);
        assert!(store.get(&key("v1", "a")).unwrap().is_none());
        assert!(store.get(&key("v2", "a")).unwrap().is_some());
        assert!(store.get(&key("v2", "b")).unwrap().is_some());
        assert_eq!(store.entries().unwrap().len(), 2);
    }

    #[test]
    fn corrupt_entry_is_evicted() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path()).unwrap();
        let entry = store.put(&key("v1", "t"), &artifact("v1")).unwrap();
        fs::write(&entry.artifact_path, "{\"stage\":\"subtopics\",\"payload\":{}}").unwrap();
        assert!(matches!(store.get(&key("v1", "t")), Err(CacheError::CorruptEntry { .. })));
        assert!(store.get(&key("v1", "t")).unwrap().is_none());
    }

    #[test]
    fn payload_must_match_stage_schema() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path()).unwrap();
        let k = CacheKey::new("ds-1", Stage::Themes, None, "v1", "gpt-4");
        let mut a = StageArtifact::new(
            Stage::Themes,
            &ThemesDoc {
                suggested: vec![],
                selected: None,
            },
            Utc::now(),
            "v1",
            "gpt-4",
        );
        a.payload = serde_json::json!({"suggested": "nope"});
        store.put(&k, &a).unwrap();
        assert!(matches!(store.get(&k), Err(CacheError::CorruptEntry { .. })));
    }

    #[test]
    fn empty_component_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path()).unwrap();
        let k = CacheKey::new("", Stage::Quotes, None, "v1", "m");
        assert!(matches!(store.put(&k, &artifact("v1")), Err(CacheError::InvalidKey(_))));
    }
}
