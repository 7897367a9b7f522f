//! Registered datasets, persisted as corpus CSVs under the data root.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use pulse_core::corpus::{load_corpus, write_corpus_csv, Corpus, CorpusError};
use pulse_core::model::Theme;
use tracing::warn;

pub struct Datasets {
    dir: PathBuf,
    corpora: RwLock<BTreeMap<String, Arc<Corpus>>>,
    custom_themes: RwLock<BTreeMap<String, Vec<Theme>>>,
}

impl Datasets {
    /// Opens the registry, loading every CSV already in `dir`.
    pub fn open(dir: PathBuf) -> Result<Self, CorpusError> {
        fs::create_dir_all(&dir).map_err(|source| CorpusError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let mut corpora = BTreeMap::new();
        let entries = fs::read_dir(&dir).map_err(|source| CorpusError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("csv") {
                continue;
            }
            match load_corpus(&path) {
                Ok(c) => {
                    corpora.insert(c.dataset_id.clone(), Arc::new(c));
                }
                Err(e) => warn!(path = %path.display(), error = %e, "skipping unreadable dataset"),
            }
        }
        Ok(Self {
            dir,
            corpora: RwLock::new(corpora),
            custom_themes: RwLock::default(),
        })
    }

    pub fn register(&self, corpus: Corpus) -> Result<Arc<Corpus>, CorpusError> {
        let path = self.dir.join(format!("{}.csv", corpus.dataset_id));
        write_corpus_csv(&corpus, &path)?;
        let corpus = Arc::new(corpus);
        self.corpora
            .write()
            .expect("dataset registry")
            .insert(corpus.dataset_id.clone(), corpus.clone());
        Ok(corpus)
    }

    pub fn get(&self, id: &str) -> Option<Arc<Corpus>> {
        self.corpora.read().expect("dataset registry").get(id).cloned()
    }

    pub fn all(&self) -> Vec<Arc<Corpus>> {
        self.corpora.read().expect("dataset registry").values().cloned().collect()
    }

    /// Records a user-defined theme for a dataset, replacing any with the
    /// same normalized title.
    pub fn add_custom_theme(&self, dataset_id: &str, theme: Theme) {
        let mut all = self.custom_themes.write().expect("theme registry");
        let list = all.entry(dataset_id.to_string()).or_default();
        list.retain(|t| t.normalized_title() != theme.normalized_title());
        list.push(theme);
    }

    pub fn custom_themes(&self, dataset_id: &str) -> Vec<Theme> {
        self.custom_themes
            .read()
            .expect("theme registry")
            .get(dataset_id)
            .cloned()
            .unwrap_or_default()
    }
}
