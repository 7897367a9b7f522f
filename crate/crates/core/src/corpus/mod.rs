//! Forum-archive ingestion.
//!
//! Raw dump records are decoded by [`archive`], joined into chronologically
//! ordered [`DiscussionThread`]s by [`threads`], and persisted in the fixed
//! six-column CSV layout by [`csv_io`].

pub mod archive;
pub mod csv_io;
pub mod ingest;
pub mod threads;

use std::collections::{BTreeSet, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use archive::{parse_archive, parse_comments, parse_posts, ArchiveFormat, ParsedArchive};
pub use ingest::{from_parsed, ingest_files, ingest_streams, IngestStats, Ingested};
pub use csv_io::{load_corpus, read_corpus, write_corpus, write_corpus_csv, CORPUS_COLUMNS};
pub use threads::{aggregate_threads, Aggregation, THREAD_SEPARATOR};

use crate::text::sha256_hex;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unreadable stream: {0}")]
    UnreadableStream(#[source] std::io::Error),
    #[error("unknown archive format {0:?} (expected ndjson or zst)")]
    UnknownFormat(String),
    #[error("duplicate post id {0:?}")]
    DuplicatePostId(String),
    #[error("duplicate thread id {0:?}")]
    DuplicateThreadId(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV header mismatch: expected [{expected}], found [{found}]")]
    SchemaMismatch { expected: String, found: String },
    #[error("invalid CSV row {row}: {message}")]
    InvalidRow { row: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPost {
    pub post_id: String,
    pub subreddit: String,
    pub title: String,
    pub selftext: String,
    pub created_utc: i64,
    pub author: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawComment {
    pub comment_id: String,
    pub parent_post_id: String,
    pub body: String,
    pub created_utc: i64,
    pub author: String,
}

/// One post and all of its comments merged into a single text unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscussionThread {
    pub thread_id: String,
    pub subreddit: String,
    pub text: String,
    pub comment_count: u64,
    pub earliest_utc: i64,
    pub latest_utc: i64,
}

/// An ingested dataset.
///
/// `dataset_id` is a digest of the thread contents and `source_label` is
/// derived from the threads' subreddits, so both survive a CSV round trip.
/// `ingested_at` is load-time metadata and does not take part in equality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corpus {
    pub dataset_id: String,
    pub source_label: String,
    pub threads: Vec<DiscussionThread>,
    pub ingested_at: DateTime<Utc>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.dataset_id == other.dataset_id
            && self.source_label == other.source_label
            && self.threads == other.threads
    }
}

impl Eq for Corpus {}

impl Corpus {
    pub fn new(threads: Vec<DiscussionThread>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(threads.len());
        for t in &threads {
            if !seen.insert(t.thread_id.as_str()) {
                return Err(CorpusError::DuplicateThreadId(t.thread_id.clone()));
            }
        }
        Ok(Self {
            dataset_id: dataset_digest(&threads),
            source_label: derive_source_label(&threads),
            threads,
            ingested_at: Utc::now(),
        })
    }

    pub fn thread(&self, thread_id: &str) -> Option<&DiscussionThread> {
        self.threads.iter().find(|t| t.thread_id == thread_id)
    }

    pub fn len(&self) -> usize {
        self.threads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.threads.is_empty()
    }

    /// Latest activity timestamp in the corpus, or 0 for an empty corpus.
    pub fn as_of_utc(&self) -> i64 {
        self.threads.iter().map(|t| t.latest_utc).max().unwrap_or(0)
    }
}

fn dataset_digest(threads: &[DiscussionThread]) -> String {
    let mut buf = String::new();
    for t in threads {
        // Length-prefixed fields keep the encoding unambiguous.
        for field in [&t.thread_id, &t.subreddit, &t.text] {
            buf.push_str(&field.len().to_string());
            buf.push(':');
            buf.push_str(field);
        }
        buf.push_str(&format!("{}:{}:{};", t.comment_count, t.earliest_utc, t.latest_utc));
    }
    format!("ds-{}", &sha256_hex(buf)[..16])
}

fn derive_source_label(threads: &[DiscussionThread]) -> String {
    let subs: BTreeSet<&str> = threads
        .iter()
        .map(|t| t.subreddit.trim())
        .filter(|s| !s.is_empty())
        .collect();
    if subs.is_empty() {
        "unlabeled".to_string()
    } else {
        subs.into_iter().collect::<Vec<_>>().join("+")
    }
}
