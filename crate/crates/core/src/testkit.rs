//! Shared helpers for tests across the workspace: fixture paths, the
//! synthetic fixture corpus, and pipelines wired to in-process providers.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::corpus::{ingest_files, Corpus, Ingested};
use crate::llm::{ChatProvider, FixtureStore, Gateway, GatewayOptions, ReplayProvider};
use crate::model::Theme;
use crate::pipeline::{Clock, Pipeline, PipelineConfig};

/// Timestamp used for artifacts produced by test pipelines.
pub const TEST_EPOCH: i64 = 1_700_000_000;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Recorded LLM replies for the fixture corpus.
pub fn llm_fixtures_dir() -> PathBuf {
    fixtures_dir().join("llm")
}

pub fn parenting_dump() -> (PathBuf, PathBuf) {
    let dir = fixtures_dir().join("parenting");
    (dir.join("posts.ndjson"), dir.join("comments.ndjson"))
}

pub fn parenting_ingest() -> Ingested {
    let (posts, comments) = parenting_dump();
    ingest_files(&posts, &comments, None).expect("fixture dump ingests")
}

/// The 50-thread synthetic fixture corpus.
pub fn parenting_corpus() -> Corpus {
    parenting_ingest().corpus
}

pub fn parenting_csv() -> PathBuf {
    fixtures_dir().join("parenting.csv")
}

/// Small second dataset (subreddit "climatechange") for the API backend.
pub fn climate_ingest() -> Ingested {
    let dir = fixtures_dir().join("climatechange");
    ingest_files(&dir.join("posts.ndjson"), &dir.join("comments.ndjson"), None).expect("fixture dump ingests")
}

pub fn climate_csv() -> PathBuf {
    fixtures_dir().join("climatechange.csv")
}

/// Catalog the API derives from the fixture backend's two datasets: their
/// source labels in sorted order.
pub fn backend_catalog() -> Vec<String> {
    let mut labels = vec![parenting_corpus().source_label, climate_ingest().corpus.source_label];
    labels.sort();
    labels.dedup();
    labels
}

pub fn catalog() -> Vec<String> {
    std::fs::read_to_string(fixtures_dir().join("catalog.txt"))
        .expect("catalog fixture")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// The theme the recorded fixtures were captured for.
pub fn fixture_theme() -> Theme {
    Theme::suggested("Internet safety for children", "risks kids face online")
}

pub fn fast_options() -> GatewayOptions {
    GatewayOptions {
        max_retries: 3,
        backoff_base: std::time::Duration::from_millis(1),
        max_in_flight: 4,
    }
}

/// A pipeline over `provider` with its cache and reports under `root`.
pub fn pipeline_with(provider: Arc<dyn ChatProvider>, root: &Path, config: PipelineConfig) -> Pipeline {
    Pipeline::open(
        root,
        Gateway::new(provider, fast_options()),
        config,
        Clock::fixed_unix(TEST_EPOCH),
    )
    .expect("test pipeline")
}

/// A pipeline replaying the recorded fixtures.
pub fn replay_pipeline(root: &Path) -> Pipeline {
    let store = FixtureStore::open(llm_fixtures_dir()).expect("recorded fixtures present");
    pipeline_with(Arc::new(ReplayProvider::new(store)), root, PipelineConfig::default())
}
