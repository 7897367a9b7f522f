//! Regenerates the synthetic fixtures: the fixture corpus CSV and the
//! recorded LLM replies, produced by the scripted provider.
//!
//! cargo run -p pulse-core --example record_fixtures --features test-support

use std::sync::Arc;

use pulse_core::corpus::write_corpus_csv;
use pulse_core::llm::scripted::ScriptedProvider;
use pulse_core::llm::{FixtureStore, RecordingProvider};
use pulse_core::pipeline::PipelineConfig;
use pulse_core::testkit;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ingested = testkit::parenting_ingest();
    println!("{}", serde_json::to_string(&ingested.stats)?);
    write_corpus_csv(&ingested.corpus, &testkit::parenting_csv())?;
    write_corpus_csv(&testkit::climate_ingest().corpus, &testkit::climate_csv())?;

    let dir = testkit::llm_fixtures_dir();
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    let store = FixtureStore::create(&dir)?;
    let provider = Arc::new(RecordingProvider::new(ScriptedProvider::new(), store));
    let scratch = tempfile::tempdir()?;
    let pipeline = testkit::pipeline_with(provider, scratch.path(), PipelineConfig::default());

    let theme = testkit::fixture_theme();
    let outcome = pipeline
        .capture_session(&ingested.corpus, "Climate Change", &testkit::catalog(), &theme.title, None)
        .await?;
    println!("recommended: {}", outcome.recommended.join(", "));
    // The API recommends over its registered datasets' labels.
    let backend = pipeline.recommend_sources("Climate Change", &testkit::backend_catalog()).await?;
    println!("backend recommended: {}", backend.join(", "));
    println!("report {}: {} quotes", outcome.report.report_id, outcome.report.totals.quotes);
    println!("{} provider calls recorded", pipeline.gateway().call_count());
    Ok(())
}
