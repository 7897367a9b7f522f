//! The staged analysis pipeline.
//!
//! Stages run strictly in order: quote extraction, subtopic identification,
//! and quote mapping, with theme generation and source recommendation as
//! separate entry points. Batches inside a stage run concurrently up to the
//! gateway's in-flight limit; results are reassembled in input order so
//! output is deterministic for a fixed set of model replies.

pub mod batching;
mod job;
mod mapping;
mod quotes;
mod sources;
mod subtopics;
mod themes;

use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, TimeZone, Utc};
use thiserror::Error;
use tracing::warn;

pub use job::{JobHandle, JobManager, JobPhase, JobState, Submission};
pub use mapping::MappingOutcome;
pub use quotes::QuotesOutcome;
pub use subtopics::SubtopicsOutcome;
pub use themes::select_theme;

use crate::artifact::{Stage, StageArtifact};
use crate::cache::{CacheError, CacheKey, CacheStore};
use crate::corpus::{Corpus, DiscussionThread};
use futures::stream::{self, StreamExt};

use crate::llm::{Gateway, JsonReply, JsonSchema, LlmError, PromptRequest};
use crate::model::Theme;
use crate::prompts::{PromptError, PromptLibrary, TemplateId};
use crate::report::ReportError;
use crate::text::estimate_tokens;

/// Number of suggested themes requested per dataset.
pub const THEME_COUNT: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub model_id: String,
    pub temperature: f32,
    pub max_output_tokens: u32,
    /// Upper bound on the estimated tokens of data sent in one request.
    pub batch_token_budget: usize,
    /// Catalog labels per recommendation request.
    pub chunk_size: usize,
    pub code_count: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            model_id: "gpt-4".into(),
            temperature: 0.0,
            max_output_tokens: 4096,
            batch_token_budget: 6_000,
            chunk_size: 200,
            code_count: 9,
        }
    }
}

/// Source of artifact timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    System,
    Fixed(DateTime<Utc>),
    /// The latest thread timestamp of the corpus being analyzed, so replayed
    /// runs stamp identical times.
    DatasetTime,
}

impl Clock {
    pub fn now_for(&self, corpus: &Corpus) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Fixed(t) => *t,
            Clock::DatasetTime => Utc.timestamp_opt(corpus.as_of_utc(), 0).single().unwrap_or_default(),
        }
    }

    /// Replayed runs stamp dataset time so their artifacts are reproducible;
    /// live and recording runs use the system clock. `SOURCE_DATE_EPOCH`
    /// overrides both.
    pub fn for_mode(mode: crate::llm::ProviderMode) -> Clock {
        match mode {
            crate::llm::ProviderMode::Replay => Clock::from_env_or(Clock::DatasetTime),
            _ => Clock::from_env_or(Clock::System),
        }
    }

    /// Fixed at `SOURCE_DATE_EPOCH` when set, otherwise `fallback`.
    pub fn from_env_or(fallback: Clock) -> Clock {
        std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.trim().parse::<i64>().ok())
            .map(Clock::fixed_unix)
            .unwrap_or(fallback)
    }

    pub fn fixed_unix(secs: i64) -> Self {
        Clock::Fixed(Utc.timestamp_opt(secs, 0).single().unwrap_or_default())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("source catalog is empty")]
    EmptyCatalog,
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("{stage}: expected {expected} items, got {got} ({detail})")]
    WrongCardinality {
        stage: &'static str,
        expected: usize,
        got: usize,
        detail: String,
    },
    #[error("stage {stage} failed: {source}")]
    Llm {
        stage: &'static str,
        #[source]
        source: LlmError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cached artifact unusable: {0}")]
    Artifact(String),
}

impl PipelineError {
    fn llm(stage: &'static str) -> impl FnOnce(LlmError) -> PipelineError {
        move |source| PipelineError::Llm { stage, source }
    }

    /// The underlying gateway error, if any.
    pub fn llm_error(&self) -> Option<&LlmError> {
        match self {
            PipelineError::Llm { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// Shared services for every stage.
pub struct Pipeline {
    gateway: Arc<Gateway>,
    prompts: Arc<PromptLibrary>,
    cache: Arc<CacheStore>,
    config: PipelineConfig,
    clock: Clock,
    reports_root: PathBuf,
}

impl Pipeline {
    pub fn new(
        gateway: Arc<Gateway>,
        prompts: Arc<PromptLibrary>,
        cache: Arc<CacheStore>,
        config: PipelineConfig,
        reports_root: impl Into<PathBuf>,
    ) -> Self {
        Self {
            gateway,
            prompts,
            cache,
            config,
            clock: Clock::System,
            reports_root: reports_root.into(),
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn prompts(&self) -> &PromptLibrary {
        &self.prompts
    }

    pub fn cache(&self) -> &CacheStore {
        &self.cache
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn reports_root(&self) -> &std::path::Path {
        &self.reports_root
    }

    fn request(&self, tag: String, system: Option<String>, user: String) -> PromptRequest {
        PromptRequest {
            model_id: self.config.model_id.clone(),
            system_text: system,
            user_text: user,
            temperature: self.config.temperature,
            max_output_tokens: self.config.max_output_tokens,
            request_tag: tag,
        }
    }

    fn concurrency(&self) -> usize {
        self.gateway.options().max_in_flight.max(1)
    }

    pub fn themes_version(&self) -> String {
        self.prompts.version_of(&[TemplateId::ThemeGeneration])
    }

    /// Prompt version recorded on report-stage artifacts and cache keys. The
    /// configured code count is folded in because it changes the prompts.
    pub fn report_version(&self) -> String {
        format!("{}+codes{}", self.prompts.report_version(), self.config.code_count)
    }

    fn key(&self, corpus: &Corpus, stage: Stage, theme: Option<&Theme>) -> CacheKey {
        let version = match stage {
            Stage::Themes => self.themes_version(),
            _ => self.report_version(),
        };
        CacheKey::new(&corpus.dataset_id, stage, theme, &version, &self.config.model_id)
    }

    fn artifact(&self, corpus: &Corpus, stage: Stage, payload: &impl serde::Serialize) -> StageArtifact {
        let version = match stage {
            Stage::Themes => self.themes_version(),
            _ => self.report_version(),
        };
        StageArtifact::new(stage, payload, self.clock.now_for(corpus), &version, &self.config.model_id)
    }

    /// Cache lookup that treats corrupt entries as misses.
    fn cached(&self, key: &CacheKey) -> Option<StageArtifact> {
        match self.cache.get(key) {
            Ok(hit) => hit,
            Err(e) => {
                warn!(error = %e, "ignoring unusable cache entry");
                None
            }
        }
    }
}

/// Data rows as sent to the model: a header line naming the thread, then
/// the thread text.
pub(crate) fn render_row(index: usize, thread: &DiscussionThread) -> String {
    format!("[row {}] source_id: {}\n{}", index + 1, thread.thread_id, thread.text)
}

pub(crate) fn row_costs(rows: &[String]) -> Vec<usize> {
    rows.iter().map(|r| estimate_tokens(r) + 1).collect()
}

pub(crate) type BatchResult = (String, Result<JsonReply, LlmError>);

impl Pipeline {
    /// Runs JSON requests concurrently (bounded by the gateway's in-flight
    /// limit) and returns `(request_tag, result)` pairs in request order.
    pub(crate) async fn run_batches(
        &self,
        requests: Vec<PromptRequest>,
        schema: &JsonSchema,
        job: Option<&JobHandle>,
    ) -> Vec<BatchResult> {
        let futures = requests.into_iter().map(|req| async move {
            let out = self.gateway.complete_json(&req, schema).await;
            if let Some(job) = job {
                job.tick();
            }
            (req.request_tag, out)
        });
        stream::iter(futures).buffered(self.concurrency()).collect().await
    }
}

impl Pipeline {
    /// Builds a pipeline rooted at `data_dir`: the artifact cache lives in
    /// `data_dir/cache` and materialized reports in `data_dir/reports`.
    pub fn open(
        data_dir: &std::path::Path,
        gateway: Gateway,
        config: PipelineConfig,
        clock: Clock,
    ) -> Result<Self, PipelineError> {
        let cache = CacheStore::open(data_dir.join("cache"))?;
        Ok(Self::new(
            Arc::new(gateway),
            Arc::new(PromptLibrary::builtin()),
            Arc::new(cache),
            config,
            data_dir.join("reports"),
        )
        .with_clock(clock))
    }
}

/// What a capture session produced.
#[derive(Debug, Clone)]
pub struct CaptureOutcome {
    pub recommended: Vec<String>,
    pub themes: Vec<Theme>,
    pub report: crate::report::Report,
}

impl Pipeline {
    /// Exercises every stage once: source recommendation for `topic`, theme
    /// generation, and a full report job for the selected theme. Used to
    /// record provider fixtures.
    pub async fn capture_session(
        &self,
        corpus: &Corpus,
        topic: &str,
        catalog: &[String],
        theme_title: &str,
        description: Option<&str>,
    ) -> Result<CaptureOutcome, PipelineError> {
        let recommended = self.recommend_sources(topic, catalog).await?;
        let themes = self.generate_themes(corpus).await?;
        let theme = select_theme(&themes, theme_title, description);
        let job = JobHandle::new("capture", &corpus.dataset_id, theme.clone());
        let report = self.run_report_job(corpus, &theme, &job).await?;
        Ok(CaptureOutcome {
            recommended,
            themes,
            report,
        })
    }
}
