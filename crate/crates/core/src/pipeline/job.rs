//! Report jobs: the three report stages run in sequence with observable
//! progress, per-stage caching, and on-disk materialization.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tokio::sync::watch;
use tracing::{info, warn};

use super::{Pipeline, PipelineError};
use crate::artifact::{MappingDoc, Stage, SubtopicsDoc, ThemesDoc};
use crate::cache::{theme_digest, CacheKey};
use crate::corpus::Corpus;
use crate::model::Theme;
use crate::report::{build_report, to_jsonl, to_markdown, Report, ReportMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobPhase {
    Queued,
    Extracting,
    Coding,
    Mapping,
    Done,
    Failed,
}

impl JobPhase {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobPhase::Done | JobPhase::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobState {
    pub job_id: String,
    pub dataset_id: String,
    pub theme: Theme,
    pub phase: JobPhase,
    pub processed_chunks: u64,
    pub total_chunks: u64,
    #[serde(default)]
    pub report_id: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
    /// Every phase the job has entered, in order.
    pub history: Vec<JobPhase>,
}

/// Shared, atomically updated job state. Readers take snapshots or wait for
/// changes; only forward phase transitions are applied.
#[derive(Debug, Clone)]
pub struct JobHandle {
    tx: Arc<watch::Sender<JobState>>,
}

impl JobHandle {
    pub fn new(job_id: impl Into<String>, dataset_id: impl Into<String>, theme: Theme) -> Self {
        let state = JobState {
            job_id: job_id.into(),
            dataset_id: dataset_id.into(),
            theme,
            phase: JobPhase::Queued,
            processed_chunks: 0,
            total_chunks: 0,
            report_id: None,
            error: None,
            history: vec![JobPhase::Queued],
        };
        Self {
            tx: Arc::new(watch::Sender::new(state)),
        }
    }

    pub fn job_id(&self) -> String {
        self.tx.borrow().job_id.clone()
    }

    pub fn snapshot(&self) -> JobState {
        self.tx.borrow().clone()
    }

    /// Moves to `phase` if it lies after the current one; otherwise a no-op.
    pub fn advance(&self, phase: JobPhase) {
        self.tx.send_if_modified(|s| {
            if s.phase.is_terminal() || phase <= s.phase {
                return false;
            }
            s.phase = phase;
            s.history.push(phase);
            true
        });
    }

    pub fn add_total(&self, chunks: u64) {
        self.tx.send_modify(|s| s.total_chunks += chunks);
    }

    pub fn tick(&self) {
        self.tx.send_modify(|s| s.processed_chunks = (s.processed_chunks + 1).min(s.total_chunks.max(1)));
    }

    pub fn finish(&self, report_id: &str) {
        self.tx.send_modify(|s| {
            s.report_id = Some(report_id.to_string());
            s.processed_chunks = s.total_chunks;
        });
        self.advance(JobPhase::Done);
    }

    pub fn fail(&self, error: impl Into<String>) {
        let error = error.into();
        self.tx.send_if_modified(|s| {
            if s.phase.is_terminal() {
                return false;
            }
            s.error = Some(error);
            s.phase = JobPhase::Failed;
            s.history.push(JobPhase::Failed);
            true
        });
    }

    /// Waits until the job reaches `done` or `failed`.
    pub async fn wait(&self) -> JobState {
        let mut rx = self.tx.subscribe();
        let state = rx
            .wait_for(|s| s.phase.is_terminal())
            .await
            .map(|s| s.clone())
            .unwrap_or_else(|_| self.snapshot());
        state
    }
}

impl Pipeline {
    /// Report id for a (dataset, theme) under the current prompt version and
    /// model: stable across runs so re-requests land on the same directory.
    pub fn report_id(&self, corpus: &Corpus, theme: &Theme) -> String {
        format!("rpt-{}", &self.key(corpus, Stage::Report, Some(theme)).digest()[..16])
    }

    /// The completed report for this (dataset, theme), if cached.
    pub fn cached_report(&self, corpus: &Corpus, theme: &Theme) -> Option<Report> {
        self.cached(&self.key(corpus, Stage::Report, Some(theme)))
            .and_then(|a| a.decode::<Report>().ok())
    }

    /// Runs extraction, coding and mapping for `theme`, updating `job` as it
    /// goes, and materializes the report under the reports root. Stage
    /// failures are recorded on the job as well as returned.
    pub async fn run_report_job(
        &self,
        corpus: &Corpus,
        theme: &Theme,
        job: &JobHandle,
    ) -> Result<Report, PipelineError> {
        match self.produce_report(corpus, theme, job).await {
            Ok(report) => {
                let dir = self.reports_root.join(&report.report_id);
                if let Err(e) = self.materialize_report(corpus, theme, &report, &dir) {
                    job.fail(e.to_string());
                    return Err(e);
                }
                job.finish(&report.report_id);
                info!(report_id = %report.report_id, "report job done");
                Ok(report)
            }
            Err(e) => {
                warn!(error = %e, "report job failed");
                job.fail(e.to_string());
                Err(e)
            }
        }
    }

    async fn produce_report(&self, corpus: &Corpus, theme: &Theme, job: &JobHandle) -> Result<Report, PipelineError> {
        if let Some(report) = self.cached_report(corpus, theme) {
            return Ok(report);
        }

        job.advance(JobPhase::Extracting);
        let quotes = self.extract_quotes(corpus, theme, Some(job)).await?;

        job.advance(JobPhase::Coding);
        let subtopics_key = self.key(corpus, Stage::Subtopics, Some(theme));
        let subtopics = match self.cached(&subtopics_key).and_then(|a| a.decode::<SubtopicsDoc>().ok()) {
            Some(doc) => doc,
            None => {
                let out = self.identify_subtopics(&quotes.quotes, &corpus.source_label, Some(job)).await?;
                let doc = SubtopicsDoc {
                    code_count: self.config.code_count,
                    subtopics: out.subtopics,
                    warnings: out.warnings,
                };
                self.store(corpus, Stage::Subtopics, theme, &doc)?;
                doc
            }
        };

        job.advance(JobPhase::Mapping);
        let mapping_key = self.key(corpus, Stage::Mapping, Some(theme));
        let mapping = match self.cached(&mapping_key).and_then(|a| a.decode::<MappingDoc>().ok()) {
            Some(doc) => doc,
            None => {
                let out = self
                    .map_quotes(&quotes.quotes, &subtopics.subtopics, &corpus.source_label, Some(job))
                    .await?;
                let doc = MappingDoc {
                    categorized: out.categorized,
                    warnings: out.warnings,
                };
                self.store(corpus, Stage::Mapping, theme, &doc)?;
                doc
            }
        };

        let mut warnings = quotes.warnings;
        warnings.extend(subtopics.warnings.iter().cloned());
        warnings.extend(mapping.warnings.iter().cloned());
        let meta = ReportMeta {
            report_id: self.report_id(corpus, theme),
            dataset_id: corpus.dataset_id.clone(),
            source_label: corpus.source_label.clone(),
            theme: theme.clone(),
            prompt_version: self.report_version(),
            model_id: self.config.model_id.clone(),
            created_at: self.clock.now_for(corpus),
            warnings,
        };
        let report = build_report(&quotes.quotes, &subtopics.subtopics, &mapping.categorized, meta)?;
        self.store(corpus, Stage::Report, theme, &report)?;
        Ok(report)
    }

    fn store(&self, corpus: &Corpus, stage: Stage, theme: &Theme, doc: &impl Serialize) -> Result<(), PipelineError> {
        let key = self.key(corpus, stage, Some(theme));
        self.cache.put(&key, &self.artifact(corpus, stage, doc))?;
        Ok(())
    }

    /// Writes the per-stage JSON artifacts plus the JSONL and Markdown
    /// exports of `report` into `dir`.
    pub fn materialize_report(
        &self,
        corpus: &Corpus,
        theme: &Theme,
        report: &Report,
        dir: &Path,
    ) -> Result<(), PipelineError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| PipelineError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;

        let themes = match self.cached(&self.key(corpus, Stage::Themes, None)) {
            Some(mut artifact) => {
                let mut doc: ThemesDoc = artifact.decode().map_err(PipelineError::Artifact)?;
                doc.selected = Some(theme.clone());
                artifact.payload = serde_json::to_value(&doc).expect("themes doc serializes");
                artifact
            }
            None => self.artifact(
                corpus,
                Stage::Themes,
                &ThemesDoc {
                    suggested: Vec::new(),
                    selected: Some(theme.clone()),
                },
            ),
        };
        let mut files: Vec<(String, String)> = vec![(Stage::Themes.file_name(), themes.to_pretty_json())];
        for stage in [Stage::Quotes, Stage::Subtopics, Stage::Mapping] {
            let artifact = self
                .cached(&self.key(corpus, stage, Some(theme)))
                .ok_or_else(|| PipelineError::Artifact(format!("{stage} artifact missing from cache")))?;
            files.push((stage.file_name(), artifact.to_pretty_json()));
        }
        let mut report_json = serde_json::to_string_pretty(report).expect("report serializes");
        report_json.push('\n');
        files.push(("report.json".into(), report_json));
        files.push(("report.jsonl".into(), to_jsonl(report)));
        files.push(("report.md".into(), to_markdown(report)));

        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(io(&path))?;
        }
        Ok(())
    }

    /// Loads a materialized report by id from the reports root.
    pub fn load_report(&self, report_id: &str) -> Result<Option<Report>, PipelineError> {
        if !is_safe_id(report_id) {
            return Ok(None);
        }
        let path = self.report_dir(report_id).join("report.json");
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| PipelineError::Artifact(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(PipelineError::Io {
                path: path.display().to_string(),
                source,
            }),
        }
    }

    pub fn report_dir(&self, report_id: &str) -> PathBuf {
        self.reports_root.join(report_id)
    }

    /// Cache key under which the finished report for (corpus, theme) lives.
    pub fn report_key(&self, corpus: &Corpus, theme: &Theme) -> CacheKey {
        self.key(corpus, Stage::Report, Some(theme))
    }
}

fn is_safe_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Outcome of submitting a report request.
#[derive(Debug, Clone)]
pub enum Submission {
    /// A new job was started.
    Started(JobHandle),
    /// A job for the same dataset and theme is already running.
    Attached(JobHandle),
    /// The report was already cached; the job is complete.
    Cached(JobHandle),
}

impl Submission {
    pub fn handle(&self) -> &JobHandle {
        match self {
            Submission::Started(h) | Submission::Attached(h) | Submission::Cached(h) => h,
        }
    }
}

#[derive(Default)]
struct Registry {
    jobs: HashMap<String, JobHandle>,
    running: HashMap<(String, String), String>,
}

/// Tracks report jobs and enforces one running job per (dataset, theme).
pub struct JobManager {
    pipeline: Arc<Pipeline>,
    registry: Arc<Mutex<Registry>>,
}

impl JobManager {
    pub fn new(pipeline: Arc<Pipeline>) -> Self {
        Self {
            pipeline,
            registry: Arc::default(),
        }
    }

    pub fn pipeline(&self) -> &Arc<Pipeline> {
        &self.pipeline
    }

    pub fn get(&self, job_id: &str) -> Option<JobState> {
        self.registry.lock().expect("job registry").jobs.get(job_id).map(JobHandle::snapshot)
    }

    pub fn handle(&self, job_id: &str) -> Option<JobHandle> {
        self.registry.lock().expect("job registry").jobs.get(job_id).cloned()
    }

    /// Submits a report job. Must be called inside a tokio runtime.
    pub fn submit(&self, corpus: Arc<Corpus>, theme: Theme) -> Submission {
        let run_key = (corpus.dataset_id.clone(), theme_digest(Some(&theme)));
        let mut reg = self.registry.lock().expect("job registry");
        if let Some(handle) = reg.running.get(&run_key).and_then(|id| reg.jobs.get(id)) {
            return Submission::Attached(handle.clone());
        }

        let job_id = format!("job-{}", uuid::Uuid::new_v4().simple());
        let handle = JobHandle::new(&job_id, &corpus.dataset_id, theme.clone());
        reg.jobs.insert(job_id.clone(), handle.clone());

        if let Some(report) = self.pipeline.cached_report(&corpus, &theme) {
            let dir = self.pipeline.report_dir(&report.report_id);
            if !dir.join("report.json").exists() {
                if let Err(e) = self.pipeline.materialize_report(&corpus, &theme, &report, &dir) {
                    handle.fail(e.to_string());
                    return Submission::Started(handle);
                }
            }
            handle.finish(&report.report_id);
            return Submission::Cached(handle);
        }

        reg.running.insert(run_key.clone(), job_id);
        drop(reg);
        let pipeline = Arc::clone(&self.pipeline);
        let registry = Arc::clone(&self.registry);
        let task_handle = handle.clone();
        tokio::spawn(async move {
            let _ = pipeline.run_report_job(&corpus, &theme, &task_handle).await;
            registry.lock().expect("job registry").running.remove(&run_key);
        });
        Submission::Started(handle)
    }
}
