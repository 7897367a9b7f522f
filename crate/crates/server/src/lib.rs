//! REST service over the analysis pipeline.
//!
//! Jobs are asynchronous: `POST /v1/reports` returns a job id to poll at
//! `GET /v1/jobs/{id}`; finished reports are served as JSON and as JSONL or
//! Markdown downloads. Every error body is `{code, message}`.

mod datasets;
mod error;
pub mod schemas;

use std::io::Cursor;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pulse_core::corpus::{read_corpus, Corpus};
use pulse_core::llm::{Gateway, ProviderConfig};
use pulse_core::model::Theme;
use pulse_core::pipeline::{select_theme, Clock, JobManager, Pipeline, PipelineConfig, Submission};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tracing::info;

pub use datasets::Datasets;
pub use error::{ApiError, ErrorCode};

/// Largest accepted upload.
const MAX_UPLOAD_BYTES: usize = 256 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    pub data_dir: PathBuf,
    pub provider: ProviderConfig,
    pub pipeline: PipelineConfig,
}

#[derive(Clone)]
pub struct AppState {
    pub pipeline: Arc<Pipeline>,
    pub jobs: Arc<JobManager>,
    pub datasets: Arc<Datasets>,
}

impl AppState {
    /// Wraps an existing pipeline; datasets persist under
    /// `data_dir/datasets`.
    pub fn new(pipeline: Pipeline, data_dir: &Path) -> Result<Self, ApiError> {
        let datasets = Datasets::open(data_dir.join("datasets"))?;
        let pipeline = Arc::new(pipeline);
        Ok(Self {
            jobs: Arc::new(JobManager::new(pipeline.clone())),
            pipeline,
            datasets: Arc::new(datasets),
        })
    }

    pub fn from_config(cfg: &ServerConfig) -> Result<Self, ApiError> {
        let gateway = Gateway::from_config(&cfg.provider).map_err(|e| ApiError::internal(e.to_string()))?;
        let pipeline = Pipeline::open(
            &cfg.data_dir,
            gateway,
            cfg.pipeline.clone(),
            Clock::for_mode(cfg.provider.mode),
        )?;
        Self::new(pipeline, &cfg.data_dir)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/recommendations", post(recommendations))
        .route("/v1/datasets", get(list_datasets).post(upload_dataset))
        .route("/v1/datasets/{id}/themes", post(themes))
        .route("/v1/reports", post(submit_report))
        .route("/v1/reports/{id}", get(get_report))
        .route("/v1/reports/{id}/download", get(download_report))
        .route("/v1/jobs/{id}", get(get_job))
        .route("/v1/schemas/{name}", get(get_schema))
        .fallback(|| async { ApiError::new(ErrorCode::NotFound, "no such endpoint") })
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

/// Binds `cfg.addr` and serves until the process is stopped.
pub async fn serve(cfg: ServerConfig) -> std::io::Result<()> {
    let state = AppState::from_config(&cfg).map_err(|e| std::io::Error::other(e.message))?;
    let listener = tokio::net::TcpListener::bind(cfg.addr).await?;
    info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).await
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("invalid JSON body: {e}")))
}

#[derive(Deserialize)]
struct RecommendationRequest {
    topic: String,
}

#[derive(Serialize)]
struct RecommendedSource {
    label: String,
    thread_count: u64,
}

async fn recommendations(State(state): State<AppState>, body: Bytes) -> Result<Json<serde_json::Value>, ApiError> {
    let req: RecommendationRequest = parse_json(&body)?;
    let topic = req.topic.trim();
    if topic.is_empty() {
        return Err(ApiError::invalid("topic must not be empty"));
    }
    let corpora = state.datasets.all();
    let mut counts: std::collections::BTreeMap<String, u64> = std::collections::BTreeMap::new();
    for c in &corpora {
        *counts.entry(c.source_label.clone()).or_default() += c.len() as u64;
    }
    if counts.is_empty() {
        return Ok(Json(json!({ "sources": [] })));
    }
    let catalog: Vec<String> = counts.keys().cloned().collect();
    let picked = state.pipeline.recommend_sources(topic, &catalog).await?;
    let sources: Vec<RecommendedSource> = picked
        .into_iter()
        .map(|label| RecommendedSource {
            thread_count: counts[&label],
            label,
        })
        .collect();
    Ok(Json(json!({ "sources": sources })))
}

#[derive(Serialize)]
struct DatasetView {
    dataset_id: String,
    source_label: String,
    thread_count: u64,
    ingested_at: String,
}

impl From<&Corpus> for DatasetView {
    fn from(c: &Corpus) -> Self {
        Self {
            dataset_id: c.dataset_id.clone(),
            source_label: c.source_label.clone(),
            thread_count: c.len() as u64,
            ingested_at: c.ingested_at.to_rfc3339(),
        }
    }
}

async fn list_datasets(State(state): State<AppState>) -> Json<serde_json::Value> {
    let datasets: Vec<DatasetView> = state.datasets.all().iter().map(|c| DatasetView::from(c.as_ref())).collect();
    Json(json!({ "datasets": datasets }))
}

async fn upload_dataset(State(state): State<AppState>, mut multipart: Multipart) -> Result<Response, ApiError> {
    let mut upload = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::invalid(format!("malformed multipart body: {e}")))?
    {
        if field.name() == Some("file") {
            let bytes = field
                .bytes()
                .await
                .map_err(|e| ApiError::invalid(format!("reading upload: {e}")))?;
            upload = Some(bytes);
            break;
        }
    }
    let bytes = upload.ok_or_else(|| ApiError::invalid("multipart field \"file\" is required"))?;
    let corpus = read_corpus(Cursor::new(bytes))?;
    let corpus = state.datasets.register(corpus)?;
    info!(dataset_id = %corpus.dataset_id, threads = corpus.len(), "dataset registered");
    Ok((StatusCode::CREATED, Json(DatasetView::from(corpus.as_ref()))).into_response())
}

#[derive(Deserialize, Default)]
struct ThemeRequest {
    #[serde(default)]
    custom_theme: Option<String>,
    #[serde(default)]
    description: Option<String>,
}

async fn themes(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ApiError> {
    let corpus = state.datasets.get(&id).ok_or_else(|| ApiError::not_found("dataset", &id))?;
    let req: ThemeRequest = if body.iter().all(u8::is_ascii_whitespace) {
        ThemeRequest::default()
    } else {
        parse_json(&body)?
    };
    if let Some(title) = req.custom_theme {
        let title = title.trim();
        if title.is_empty() {
            return Err(ApiError::invalid("custom_theme must not be empty"));
        }
        let theme = Theme::user_defined(title, req.description.unwrap_or_default().trim());
        state.datasets.add_custom_theme(&id, theme.clone());
        return Ok(Json(json!({ "dataset_id": id, "themes": [theme] })));
    }
    let themes = state.pipeline.generate_themes(&corpus).await?;
    Ok(Json(json!({ "dataset_id": id, "themes": themes })))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ThemeInput {
    Title(String),
    Full {
        title: String,
        #[serde(default)]
        description: Option<String>,
    },
}

#[derive(Deserialize)]
struct ReportRequest {
    dataset_id: String,
    theme: ThemeInput,
}

async fn submit_report(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: ReportRequest = parse_json(&body)?;
    let corpus = state
        .datasets
        .get(&req.dataset_id)
        .ok_or_else(|| ApiError::not_found("dataset", &req.dataset_id))?;
    let (title, description) = match req.theme {
        ThemeInput::Title(t) => (t, None),
        ThemeInput::Full { title, description } => (title, description),
    };
    if title.trim().is_empty() {
        return Err(ApiError::invalid("theme title must not be empty"));
    }
    let mut known = state.pipeline.cached_themes(&corpus).unwrap_or_default();
    known.extend(state.datasets.custom_themes(&corpus.dataset_id));
    let theme = select_theme(&known, &title, description.as_deref());

    match state.jobs.submit(corpus, theme) {
        Submission::Started(h) => {
            let job_id = h.job_id();
            info!(%job_id, "report job started");
            Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id, "status": "queued" }))).into_response())
        }
        Submission::Cached(h) => {
            let s = h.snapshot();
            Ok((
                StatusCode::OK,
                Json(json!({ "job_id": s.job_id, "status": "done", "report_id": s.report_id })),
            )
                .into_response())
        }
        Submission::Attached(h) => {
            let mut err = ApiError::new(
                ErrorCode::JobConflict,
                "a job for this dataset and theme is already running",
            );
            err.job_id = Some(h.job_id());
            Err(err)
        }
    }
}

async fn get_job(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let job = state.jobs.get(&id).ok_or_else(|| ApiError::not_found("job", &id))?;
    Ok(Json(job).into_response())
}

async fn get_report(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let report = state
        .pipeline
        .load_report(&id)?
        .ok_or_else(|| ApiError::not_found("report", &id))?;
    Ok(Json(report).into_response())
}

#[derive(Deserialize)]
struct DownloadQuery {
    #[serde(default)]
    format: Option<String>,
}

async fn download_report(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<DownloadQuery>,
) -> Result<Response, ApiError> {
    let (file, ext, content_type) = match q.format.as_deref().unwrap_or("jsonl") {
        "jsonl" => ("report.jsonl", "jsonl", "application/x-ndjson"),
        "markdown" | "md" => ("report.md", "md", "text/markdown; charset=utf-8"),
        other => return Err(ApiError::invalid(format!("unsupported format {other:?}; use jsonl or markdown"))),
    };
    if state.pipeline.load_report(&id)?.is_none() {
        return Err(ApiError::not_found("report", &id));
    }
    let path = state.pipeline.report_dir(&id).join(file);
    let body = tokio::fs::read(&path)
        .await
        .map_err(|e| ApiError::internal(format!("reading {}: {e}", path.display())))?;
    Ok((
        [
            (header::CONTENT_TYPE, content_type.to_string()),
            (
                header::CONTENT_DISPOSITION,
                format!("attachment; filename=\"report-{id}.{ext}\""),
            ),
        ],
        body,
    )
        .into_response())
}

async fn get_schema(UrlPath(name): UrlPath<String>) -> Result<Response, ApiError> {
    let body = schemas::schema(&name).ok_or_else(|| ApiError::not_found("schema", &name))?;
    Ok(([(header::CONTENT_TYPE, "application/schema+json")], body).into_response())
}
