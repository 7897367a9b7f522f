//! Provider-agnostic chat-completion access.
//!
//! A [`Gateway`] wraps one [`ChatProvider`] and adds retries with exponential
//! backoff, a bound on in-flight requests, per-stage usage accounting, and
//! strict JSON handling. Providers exist for live HTTP calls, for recording
//! live calls into a fixture directory, and for replaying recorded fixtures
//! without network access.

pub mod cost;
pub mod fixtures;
pub mod gateway;
pub mod http;
pub mod schema;
#[cfg(any(test, feature = "test-support"))]
pub mod scripted;

use std::path::PathBuf;
use std::str::FromStr;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cost::{estimate_cost, usage_from_records, CostEstimate, PriceTable, StageCost};
pub use fixtures::{FixtureRecord, FixtureStore, RecordingProvider, ReplayProvider};
pub use gateway::{Gateway, GatewayOptions, JsonReply, StageUsage, UsageReport, CORRECTIVE_INSTRUCTION};
pub use http::HttpProvider;
pub use schema::{JsonSchema, Shape};

use crate::text::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub model_id: String,
    pub system_text: Option<String>,
    pub user_text: String,
    pub temperature: f32,
    pub max_output_tokens: u32,
    /// Stage name plus batch index, e.g. `quotes.0003`. Used for usage
    /// accounting and error messages; not part of the request hash.
    pub request_tag: String,
}

impl PromptRequest {
    pub fn new(model_id: impl Into<String>, request_tag: impl Into<String>, user_text: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            system_text: None,
            user_text: user_text.into(),
            temperature: 0.0,
            max_output_tokens: 4096,
            request_tag: request_tag.into(),
        }
    }

    pub fn with_system(mut self, system_text: impl Into<String>) -> Self {
        self.system_text = Some(system_text.into());
        self
    }

    /// Content hash over model, system text, user text, and temperature.
    pub fn request_hash(&self) -> String {
        #[derive(Serialize)]
        struct Keyed<'a> {
            model_id: &'a str,
            system_text: Option<&'a str>,
            user_text: &'a str,
            temperature: String,
        }
        let keyed = Keyed {
            model_id: &self.model_id,
            system_text: self.system_text.as_deref(),
            user_text: &self.user_text,
            temperature: format!("{:.4}", self.temperature),
        };
        sha256_hex(serde_json::to_vec(&keyed).expect("request serializes"))
    }

    /// Stage component of the tag (text before the first `.`).
    pub fn stage(&self) -> &str {
        self.request_tag.split('.').next().unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.user_text.is_empty() {
            return Err(LlmError::InvalidRequest(format!("{}: empty user_text", self.request_tag)));
        }
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "{}: temperature {} outside [0, 1]",
                self.request_tag, self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::InvalidRequest(format!("{}: max_output_tokens is 0", self.request_tag)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub provider_latency_ms: u64,
    /// Transient failures retried before this response arrived.
    #[serde(skip)]
    pub retry_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    Live,
    Record,
    Replay,
}

impl FromStr for ProviderMode {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(Self::Live),
            "record" => Ok(Self::Record),
            "replay" => Ok(Self::Replay),
            other => Err(LlmError::Config(format!("unknown provider mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_ref: String,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub mode: ProviderMode,
    pub fixture_dir: PathBuf,
    pub max_in_flight: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            api_key_ref: "OPENAI_API_KEY".into(),
            max_retries: 3,
            backoff_base_ms: 500,
            mode: ProviderMode::Replay,
            fixture_dir: PathBuf::from("fixtures/llm"),
            max_in_flight: 4,
        }
    }
}

/// Failure reported by a single provider attempt.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProviderError {
    /// Worth retrying: rate limits, 5xx responses, connection failures.
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("no fixture for request {tag} (hash {hash})")]
    FixtureMiss { tag: String, hash: String },
    #[error("provider error: {0}")]
    Fatal(String),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LlmError {
    #[error("provider unavailable for {tag} after {attempts} attempts: {message}")]
    ProviderUnavailable { tag: String, attempts: u32, message: String },
    #[error("fixture miss for request {tag} (hash {hash})")]
    FixtureMiss { tag: String, hash: String },
    #[error("authentication failure: {0}")]
    AuthFailure(String),
    #[error("malformed output for {tag}: {message}")]
    MalformedOutput { tag: String, message: String },
    #[error("schema violation for {tag}: {message}")]
    SchemaViolation { tag: String, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl LlmError {
    /// True for output-quality failures a stage may degrade around.
    pub fn is_output_error(&self) -> bool {
        matches!(self, Self::MalformedOutput { .. } | Self::SchemaViolation { .. })
    }
}

#[async_trait]
pub trait ChatProvider: Send + Sync {
    async fn chat(&self, request: &PromptRequest) -> Result<LlmResponse, ProviderError>;
}
