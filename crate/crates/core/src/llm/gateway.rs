//! Retries, concurrency limits, usage accounting, and JSON handling on top
//! of a [`ChatProvider`].

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::Semaphore;
use tracing::{debug, warn};

use super::fixtures::{FixtureStore, RecordingProvider, ReplayProvider};
use super::http::HttpProvider;
use super::schema::{strip_code_fences, JsonSchema};
use super::{ChatProvider, LlmError, LlmResponse, PromptRequest, ProviderConfig, ProviderError, ProviderMode};

/// Appended to the user text when a reply fails to parse or validate.
pub const CORRECTIVE_INSTRUCTION: &str = "Respond with ONLY valid JSON matching the required structure.";

const MAX_BACKOFF: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatewayOptions {
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub max_in_flight: usize,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        Self {
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            max_in_flight: 4,
        }
    }
}

impl From<&ProviderConfig> for GatewayOptions {
    fn from(cfg: &ProviderConfig) -> Self {
        Self {
            max_retries: cfg.max_retries,
            backoff_base: Duration::from_millis(cfg.backoff_base_ms),
            max_in_flight: cfg.max_in_flight.max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageUsage {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Token usage per stage (the request-tag prefix), in stage-name order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageReport {
    pub stages: BTreeMap<String, StageUsage>,
}

impl UsageReport {
    pub fn total(&self) -> StageUsage {
        self.stages.values().fold(StageUsage::default(), |acc, s| StageUsage {
            calls: acc.calls + s.calls,
            prompt_tokens: acc.prompt_tokens + s.prompt_tokens,
            completion_tokens: acc.completion_tokens + s.completion_tokens,
        })
    }

    pub fn record(&mut self, stage: &str, response: &LlmResponse) {
        let e = self.stages.entry(stage.to_string()).or_default();
        e.calls += 1;
        e.prompt_tokens += response.prompt_tokens;
        e.completion_tokens += response.completion_tokens;
    }
}

/// Outcome of [`Gateway::complete_json`].
#[derive(Debug, Clone, PartialEq)]
pub enum JsonReply {
    /// The model answered with a literal `null`.
    Empty,
    Value(Value),
}

pub struct Gateway {
    provider: Arc<dyn ChatProvider>,
    options: GatewayOptions,
    limiter: Semaphore,
    usage: Mutex<UsageReport>,
    attempts: AtomicU64,
}

impl Gateway {
    pub fn new(provider: Arc<dyn ChatProvider>, options: GatewayOptions) -> Self {
        Self {
            provider,
            limiter: Semaphore::new(options.max_in_flight.max(1)),
            options,
            usage: Mutex::new(UsageReport::default()),
            attempts: AtomicU64::new(0),
        }
    }

    /// Builds the provider stack for the configured mode.
    pub fn from_config(cfg: &ProviderConfig) -> Result<Self, LlmError> {
        let provider: Arc<dyn ChatProvider> = match cfg.mode {
            ProviderMode::Live => Arc::new(HttpProvider::new(&cfg.endpoint_url, &cfg.api_key_ref)?),
            ProviderMode::Record => Arc::new(RecordingProvider::new(
                HttpProvider::new(&cfg.endpoint_url, &cfg.api_key_ref)?,
                FixtureStore::create(&cfg.fixture_dir)?,
            )),
            ProviderMode::Replay => Arc::new(ReplayProvider::new(FixtureStore::open(&cfg.fixture_dir)?)),
        };
        Ok(Self::new(provider, cfg.into()))
    }

    pub fn options(&self) -> GatewayOptions {
        self.options
    }

    /// Number of provider attempts made so far (including retries).
    pub fn call_count(&self) -> u64 {
        self.attempts.load(Ordering::SeqCst)
    }

    pub fn usage(&self) -> UsageReport {
        self.usage.lock().expect("usage lock").clone()
    }

    pub async fn complete(&self, request: &PromptRequest) -> Result<LlmResponse, LlmError> {
        request.validate()?;
        let mut retries = 0u32;
        loop {
            let outcome = {
                let _permit = self.limiter.acquire().await.expect("semaphore open");
                self.attempts.fetch_add(1, Ordering::SeqCst);
                self.provider.chat(request).await
            };
            match outcome {
                Ok(mut resp) => {
                    resp.retry_count = retries;
                    self.usage
                        .lock()
                        .expect("usage lock")
                        .record(request.stage(), &resp);
                    return Ok(resp);
                }
                Err(ProviderError::Transient(msg)) if retries < self.options.max_retries => {
                    let delay = self.backoff(retries);
                    debug!(tag = %request.request_tag, %msg, ?delay, "transient failure, retrying");
                    tokio::time::sleep(delay).await;
                    retries += 1;
                }
                Err(ProviderError::Transient(message)) => {
                    return Err(LlmError::ProviderUnavailable {
                        tag: request.request_tag.clone(),
                        attempts: retries + 1,
                        message,
                    })
                }
                Err(ProviderError::Fatal(message)) => {
                    return Err(LlmError::ProviderUnavailable {
                        tag: request.request_tag.clone(),
                        attempts: retries + 1,
                        message,
                    })
                }
                Err(ProviderError::Auth(m)) => return Err(LlmError::AuthFailure(m)),
                Err(ProviderError::FixtureMiss { tag, hash }) => return Err(LlmError::FixtureMiss { tag, hash }),
            }
        }
    }

    /// Completes `request` and parses the reply as JSON matching `schema`.
    ///
    /// Replies that fail to parse or validate are retried up to
    /// `max_retries` times with [`CORRECTIVE_INSTRUCTION`] appended. A literal
    /// `null` reply yields [`JsonReply::Empty`] when the schema allows it.
    pub async fn complete_json(&self, request: &PromptRequest, schema: &JsonSchema) -> Result<JsonReply, LlmError> {
        let mut current = request.clone();
        let mut last_err = None;
        for attempt in 0..=self.options.max_retries {
            if attempt > 0 {
                current.user_text = format!("{}\n\n{CORRECTIVE_INSTRUCTION}", request.user_text);
                current.request_tag = format!("{}.fix{attempt}", request.request_tag);
            }
            let resp = self.complete(&current).await?;
            match parse_reply(&resp.text, schema) {
                Ok(reply) => return Ok(reply),
                Err(e) => {
                    warn!(tag = %current.request_tag, error = %e, "rejected model output");
                    last_err = Some(e);
                }
            }
        }
        Err(match last_err.expect("at least one attempt") {
            ReplyError::Parse(message) => LlmError::MalformedOutput {
                tag: request.request_tag.clone(),
                message,
            },
            ReplyError::Schema(message) => LlmError::SchemaViolation {
                tag: request.request_tag.clone(),
                message,
            },
        })
    }

    fn backoff(&self, retries: u32) -> Duration {
        let factor = 1u32.checked_shl(retries).unwrap_or(u32::MAX);
        self.options.backoff_base.saturating_mul(factor).min(MAX_BACKOFF)
    }
}

enum ReplyError {
    Parse(String),
    Schema(String),
}

impl std::fmt::Display for ReplyError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReplyError::Parse(m) => write!(f, "unparseable JSON: {m}"),
            ReplyError::Schema(m) => write!(f, "schema mismatch: {m}"),
        }
    }
}

fn parse_reply(text: &str, schema: &JsonSchema) -> Result<JsonReply, ReplyError> {
    let body = strip_code_fences(text);
    let value: Value = serde_json::from_str(body).map_err(|e| ReplyError::Parse(e.to_string()))?;
    schema.validate(&value).map_err(ReplyError::Schema)?;
    Ok(if value.is_null() {
        JsonReply::Empty
    } else {
        JsonReply::Value(value)
    })
}
