//! OpenAI-compatible chat-completions client.

use std::time::Instant;

use async_trait::async_trait;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

use super::{ChatProvider, LlmError, LlmResponse, PromptRequest, ProviderError};

pub struct HttpProvider {
    client: reqwest::Client,
    endpoint_url: String,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct ChatCompletion {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Usage,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpProvider {
    /// Reads the API key from the environment variable `api_key_ref`. A
    /// missing key is only an error for endpoints that demand one, so local
    /// OpenAI-compatible servers work without it.
    pub fn new(endpoint_url: impl Into<String>, api_key_ref: &str) -> Result<Self, LlmError> {
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| LlmError::Config(format!("http client: {e}")))?;
        Ok(Self {
            client,
            endpoint_url: endpoint_url.into(),
            api_key: std::env::var(api_key_ref).ok().filter(|k| !k.is_empty()),
        })
    }
}

#[async_trait]
impl ChatProvider for HttpProvider {
    async fn chat(&self, request: &PromptRequest) -> Result<LlmResponse, ProviderError> {
        let mut messages = Vec::with_capacity(2);
        if let Some(system) = &request.system_text {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": request.user_text}));
        let body = json!({
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });

        let mut http = self.client.post(&self.endpoint_url).json(&body);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let started = Instant::now();
        let resp = http
            .send()
            .await
            .map_err(|e| ProviderError::Transient(format!("request failed: {e}")))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| ProviderError::Transient(format!("reading body: {e}")))?;
        let latency = started.elapsed().as_millis() as u64;

        match status {
            s if s.is_success() => {}
            StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => {
                return Err(ProviderError::Auth(format!("{status}: {}", truncate(&text))))
            }
            StatusCode::TOO_MANY_REQUESTS | StatusCode::REQUEST_TIMEOUT => {
                return Err(ProviderError::Transient(format!("{status}")))
            }
            s if s.is_server_error() => return Err(ProviderError::Transient(format!("{status}"))),
            _ => return Err(ProviderError::Fatal(format!("{status}: {}", truncate(&text)))),
        }

        let parsed: ChatCompletion = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Fatal(format!("unexpected completion payload: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        Ok(LlmResponse {
            text: content,
            prompt_tokens: parsed.usage.prompt_tokens,
            completion_tokens: parsed.usage.completion_tokens,
            provider_latency_ms: latency,
            retry_count: 0,
        })
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
