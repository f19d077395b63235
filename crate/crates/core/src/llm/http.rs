use std::thread;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};
use tracing::warn;

use super::{CallKey, ChatRequest, Completion, Provider, ProviderConfig, ProviderError, ProviderKind};

const MAX_BACKOFF: Duration = Duration::from_secs(30);

/// Live provider speaking either wire format.
pub struct HttpProvider {
    config: ProviderConfig,
    api_key: String,
    client: Client,
}

enum Failure {
    Retryable(String),
    Fatal(ProviderError),
}

impl HttpProvider {
    pub fn from_env(config: ProviderConfig) -> Result<Self, ProviderError> {
        let var = config.api_key_env.clone().unwrap_or_default();
        let api_key = std::env::var(&var).map_err(|_| ProviderError::MissingKey(var))?;
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: ProviderConfig, api_key: String) -> Result<Self, ProviderError> {
        config.validate()?;
        if config.kind == ProviderKind::Replay {
            return Err(ProviderError::Config("replay is not a live provider".into()));
        }
        let client = Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_secs.max(1)))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            client,
        })
    }

    fn endpoint(&self) -> &str {
        self.config
            .endpoint
            .as_deref()
            .expect("validated")
            .trim_end_matches('/')
    }

    fn send_once(&self, request: &ChatRequest) -> Result<Completion, Failure> {
        let started = Instant::now();
        let builder = match self.config.kind {
            ProviderKind::OpenaiCompatible => self
                .client
                .post(format!("{}/chat/completions", self.endpoint()))
                .bearer_auth(&self.api_key)
                .json(&json!({
                    "model": self.config.model,
                    "temperature": self.config.temperature,
                    "messages": [
                        {"role": "system", "content": request.system},
                        {"role": "user", "content": request.user},
                    ],
                })),
            ProviderKind::GeminiCompatible => self
                .client
                .post(format!(
                    "{}/models/{}:generateContent",
                    self.endpoint(),
                    self.config.model
                ))
                .header("x-goog-api-key", &self.api_key)
                .json(&json!({
                    "systemInstruction": {"parts": [{"text": request.system}]},
                    "contents": [{"role": "user", "parts": [{"text": request.user}]}],
                    "generationConfig": {"temperature": self.config.temperature},
                })),
            ProviderKind::Replay => unreachable!("rejected at construction"),
        };
        let response = builder.send().map_err(|e| {
            if e.is_timeout() || e.is_connect() || e.is_request() {
                Failure::Retryable(e.to_string())
            } else {
                Failure::Fatal(ProviderError::Malformed(e.to_string()))
            }
        })?;
        let status = response.status();
        let body = response
            .text()
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(Failure::Fatal(ProviderError::Auth {
                status: status.as_u16(),
            }));
        }
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(Failure::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(ProviderError::Http {
                status: status.as_u16(),
                body,
            }));
        }
        let value: Value = serde_json::from_str(&body)
            .map_err(|e| Failure::Fatal(ProviderError::Malformed(e.to_string())))?;
        let mut completion = match self.config.kind {
            ProviderKind::OpenaiCompatible => parse_openai(&value),
            _ => parse_gemini(&value),
        }
        .map_err(Failure::Fatal)?;
        completion.latency_ms = started.elapsed().as_millis() as u64;
        Ok(completion)
    }
}

fn parse_openai(v: &Value) -> Result<Completion, ProviderError> {
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ProviderError::Malformed("missing choices[0].message.content".into()))?;
    Ok(Completion {
        text: text.to_string(),
        latency_ms: 0,
        prompt_tokens: v.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
        completion_tokens: v.pointer("/usage/completion_tokens").and_then(Value::as_u64),
        transport_retries: 0,
    })
}

fn parse_gemini(v: &Value) -> Result<Completion, ProviderError> {
    let parts = v
        .pointer("/candidates/0/content/parts")
        .and_then(Value::as_array)
        .ok_or_else(|| ProviderError::Malformed("missing candidates[0].content.parts".into()))?;
    let text: String = parts
        .iter()
        .filter_map(|p| p.get("text").and_then(Value::as_str))
        .collect();
    Ok(Completion {
        text,
        latency_ms: 0,
        prompt_tokens: v.pointer("/usageMetadata/promptTokenCount").and_then(Value::as_u64),
        completion_tokens: v
            .pointer("/usageMetadata/candidatesTokenCount")
            .and_then(Value::as_u64),
        transport_retries: 0,
    })
}

impl Provider for HttpProvider {
    fn kind(&self) -> ProviderKind {
        self.config.kind
    }

    fn model(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, key: &CallKey, request: &ChatRequest) -> Result<Completion, ProviderError> {
        let max = self.config.max_retries_transport;
        let mut backoff = Duration::from_millis(self.config.retry_backoff_ms);
        let mut retries = 0;
        loop {
            match self.send_once(request) {
                Ok(mut c) => {
                    c.transport_retries = retries;
                    return Ok(c);
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(reason)) if retries < max => {
                    warn!(%key, %reason, retry = retries + 1, "transient provider failure");
                    thread::sleep(backoff);
                    backoff = (backoff * 2).min(MAX_BACKOFF);
                    retries += 1;
                }
                Err(Failure::Retryable(last)) => {
                    return Err(ProviderError::Exhausted {
                        attempts: retries + 1,
                        last,
                    })
                }
            }
        }
    }
}
