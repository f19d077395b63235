//! Chat-completion providers behind one interface.
//!
//! Two live wire formats (OpenAI-style chat completions and Gemini-style
//! `generateContent`) plus a replay provider that serves recorded responses
//! keyed by pipeline position, and a recorder that writes such fixtures.

mod extract;
mod http;
mod replay;
mod transcript;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use extract::{extract_code, EmptyCode};
pub use http::HttpProvider;
pub use replay::{fixture_file, read_fixture, FixtureRecord, RecordingProvider, ReplayProvider, FIXTURE_FILE};
pub use transcript::{read_transcript, Transcript, TranscriptRecord};
pub(crate) use transcript::terminate_torn_line;

use crate::prompt::TemplateId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    OpenaiCompatible,
    GeminiCompatible,
    Replay,
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::OpenaiCompatible => "openai-compatible",
            ProviderKind::GeminiCompatible => "gemini-compatible",
            ProviderKind::Replay => "replay",
        }
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Provider settings as persisted in the session. API keys are never
/// stored, only the name of the environment variable holding one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub request_timeout_secs: u64,
    pub max_retries_transport: u32,
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
}

fn default_backoff() -> u64 {
    500
}

impl ProviderConfig {
    fn live(kind: ProviderKind, model: &str, endpoint: &str, key_env: &str) -> Self {
        Self {
            kind,
            model: model.into(),
            endpoint: Some(endpoint.into()),
            api_key_env: Some(key_env.into()),
            temperature: 0.0,
            request_timeout_secs: 120,
            max_retries_transport: 3,
            retry_backoff_ms: default_backoff(),
            fixture: None,
        }
    }

    pub fn openai(model: Option<&str>) -> Self {
        Self::live(
            ProviderKind::OpenaiCompatible,
            model.unwrap_or("gpt-4o-mini"),
            "https://api.openai.com/v1",
            "OPENAI_API_KEY",
        )
    }

    pub fn gemini(model: Option<&str>) -> Self {
        Self::live(
            ProviderKind::GeminiCompatible,
            model.unwrap_or("gemini-2.5-flash"),
            "https://generativelanguage.googleapis.com/v1beta",
            "GEMINI_API_KEY",
        )
    }

    pub fn replay(fixture: impl Into<PathBuf>) -> Self {
        Self {
            kind: ProviderKind::Replay,
            model: "replay".into(),
            endpoint: None,
            api_key_env: None,
            temperature: 0.0,
            request_timeout_secs: 0,
            max_retries_transport: 0,
            retry_backoff_ms: 0,
            fixture: Some(fixture.into()),
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ProviderError::Config(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        match self.kind {
            ProviderKind::Replay if self.fixture.is_none() => {
                Err(ProviderError::Config("replay provider needs a fixture path".into()))
            }
            ProviderKind::Replay => Ok(()),
            _ if self.endpoint.is_none() || self.api_key_env.is_none() => Err(ProviderError::Config(
                "live providers need an endpoint and an API key variable".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Pipeline position of a provider call; the replay lookup key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallKey {
    pub phase: String,
    pub artifact: String,
    pub round: u32,
    pub attempt: u32,
    pub template: TemplateId,
}

impl fmt::Display for CallKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "phase={} artifact={} round={} attempt={} template={}",
            self.phase, self.artifact, self.round, self.attempt, self.template
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub latency_ms: u64,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub transport_retries: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("environment variable {0} is not set")]
    MissingKey(String),
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("gave up after {attempts} transport attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("replay miss: no fixture record for {0}")]
    ReplayMiss(CallKey),
    #[error("fixture {path}:{line}: {message}")]
    Fixture {
        path: String,
        line: usize,
        message: String,
    },
    #[error("fixture I/O: {0}")]
    Io(#[from] std::io::Error),
}

pub trait Provider: Send + Sync {
    fn kind(&self) -> ProviderKind;
    fn model(&self) -> &str;
    fn complete(&self, key: &CallKey, request: &ChatRequest) -> Result<Completion, ProviderError>;
}

impl<P: Provider + ?Sized> Provider for Arc<P> {
    fn kind(&self) -> ProviderKind {
        (**self).kind()
    }
    fn model(&self) -> &str {
        (**self).model()
    }
    fn complete(&self, key: &CallKey, request: &ChatRequest) -> Result<Completion, ProviderError> {
        (**self).complete(key, request)
    }
}

/// Builds the provider described by `config`, optionally recording every
/// exchange to `record_to`.
pub fn build_provider(
    config: &ProviderConfig,
    record_to: Option<&std::path::Path>,
) -> Result<Box<dyn Provider>, ProviderError> {
    config.validate()?;
    let inner: Box<dyn Provider> = match config.kind {
        ProviderKind::Replay => Box::new(ReplayProvider::open(
            config.fixture.as_deref().expect("validated"),
        )?),
        _ => Box::new(HttpProvider::from_env(config.clone())?),
    };
    match record_to {
        Some(path) => Ok(Box::new(RecordingProvider::new(inner, path)?)),
        None => Ok(inner),
    }
}
