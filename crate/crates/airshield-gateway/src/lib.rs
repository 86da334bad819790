//! Client for a chat-completions-compatible inference endpoint, plus a
//! deterministic offline mock that closes the classification loop against the
//! trained detector without any network.
//!
//! Wire protocol: POST {endpoint_url}/chat/completions with a JSON body
//! {model, messages: [{role: "system", …}, {role: "user", …}], temperature,
//! max_tokens}. Bearer auth comes from the `AIRSHIELD_API_KEY` environment
//! variable and is never written to logs, transcripts or reports.

mod backend;
mod evaluate;
mod transcript;

pub use backend::{Backend, MockVerdictBackend, RemoteBackend};
pub use evaluate::{classify_with_llm, explain_incident, ExplanationTranscript, LlmEvaluation};
pub use transcript::{TranscriptEntry, TranscriptStore};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Environment variable holding the bearer token for the remote backend.
pub const API_KEY_ENV: &str = "AIRSHIELD_API_KEY";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid gateway config: {0}")]
    InvalidConfig(String),
    #[error("transport failures ({failures}) exceeded the abort threshold ({threshold})")]
    TransportAborted { failures: usize, threshold: usize },
    #[error("codec error: {0}")]
    Codec(#[from] airshield_core::prompt_codec::CodecError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("transcript line {line}: {msg}")]
    BadTranscript { line: usize, msg: String },
}

/// Bearer token wrapper; never printed.
#[derive(Clone, Default)]
pub struct ApiKey(Option<String>);

impl ApiKey {
    pub fn from_env() -> Self {
        Self(std::env::var(API_KEY_ENV).ok().filter(|s| !s.is_empty()))
    }

    pub fn bearer_header(&self) -> Option<String> {
        self.0.as_ref().map(|k| format!("Bearer {k}"))
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0.is_some() {
            "ApiKey(<redacted>)"
        } else {
            "ApiKey(<unset>)"
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Mock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff_base_seconds: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            backoff_base_seconds: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatewayConfig {
    #[serde(default = "default_endpoint")]
    pub endpoint_url: String,
    #[serde(default = "default_model_name")]
    pub model_name: String,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: f64,
    #[serde(default = "default_parallel")]
    pub max_parallel_requests: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    pub backend: BackendKind,
    /// Abort the evaluation once this many requests fail at the transport
    /// level.
    #[serde(default = "default_abort_threshold")]
    pub abort_after_transport_failures: usize,
}

fn default_endpoint() -> String {
    "http://127.0.0.1:8000/v1".to_string()
}

fn default_model_name() -> String {
    "local-model".to_string()
}

fn default_max_output_tokens() -> u32 {
    2048
}

fn default_timeout() -> f64 {
    30.0
}

fn default_parallel() -> usize {
    4
}

fn default_abort_threshold() -> usize {
    8
}

impl GatewayConfig {
    pub fn mock() -> Self {
        Self {
            endpoint_url: default_endpoint(),
            model_name: default_model_name(),
            max_output_tokens: default_max_output_tokens(),
            temperature: 0.0,
            request_timeout_secs: default_timeout(),
            max_parallel_requests: default_parallel(),
            retry: RetryPolicy::default(),
            backend: BackendKind::Mock,
            abort_after_transport_failures: default_abort_threshold(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_parallel_requests < 1 {
            return Err(GatewayError::InvalidConfig(
                "max_parallel_requests must be >= 1".into(),
            ));
        }
        if !self.request_timeout_secs.is_finite() || self.request_timeout_secs <= 0.0 {
            return Err(GatewayError::InvalidConfig("timeout must be > 0".into()));
        }
        if self.temperature < 0.0 {
            return Err(GatewayError::InvalidConfig(
                "temperature must be >= 0".into(),
            ));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidConfig(
                "max_output_tokens must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Transport outcome of one completion request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportStatus {
    Ok,
    Timeout,
    RateLimited,
    ServerError,
    Malformed,
}

impl TransportStatus {
    pub fn name(self) -> &'static str {
        match self {
            TransportStatus::Ok => "ok",
            TransportStatus::Timeout => "timeout",
            TransportStatus::RateLimited => "rate_limited",
            TransportStatus::ServerError => "server_error",
            TransportStatus::Malformed => "malformed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenCounts {
    pub prompt: u64,
    pub completion: u64,
}

/// One completion outcome. `text` is present iff the status is Ok.
#[derive(Debug, Clone)]
pub struct CompletionResult {
    pub text: Option<String>,
    pub latency: std::time::Duration,
    pub token_counts: Option<TokenCounts>,
    pub transport_status: TransportStatus,
}

impl CompletionResult {
    pub(crate) fn ok(
        text: String,
        latency: std::time::Duration,
        token_counts: Option<TokenCounts>,
    ) -> Self {
        Self {
            text: Some(text),
            latency,
            token_counts,
            transport_status: TransportStatus::Ok,
        }
    }

    pub(crate) fn failed(status: TransportStatus, latency: std::time::Duration) -> Self {
        debug_assert_ne!(status, TransportStatus::Ok);
        Self {
            text: None,
            latency,
            token_counts: None,
            transport_status: status,
        }
    }
}
