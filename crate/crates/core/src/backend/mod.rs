//! Language-model completion backends.
//!
//! Every stage call goes through [`Backend::complete`]. Two implementations
//! ship: [`LiveBackend`] for OpenAI-compatible chat-completions endpoints and
//! [`ScriptedBackend`], which replays queued responses for offline runs.

mod live;
mod retry;
mod scripted;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use live::{LiveBackend, API_KEY_ENV};
pub use retry::{
    backoff_schedule, complete_with_retry, complete_with_retry_using, Attempted, RetryClass,
    RetryFailure, RetryPolicy, RetryingBackend,
};
pub use scripted::{ScriptRule, ScriptSpec, ScriptedBackend};

/// Pipeline stage a request belongs to. Rendered prompts carry the stage as
/// a tag on the first line of the system text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Decompose,
    Draft,
    Score,
    Revise,
    Judge,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Decompose,
        Stage::Draft,
        Stage::Score,
        Stage::Revise,
        Stage::Judge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Decompose => "decompose",
            Stage::Draft => "draft",
            Stage::Score => "score",
            Stage::Revise => "revise",
            Stage::Judge => "judge",
        }
    }

    /// The tag line placed at the top of a stage's system text.
    pub fn tag(self) -> String {
        format!("[pave:{}]", self.as_str())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s.trim())
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub seed: Option<u64>,
}

impl CompletionRequest {
    /// Stage named by the tag on the first line of the system text, if any.
    pub fn stage(&self) -> Option<Stage> {
        let first = self.system_text.lines().next()?.trim();
        let name = first.strip_prefix("[pave:")?.strip_suffix(']')?;
        name.parse().ok()
    }

    /// Stable SHA-256 content hash of the rendered prompt.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.system_text.as_bytes());
        hasher.update([0x1f]);
        hasher.update(self.user_text.as_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.user_text.trim().is_empty() {
            return Err(BackendError::InvalidRequest("user_text is empty".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} is not a finite value >= 0",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub input_token_count: u64,
    pub output_token_count: u64,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited by the endpoint")]
    RateLimited,
    #[error("server error: {0}")]
    ServerError(String),
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("scripted backend has no response left for stage `{stage}`")]
    ScriptExhausted { stage: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    InvalidResponse(String),
}

impl BackendError {
    /// Retryable class of this error, if it has one.
    pub fn retry_class(&self) -> Option<RetryClass> {
        match self {
            BackendError::Timeout => Some(RetryClass::Timeout),
            BackendError::RateLimited => Some(RetryClass::RateLimited),
            BackendError::ServerError(_) => Some(RetryClass::ServerError),
            _ => None,
        }
    }
}

/// A language-model completion service.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;

    fn name(&self) -> &str;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Shared count of `complete` calls, successful or not.
#[derive(Debug, Clone, Default)]
pub struct CallCounter(Arc<AtomicU64>);

impl CallCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    fn incr(&self) {
        self.0.fetch_add(1, Ordering::SeqCst);
    }
}

/// Wraps a backend and counts every call through it.
pub struct Counted<B> {
    inner: B,
    counter: CallCounter,
}

impl<B: Backend> Counted<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            counter: CallCounter::new(),
        }
    }

    pub fn counter(&self) -> CallCounter {
        self.counter.clone()
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: Backend> Backend for Counted<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        self.counter.incr();
        self.inner.complete(request)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}
