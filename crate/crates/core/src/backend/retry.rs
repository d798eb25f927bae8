use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, CompletionRequest, CompletionResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetryClass {
    Timeout,
    RateLimited,
    ServerError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
    pub retry_on: BTreeSet<RetryClass>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_backoff_ms: 500,
            retry_on: [
                RetryClass::Timeout,
                RetryClass::RateLimited,
                RetryClass::ServerError,
            ]
            .into_iter()
            .collect(),
        }
    }
}

impl RetryPolicy {
    pub fn no_retry() -> Self {
        Self {
            max_attempts: 1,
            base_backoff_ms: 1,
            retry_on: BTreeSet::new(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_attempts == 0 {
            return Err("max_attempts must be at least 1".into());
        }
        if self.base_backoff_ms == 0 {
            return Err("base_backoff_ms must be positive".into());
        }
        Ok(())
    }

    /// Delay after the failed `attempt` (1-based): `base * 2^(attempt-1)`,
    /// saturating.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64
            .checked_shl(attempt.saturating_sub(1))
            .unwrap_or(u64::MAX);
        Duration::from_millis(self.base_backoff_ms.saturating_mul(factor))
    }

    fn retries(&self, err: &BackendError) -> bool {
        err.retry_class()
            .is_some_and(|class| self.retry_on.contains(&class))
    }
}

/// Delays slept between the attempts of a fully exhausted run.
pub fn backoff_schedule(policy: &RetryPolicy) -> Vec<Duration> {
    (1..policy.max_attempts)
        .map(|a| policy.backoff(a))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attempted<T> {
    pub value: T,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{error} (after {attempts} attempt(s))")]
pub struct RetryFailure {
    pub error: BackendError,
    pub attempts: u32,
}

pub fn complete_with_retry(
    backend: &dyn Backend,
    request: &CompletionRequest,
    policy: &RetryPolicy,
) -> Result<Attempted<CompletionResponse>, RetryFailure> {
    complete_with_retry_using(backend, request, policy, std::thread::sleep)
}

/// Retry loop with an injectable sleep, so callers can observe or skip the
/// backoff delays.
pub fn complete_with_retry_using(
    backend: &dyn Backend,
    request: &CompletionRequest,
    policy: &RetryPolicy,
    mut sleep: impl FnMut(Duration),
) -> Result<Attempted<CompletionResponse>, RetryFailure> {
    let max_attempts = policy.max_attempts.max(1);
    let mut attempt = 1;
    loop {
        match backend.complete(request) {
            Ok(value) => {
                return Ok(Attempted {
                    value,
                    attempts: attempt,
                })
            }
            Err(error) if attempt < max_attempts && policy.retries(&error) => {
                sleep(policy.backoff(attempt));
                attempt += 1;
            }
            Err(error) => {
                return Err(RetryFailure {
                    error,
                    attempts: attempt,
                })
            }
        }
    }
}

/// Backend adapter that applies a retry policy to every call.
pub struct RetryingBackend<B> {
    inner: B,
    policy: RetryPolicy,
}

impl<B: Backend> RetryingBackend<B> {
    pub fn new(inner: B, policy: RetryPolicy) -> Self {
        Self { inner, policy }
    }
}

impl<B: Backend> Backend for RetryingBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        complete_with_retry(&self.inner, request, &self.policy)
            .map(|a| a.value)
            .map_err(|f| f.error)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}
