use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, CompletionRequest, CompletionResponse, Stage};

/// A response returned whenever a request of `stage` contains `contains` in
/// its user text. Rules are not consumed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub stage: Stage,
    pub contains: String,
    pub text: String,
}

/// On-disk script for [`ScriptedBackend`].
///
/// ```json
/// {"cycle": false,
///  "rules": [{"stage": "draft", "contains": "Eiffel", "text": "ANSWER: Paris"}],
///  "stages": {"score": ["SUPPORT: 0.9"]},
///  "sequence": ["..."]}
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptSpec {
    #[serde(default)]
    pub cycle: bool,
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub stages: HashMap<Stage, Vec<String>>,
    #[serde(default)]
    pub sequence: Vec<String>,
}

#[derive(Debug, Default)]
struct Queues {
    by_stage: HashMap<Stage, VecDeque<String>>,
    sequence: VecDeque<String>,
}

/// Deterministic offline backend.
///
/// Lookup order per request: matching rule, then the queue for the request's
/// stage tag, then the shared sequence queue. In cycle mode queues rotate
/// instead of draining.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
    queues: Mutex<Queues>,
    cycle: bool,
    calls: AtomicU64,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Backend that serves `responses` in order regardless of stage.
    pub fn with_sequence<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let b = Self::new();
        b.push_sequence(responses);
        b
    }

    pub fn from_spec(spec: ScriptSpec) -> Self {
        let by_stage = spec
            .stages
            .into_iter()
            .map(|(stage, v)| (stage, v.into_iter().collect()))
            .collect();
        Self {
            rules: spec.rules,
            queues: Mutex::new(Queues {
                by_stage,
                sequence: spec.sequence.into_iter().collect(),
            }),
            cycle: spec.cycle,
            calls: AtomicU64::new(0),
        }
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str::<ScriptSpec>(json).map(Self::from_spec)
    }

    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_json(&text)?)
    }

    pub fn push(&self, stage: Stage, text: impl Into<String>) {
        self.lock()
            .by_stage
            .entry(stage)
            .or_default()
            .push_back(text.into());
    }

    pub fn push_sequence<I, S>(&self, responses: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.lock()
            .sequence
            .extend(responses.into_iter().map(Into::into));
    }

    /// Number of `complete` calls served or refused so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Responses still queued, across all stages and the sequence.
    pub fn remaining(&self) -> usize {
        let q = self.lock();
        q.sequence.len() + q.by_stage.values().map(VecDeque::len).sum::<usize>()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Queues> {
        self.queues.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn take(queue: &mut VecDeque<String>, cycle: bool) -> Option<String> {
        let next = queue.pop_front()?;
        if cycle {
            queue.push_back(next.clone());
        }
        Some(next)
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let stage = request.stage();

        let ruled = stage.and_then(|st| {
            self.rules
                .iter()
                .find(|r| r.stage == st && request.user_text.contains(&r.contains))
                .map(|r| r.text.clone())
        });

        let text = match ruled {
            Some(text) => Some(text),
            None => {
                let mut q = self.lock();
                let staged = stage
                    .and_then(|st| q.by_stage.get_mut(&st))
                    .and_then(|queue| Self::take(queue, self.cycle));
                staged.or_else(|| Self::take(&mut q.sequence, self.cycle))
            }
        };

        match text {
            Some(text) => Ok(CompletionResponse {
                text,
                ..CompletionResponse::default()
            }),
            None => Err(BackendError::ScriptExhausted {
                stage: stage.map_or("untagged", Stage::as_str).to_string(),
            }),
        }
    }

    fn name(&self) -> &str {
        "scripted"
    }
}
