//! Domain types for a single validated answer: the question, its fixed
//! retrieved context, the atomic premises, the draft, the support signal,
//! the finalized answer, and the audit trace that ties them together.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Current version of the trace JSONL layout.
pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// Default revision threshold. Exposed in configuration; chosen by this
/// repository rather than taken from published experiments.
pub const DEFAULT_TAU: f64 = 0.70;

/// Default upper bound on the number of extracted premises.
pub const DEFAULT_MAX_FACTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("question text is empty")]
    EmptyQuestion,
    #[error("evidence context has no passages")]
    NoPassages,
    #[error("passage {0} is empty")]
    EmptyPassage(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "unknown variant `{0}` (expected baseline, importance_weighting, support_scoring or pave)"
    )]
    UnknownVariant(String),
    #[error("unknown task kind `{0}` (expected label3 or span)")]
    UnknownTaskKind(String),
}

/// Answer format expected for a question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Three-way yes/no/maybe classification.
    Label3,
    /// Short extractive span.
    Span,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Label3 => "label3",
            TaskKind::Span => "span",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "label3" => Ok(TaskKind::Label3),
            "span" => Ok(TaskKind::Span),
            other => Err(ModelError::UnknownTaskKind(other.to_string())),
        }
    }
}

/// A user question together with the answer format it expects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    id: String,
    text: String,
    task: TaskKind,
}

impl Question {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        task: TaskKind,
    ) -> Result<Self, ModelError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ModelError::EmptyQuestion);
        }
        Ok(Self {
            id: id.into(),
            text,
            task,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }
}

/// The fixed retrieved context for one question, in retrieval order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceContext {
    passages: Vec<String>,
}

impl EvidenceContext {
    pub fn new<I, S>(passages: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let passages: Vec<String> = passages.into_iter().map(Into::into).collect();
        if passages.is_empty() {
            return Err(ModelError::NoPassages);
        }
        if let Some(i) = passages.iter().position(|p| p.trim().is_empty()) {
            return Err(ModelError::EmptyPassage(i + 1));
        }
        Ok(Self { passages })
    }

    pub fn passages(&self) -> &[String] {
        &self.passages
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }
}

/// One question-conditioned premise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicFact {
    pub index: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub salience: Option<f64>,
}

/// Ordered premise list with contiguous 1-based indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactList {
    facts: Vec<AtomicFact>,
}

impl FactList {
    /// Builds a list from `(text, salience)` pairs, assigning indices 1..n.
    pub fn from_entries<I>(entries: I) -> Self
    where
        I: IntoIterator<Item = (String, Option<f64>)>,
    {
        let facts = entries
            .into_iter()
            .enumerate()
            .map(|(i, (text, salience))| AtomicFact {
                index: i + 1,
                text,
                salience,
            })
            .collect();
        Self { facts }
    }

    pub fn from_texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_entries(texts.into_iter().map(|t| (t.into(), None)))
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn facts(&self) -> &[AtomicFact] {
        &self.facts
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, AtomicFact> {
        self.facts.iter()
    }

    /// Invariant violations for this list, given the configured cap.
    pub fn violations(&self, max_facts: usize) -> Vec<String> {
        let mut out = Vec::new();
        for (i, fact) in self.facts.iter().enumerate() {
            if fact.index != i + 1 {
                out.push(format!(
                    "fact index {} at position {} (expected {})",
                    fact.index,
                    i + 1,
                    i + 1
                ));
            }
            if fact.text.trim().is_empty() {
                out.push(format!("fact {} has empty text", fact.index));
            }
            if let Some(w) = fact.salience {
                if !(0.0..=1.0).contains(&w) {
                    out.push(format!("fact {} salience {w} outside [0,1]", fact.index));
                }
            }
        }
        if self.facts.len() > max_facts {
            out.push(format!(
                "{} facts exceed max_facts {}",
                self.facts.len(),
                max_facts
            ));
        }
        out
    }
}

impl<'a> IntoIterator for &'a FactList {
    type Item = &'a AtomicFact;
    type IntoIter = std::slice::Iter<'a, AtomicFact>;

    fn into_iter(self) -> Self::IntoIter {
        self.facts.iter()
    }
}

/// Draft answer and its short rationale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Draft {
    pub answer: String,
    #[serde(default)]
    pub rationale: String,
}

/// Premise-support signal for a draft.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportAssessment {
    pub score: f64,
    pub parse_ok: bool,
    pub raw_text: String,
}

impl SupportAssessment {
    /// A successfully parsed score, clamped into [0,1]. Non-finite values are
    /// treated as unparseable.
    pub fn parsed(score: f64, raw_text: impl Into<String>) -> Self {
        if !score.is_finite() {
            return Self::unparseable(raw_text);
        }
        Self {
            score: score.clamp(0.0, 1.0),
            parse_ok: true,
            raw_text: raw_text.into(),
        }
    }

    /// Scorer output with no readable score. Always scores 0.0.
    pub fn unparseable(raw_text: impl Into<String>) -> Self {
        Self {
            score: 0.0,
            parse_ok: false,
            raw_text: raw_text.into(),
        }
    }
}

/// The four ablation variants.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    ImportanceWeighting,
    SupportScoring,
    #[default]
    Pave,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Baseline,
        Variant::ImportanceWeighting,
        Variant::SupportScoring,
        Variant::Pave,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::ImportanceWeighting => "importance_weighting",
            Variant::SupportScoring => "support_scoring",
            Variant::Pave => "pave",
        }
    }

    pub fn decomposes(self) -> bool {
        matches!(self, Variant::ImportanceWeighting | Variant::Pave)
    }

    pub fn scores(self) -> bool {
        matches!(self, Variant::SupportScoring | Variant::Pave)
    }

    /// Backend calls a completed example makes, excluding retries, for a
    /// single-revision budget.
    pub fn expected_calls(self, was_revised: bool) -> u32 {
        let rev = u32::from(was_revised);
        match self {
            Variant::Baseline => 1,
            Variant::ImportanceWeighting => 2,
            Variant::SupportScoring => 2 + rev,
            Variant::Pave => 3 + rev,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "baseline" => Ok(Variant::Baseline),
            "importance_weighting" => Ok(Variant::ImportanceWeighting),
            "support_scoring" => Ok(Variant::SupportScoring),
            "pave" => Ok(Variant::Pave),
            other => Err(ModelError::UnknownVariant(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub tau: f64,
    pub variant: Variant,
    pub max_facts: usize,
    pub max_revisions: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
    /// Keep full rendered prompts in the trace in addition to fingerprints.
    #[serde(default)]
    pub store_prompts: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            variant: Variant::Pave,
            max_facts: DEFAULT_MAX_FACTS,
            max_revisions: 1,
            temperature: 0.0,
            seed: None,
            store_prompts: false,
        }
    }
}

impl PipelineConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(ModelError::InvalidConfig(format!(
                "tau must lie in [0,1], got {}",
                self.tau
            )));
        }
        if self.max_facts == 0 {
            return Err(ModelError::InvalidConfig(
                "max_facts must be at least 1".into(),
            ));
        }
        if self.max_revisions == 0 {
            return Err(ModelError::InvalidConfig(
                "max_revisions must be at least 1".into(),
            ));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ModelError::InvalidConfig(format!(
                "temperature must be a finite value >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalAnswer {
    pub text: String,
    pub was_revised: bool,
    /// Stage calls made for this example, not counting format retries.
    pub backend_calls: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalizationDecision {
    Keep,
    Revise,
}

/// Keep the draft iff its support reaches the threshold (boundary inclusive).
pub fn gate(support: &SupportAssessment, tau: f64) -> FinalizationDecision {
    gate_score(support.score, tau)
}

pub fn gate_score(score: f64, tau: f64) -> FinalizationDecision {
    if score >= tau {
        FinalizationDecision::Keep
    } else {
        FinalizationDecision::Revise
    }
}

/// A rendered prompt kept verbatim when prompt storage is enabled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredPrompt {
    pub stage: String,
    pub system_text: String,
    pub user_text: String,
}

/// Audit trace `(F, a0, r0, s, a*)` plus run metadata. One JSONL line each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditTrace {
    pub question_id: String,
    pub variant: Variant,
    pub facts: FactList,
    pub draft: Draft,
    pub support: Option<SupportAssessment>,
    #[serde(rename = "final")]
    pub final_answer: FinalAnswer,
    pub tau_used: f64,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    pub prompt_fingerprints: Vec<String>,
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<Vec<StoredPrompt>>,
}

impl AuditTrace {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace serialization is infallible")
    }

    pub fn from_json_line(line: &str) -> serde_json::Result<Self> {
        serde_json::from_str(line)
    }
}

/// Checks every trace invariant for the configured variant. Violations are
/// returned as data; an empty list means the trace is well formed.
pub fn validate_trace(trace: &AuditTrace, config: &PipelineConfig) -> Vec<String> {
    let mut out = Vec::new();
    let variant = trace.variant;

    if variant != config.variant {
        out.push(format!(
            "variant mismatch: trace is {variant}, config is {}",
            config.variant
        ));
    }
    if trace.schema_version != TRACE_SCHEMA_VERSION {
        out.push(format!(
            "unsupported schema_version {}",
            trace.schema_version
        ));
    }
    if !(0.0..=1.0).contains(&trace.tau_used) {
        out.push(format!("tau_used {} outside [0,1]", trace.tau_used));
    }

    if variant.decomposes() {
        if trace.facts.is_empty() {
            out.push(format!("facts missing for variant {variant}"));
        }
    } else if !trace.facts.is_empty() {
        out.push(format!("facts present for variant {variant}"));
    }
    out.extend(trace.facts.violations(config.max_facts));

    match (&trace.support, variant.scores()) {
        (None, true) => out.push(format!("support missing for variant {variant}")),
        (Some(_), false) => out.push(format!("support present for variant {variant}")),
        _ => {}
    }
    if let Some(support) = &trace.support {
        if !(0.0..=1.0).contains(&support.score) {
            out.push(format!("support score {} outside [0,1]", support.score));
        }
        if !support.parse_ok && support.score != 0.0 {
            out.push("unparsed support must score 0.0".into());
        }
    }

    if trace.draft.answer.trim().is_empty() {
        out.push("draft answer is empty".into());
    }
    if trace.final_answer.text.trim().is_empty() {
        out.push("final answer is empty".into());
    }

    let gate_says_revise = trace
        .support
        .as_ref()
        .is_some_and(|s| gate(s, trace.tau_used) == FinalizationDecision::Revise);
    if trace.final_answer.was_revised != gate_says_revise {
        out.push("revision flag inconsistent with gate".into());
    }

    let calls = trace.final_answer.backend_calls;
    if calls == 0 {
        out.push("backend_calls must be positive".into());
    } else if config.max_revisions <= 1 {
        let expected = variant.expected_calls(trace.final_answer.was_revised);
        if calls != expected {
            out.push(format!(
                "backend_calls {calls} inconsistent with variant {variant} (expected {expected})"
            ));
        }
    }

    if trace.ended_at < trace.started_at {
        out.push("ended_at precedes started_at".into());
    }
    out
}
