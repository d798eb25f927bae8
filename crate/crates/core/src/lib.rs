//! Post-retrieval validation for retrieval-augmented question answering.
//!
//! Retrieved passages are decomposed into atomic facts, a draft answer is
//! written from those facts, the draft is scored for support, and a
//! threshold gate decides whether the draft is kept or revised. Every run
//! leaves an audit trace.

pub mod backend;
pub mod cli;
pub mod convert;
pub mod dataset;
pub mod evaluation;
pub mod model;
pub mod pipeline;
pub mod prompting;

pub use backend::{Backend, BackendError, CompletionRequest, CompletionResponse, Stage};
pub use model::{
    gate, AuditTrace, Draft, EvidenceContext, FactList, FinalAnswer, FinalizationDecision,
    PipelineConfig, Question, SupportAssessment, TaskKind, Variant,
};
pub use pipeline::{Pipeline, PipelineError, RunOutcome};
pub use prompting::Prompter;
