//! Stage orchestration for the four ablation variants.
//!
//! | variant                | stages                                        | calls  |
//! |------------------------|-----------------------------------------------|--------|
//! | `baseline`             | draft(C)                                      | 1      |
//! | `importance_weighting` | weighted decompose, draft(F)                  | 2      |
//! | `support_scoring`      | draft(C), score(C), gate, [revise(C)]         | 2 or 3 |
//! | `pave`                 | decompose, draft(F), score(F), gate, [revise(F)] | 3 or 4 |
//!
//! Call counts exclude the single format retry allowed per stage when the
//! model returns an empty fact list or an empty answer; those retries are
//! counted separately.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, CompletionRequest, Counted, Stage};
use crate::dataset::ExampleRecord;
use crate::model::{
    gate, AuditTrace, Draft, EvidenceContext, FactList, FinalAnswer, FinalizationDecision,
    ModelError, PipelineConfig, Question, StoredPrompt, SupportAssessment, Variant,
    TRACE_SCHEMA_VERSION,
};
use crate::prompting::{
    parse_draft, parse_fact_list, parse_score_outcome, Evidence, ParseError, ParseOutcome, Prompter,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("decomposition produced no parsable facts after one retry")]
    DecompositionFailed,
    #[error("{stage} stage produced an empty answer after one retry")]
    EmptyDraft { stage: Stage },
    #[error("backend failed during {stage} stage: {source}")]
    Backend {
        stage: Stage,
        #[source]
        source: BackendError,
    },
    #[error("invalid example: {0}")]
    InvalidInput(ModelError),
    #[error("pipeline configured for {configured} cannot run {requested}")]
    VariantMismatch {
        configured: Variant,
        requested: Variant,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageErrorClass {
    /// Empty output recovered by the automatic retry.
    EmptyOutputRetried,
    /// Output parsed only after lenient recovery.
    LenientParse,
    /// Score could not be read and was set to 0.0.
    ScoreUnparseable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: Stage,
    pub class: StageErrorClass,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub final_answer: FinalAnswer,
    pub trace: AuditTrace,
    pub stage_errors: Vec<StageError>,
    pub retry_calls: u32,
}

/// A failed example together with the calls it consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub error: PipelineError,
    pub backend_calls: u32,
    pub retry_calls: u32,
    pub stage_errors: Vec<StageError>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub type RunResult = Result<RunOutcome, RunFailure>;

/// Per-example call bookkeeping.
struct Session<'a> {
    backend: &'a dyn Backend,
    calls: u32,
    retry_calls: u32,
    fingerprints: Vec<String>,
    prompts: Option<Vec<StoredPrompt>>,
    stage_errors: Vec<StageError>,
    started_at: DateTime<Utc>,
}

impl<'a> Session<'a> {
    fn new(backend: &'a dyn Backend, store_prompts: bool) -> Self {
        Self {
            backend,
            calls: 0,
            retry_calls: 0,
            fingerprints: Vec::new(),
            prompts: store_prompts.then(Vec::new),
            stage_errors: Vec::new(),
            started_at: Utc::now(),
        }
    }

    fn call(
        &mut self,
        stage: Stage,
        request: &CompletionRequest,
        retry: bool,
    ) -> Result<String, PipelineError> {
        if retry {
            self.retry_calls += 1;
        } else {
            self.calls += 1;
        }
        self.fingerprints.push(request.fingerprint());
        if let Some(prompts) = &mut self.prompts {
            prompts.push(StoredPrompt {
                stage: stage.as_str().to_string(),
                system_text: request.system_text.clone(),
                user_text: request.user_text.clone(),
            });
        }
        self.backend
            .complete(request)
            .map(|r| r.text)
            .map_err(|source| PipelineError::Backend { stage, source })
    }

    fn note(&mut self, stage: Stage, class: StageErrorClass, detail: impl Into<String>) {
        self.stage_errors.push(StageError {
            stage,
            class,
            detail: detail.into(),
        });
    }

    /// Calls a stage and parses its output, retrying once when the parser
    /// reports empty output.
    fn call_parsed<T>(
        &mut self,
        stage: Stage,
        request: &CompletionRequest,
        parse: impl Fn(&str) -> Result<ParseOutcome<T>, ParseError>,
        exhausted: PipelineError,
    ) -> Result<T, PipelineError> {
        let first = self.call(stage, request, false)?;
        let outcome = match parse(&first) {
            Ok(o) => o,
            Err(e) => {
                let second = self.call(stage, request, true)?;
                match parse(&second) {
                    Ok(o) => {
                        self.note(stage, StageErrorClass::EmptyOutputRetried, e.to_string());
                        o
                    }
                    Err(_) => return Err(exhausted),
                }
            }
        };
        for w in outcome.warnings {
            self.note(stage, StageErrorClass::LenientParse, w);
        }
        Ok(outcome.value)
    }

    fn score(&mut self, request: &CompletionRequest) -> Result<SupportAssessment, PipelineError> {
        let text = self.call(Stage::Score, request, false)?;
        let outcome = parse_score_outcome(&text);
        if !outcome.value.parse_ok {
            self.note(
                Stage::Score,
                StageErrorClass::ScoreUnparseable,
                "no parsable score; using 0.0",
            );
        } else {
            for w in outcome.warnings {
                self.note(Stage::Score, StageErrorClass::LenientParse, w);
            }
        }
        Ok(outcome.value)
    }

    fn fail(self, error: PipelineError) -> RunFailure {
        RunFailure {
            error,
            backend_calls: self.calls,
            retry_calls: self.retry_calls,
            stage_errors: self.stage_errors,
        }
    }

    fn finish(
        self,
        question: &Question,
        config: &PipelineConfig,
        facts: FactList,
        draft: Draft,
        support: Option<SupportAssessment>,
        (final_text, was_revised): (String, bool),
    ) -> RunOutcome {
        let final_answer = FinalAnswer {
            text: final_text,
            was_revised,
            backend_calls: self.calls,
        };
        let trace = AuditTrace {
            question_id: question.id().to_string(),
            variant: config.variant,
            facts,
            draft,
            support,
            final_answer: final_answer.clone(),
            tau_used: config.tau,
            started_at: self.started_at,
            ended_at: Utc::now(),
            prompt_fingerprints: self.fingerprints,
            schema_version: TRACE_SCHEMA_VERSION,
            prompts: self.prompts,
        };
        RunOutcome {
            final_answer,
            trace,
            stage_errors: self.stage_errors,
            retry_calls: self.retry_calls,
        }
    }
}

/// Runs one configured variant against a backend.
pub struct Pipeline<'a> {
    config: PipelineConfig,
    prompter: Prompter,
    backend: &'a dyn Backend,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        config: PipelineConfig,
        prompter: Prompter,
        backend: &'a dyn Backend,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(Self {
            config,
            prompter,
            backend,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn prompter(&self) -> &Prompter {
        &self.prompter
    }

    /// Dispatches on the configured variant.
    pub fn run(&self, question: &Question, context: &EvidenceContext) -> RunResult {
        match self.config.variant {
            Variant::Baseline => self.run_baseline(question, context),
            Variant::ImportanceWeighting => self.run_importance_weighting(question, context),
            Variant::SupportScoring => self.run_support_scoring(question, context),
            Variant::Pave => self.run_pave(question, context),
        }
    }

    fn session(&self, requested: Variant) -> Result<Session<'a>, RunFailure> {
        let session = Session::new(self.backend, self.config.store_prompts);
        if self.config.variant != requested {
            return Err(session.fail(PipelineError::VariantMismatch {
                configured: self.config.variant,
                requested,
            }));
        }
        Ok(session)
    }

    fn decompose(
        &self,
        s: &mut Session<'_>,
        question: &Question,
        context: &EvidenceContext,
        weighted: bool,
    ) -> Result<FactList, PipelineError> {
        let max_facts = self.config.max_facts;
        let req = self
            .prompter
            .render_decompose(question, context, max_facts, weighted);
        s.call_parsed(
            Stage::Decompose,
            &req,
            |t| parse_fact_list(t, weighted, max_facts),
            PipelineError::DecompositionFailed,
        )
    }

    fn draft(
        &self,
        s: &mut Session<'_>,
        question: &Question,
        evidence: Evidence<'_>,
    ) -> Result<Draft, PipelineError> {
        let req = self.prompter.render_draft(question, evidence);
        s.call_parsed(
            Stage::Draft,
            &req,
            parse_draft,
            PipelineError::EmptyDraft {
                stage: Stage::Draft,
            },
        )
    }

    /// Applies the threshold gate and, for low support, the revision step.
    /// Later revision rounds (only with `max_revisions > 1`) are re-scored
    /// first; the last revision is final without re-scoring.
    fn finalize(
        &self,
        s: &mut Session<'_>,
        question: &Question,
        evidence: Evidence<'_>,
        draft: &Draft,
        support: &SupportAssessment,
    ) -> Result<(String, bool), PipelineError> {
        if gate(support, self.config.tau) == FinalizationDecision::Keep {
            return Ok((draft.answer.clone(), false));
        }
        let mut current = draft.clone();
        let mut current_support = support.clone();
        for round in 1..=self.config.max_revisions {
            let req = self
                .prompter
                .render_revise(question, evidence, &current, &current_support);
            current = s.call_parsed(
                Stage::Revise,
                &req,
                parse_draft,
                PipelineError::EmptyDraft {
                    stage: Stage::Revise,
                },
            )?;
            if round == self.config.max_revisions {
                break;
            }
            current_support = s.score(&self.prompter.render_score(question, evidence, &current))?;
            if gate(&current_support, self.config.tau) == FinalizationDecision::Keep {
                break;
            }
        }
        Ok((current.answer, true))
    }

    /// Full method: decompose, draft from premises, score against premises,
    /// gate, and revise when support falls below the threshold.
    pub fn run_pave(&self, question: &Question, context: &EvidenceContext) -> RunResult {
        let mut s = self.session(Variant::Pave)?;
        let res = (|| -> Result<_, PipelineError> {
            let facts = self.decompose(&mut s, question, context, false)?;
            let evidence = Evidence::Facts(&facts);
            let draft = self.draft(&mut s, question, evidence)?;
            let score_req = self.prompter.render_score(question, evidence, &draft);
            let support = s.score(&score_req)?;
            let (final_text, revised) =
                self.finalize(&mut s, question, evidence, &draft, &support)?;
            Ok((facts, draft, support, final_text, revised))
        })();
        match res {
            Ok((facts, draft, support, text, revised)) => Ok(s.finish(
                question,
                &self.config,
                facts,
                draft,
                Some(support),
                (text, revised),
            )),
            Err(e) => Err(s.fail(e)),
        }
    }

    /// One-shot answer from the raw context.
    pub fn run_baseline(&self, question: &Question, context: &EvidenceContext) -> RunResult {
        let mut s = self.session(Variant::Baseline)?;
        match self.draft(&mut s, question, Evidence::Context(context)) {
            Ok(draft) => {
                let text = draft.answer.clone();
                Ok(s.finish(
                    question,
                    &self.config,
                    FactList::empty(),
                    draft,
                    None,
                    (text, false),
                ))
            }
            Err(e) => Err(s.fail(e)),
        }
    }

    /// Draft, score, and revise against the raw context, with no decomposition.
    pub fn run_support_scoring(&self, question: &Question, context: &EvidenceContext) -> RunResult {
        let mut s = self.session(Variant::SupportScoring)?;
        let evidence = Evidence::Context(context);
        let res = (|| -> Result<_, PipelineError> {
            let draft = self.draft(&mut s, question, evidence)?;
            let support = s.score(&self.prompter.render_score(question, evidence, &draft))?;
            let (text, revised) = self.finalize(&mut s, question, evidence, &draft, &support)?;
            Ok((draft, support, text, revised))
        })();
        match res {
            Ok((draft, support, text, revised)) => Ok(s.finish(
                question,
                &self.config,
                FactList::empty(),
                draft,
                Some(support),
                (text, revised),
            )),
            Err(e) => Err(s.fail(e)),
        }
    }

    /// Salience-weighted decomposition followed by drafting; no scoring.
    pub fn run_importance_weighting(
        &self,
        question: &Question,
        context: &EvidenceContext,
    ) -> RunResult {
        let mut s = self.session(Variant::ImportanceWeighting)?;
        let res = (|| -> Result<_, PipelineError> {
            let facts = self.decompose(&mut s, question, context, true)?;
            let draft = self.draft(&mut s, question, Evidence::Facts(&facts))?;
            Ok((facts, draft))
        })();
        match res {
            Ok((facts, draft)) => {
                let text = draft.answer.clone();
                Ok(s.finish(question, &self.config, facts, draft, None, (text, false)))
            }
            Err(e) => Err(s.fail(e)),
        }
    }

    fn run_record(&self, record: &ExampleRecord) -> RunResult {
        let inputs = record
            .to_question()
            .and_then(|q| record.to_context().map(|c| (q, c)));
        match inputs {
            Ok((q, c)) => self.run(&q, &c),
            Err(e) => Err(RunFailure {
                error: PipelineError::InvalidInput(e),
                backend_calls: 0,
                retry_calls: 0,
                stage_errors: Vec::new(),
            }),
        }
    }

    /// Runs every record through the configured variant with at most
    /// `parallelism` examples in flight, appending each trace to `sink`.
    ///
    /// Per-example failures are tallied; a sink write failure stops the run.
    /// With `parallelism == 1` traces are appended in input order.
    pub fn run_dataset(
        &self,
        records: &[ExampleRecord],
        parallelism: usize,
        sink: &dyn TraceSink,
    ) -> Result<DatasetRun, RunError> {
        if parallelism == 0 {
            return Err(RunError::Parallelism);
        }
        let counted = Counted::new(self.backend);
        let counter = counted.counter();
        let inner = Pipeline {
            config: self.config.clone(),
            prompter: self.prompter.clone(),
            backend: &counted,
        };

        let slots: Vec<Mutex<Option<RunResult>>> =
            records.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let sink_error: Mutex<Option<RunError>> = Mutex::new(None);

        let worker = || loop {
            if abort.load(Ordering::SeqCst) {
                break;
            }
            let i = next.fetch_add(1, Ordering::SeqCst);
            let Some(record) = records.get(i) else { break };
            let result = inner.run_record(record);
            if let Ok(outcome) = &result {
                if let Err(source) = sink.append(&outcome.trace) {
                    abort.store(true, Ordering::SeqCst);
                    sink_error
                        .lock()
                        .unwrap_or_else(|e| e.into_inner())
                        .get_or_insert(RunError::Sink {
                            id: record.id.clone(),
                            source,
                        });
                    break;
                }
            }
            *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(result);
        };

        let workers = parallelism.min(records.len()).max(1);
        if workers == 1 {
            worker();
        } else {
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(worker);
                }
            });
        }

        if let Some(err) = sink_error.into_inner().unwrap_or_else(|e| e.into_inner()) {
            return Err(err);
        }

        let mut summary = RunSummary {
            variant: self.config.variant,
            total: records.len(),
            ..RunSummary::default()
        };
        let mut results = Vec::with_capacity(records.len());
        for (record, slot) in records.iter().zip(slots) {
            let result = slot
                .into_inner()
                .unwrap_or_else(|e| e.into_inner())
                .expect("every record is processed when the sink never fails");
            match &result {
                Ok(o) => {
                    summary.completed += 1;
                    summary.revised += usize::from(o.final_answer.was_revised);
                    summary.retry_calls += u64::from(o.retry_calls);
                }
                Err(f) => {
                    summary.failed += 1;
                    summary.retry_calls += u64::from(f.retry_calls);
                }
            }
            results.push(ExampleResult {
                id: record.id.clone(),
                result,
            });
        }
        summary.total_backend_calls = counter.get();
        Ok(DatasetRun { summary, results })
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("parallelism must be at least 1")]
    Parallelism,
    #[error("writing trace for example `{id}` failed: {source}")]
    Sink {
        id: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: Variant,
    pub total: usize,
    pub completed: usize,
    pub failed: usize,
    pub revised: usize,
    /// Every backend call made during the run, retries included.
    pub total_backend_calls: u64,
    /// Format retries after empty stage output.
    pub retry_calls: u64,
}

#[derive(Debug)]
pub struct ExampleResult {
    pub id: String,
    pub result: RunResult,
}

#[derive(Debug)]
pub struct DatasetRun {
    pub summary: RunSummary,
    pub results: Vec<ExampleResult>,
}

/// Destination for audit traces. Appends must be atomic per record.
pub trait TraceSink: Sync {
    fn append(&self, trace: &AuditTrace) -> std::io::Result<()>;
}

/// Writes one JSON object per line.
pub struct JsonlTraceSink {
    writer: Mutex<BufWriter<File>>,
}

impl JsonlTraceSink {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(Self {
            writer: Mutex::new(BufWriter::new(File::create(path)?)),
        })
    }
}

impl TraceSink for JsonlTraceSink {
    fn append(&self, trace: &AuditTrace) -> std::io::Result<()> {
        let mut line = trace.to_json_line();
        line.push('\n');
        let mut w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        w.write_all(line.as_bytes())?;
        w.flush()
    }
}

#[derive(Debug, Default)]
pub struct MemoryTraceSink {
    traces: Mutex<Vec<AuditTrace>>,
}

impl MemoryTraceSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn traces(&self) -> Vec<AuditTrace> {
        self.traces
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }
}

impl TraceSink for MemoryTraceSink {
    fn append(&self, trace: &AuditTrace) -> std::io::Result<()> {
        self.traces
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(trace.clone());
        Ok(())
    }
}

/// Discards traces.
pub struct NullTraceSink;

impl TraceSink for NullTraceSink {
    fn append(&self, _: &AuditTrace) -> std::io::Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::model::{validate_trace, TaskKind};

    const FACTS: &str = "1. The Eiffel Tower is in Paris.\n2. It opened in 1889.";
    const DRAFT: &str = "ANSWER: Paris\nRATIONALE: Premise 1 places it in Paris.";

    fn q() -> Question {
        Question::new("q1", "Where is the Eiffel Tower?", TaskKind::Span).unwrap()
    }

    fn ctx() -> EvidenceContext {
        EvidenceContext::new(["The Eiffel Tower, opened in 1889, stands in Paris."]).unwrap()
    }

    fn pipeline(backend: &dyn Backend, variant: Variant) -> Pipeline<'_> {
        Pipeline::new(
            PipelineConfig::with_variant(variant),
            Prompter::default(),
            backend,
        )
        .unwrap()
    }

    #[test]
    fn pave_keep_path_uses_three_calls() {
        let b = ScriptedBackend::with_sequence([FACTS, DRAFT, "SUPPORT: 0.9"]);
        let out = pipeline(&b, Variant::Pave).run_pave(&q(), &ctx()).unwrap();
        assert_eq!(out.final_answer.text, "Paris");
        assert!(!out.final_answer.was_revised);
        assert_eq!(out.final_answer.backend_calls, 3);
        assert_eq!(out.trace.facts.len(), 2);
        assert_eq!(out.trace.support.as_ref().unwrap().score, 0.9);
        assert_eq!(out.trace.prompt_fingerprints.len(), 3);
        assert!(out.stage_errors.is_empty(), "{:?}", out.stage_errors);
        assert!(validate_trace(&out.trace, &PipelineConfig::default()).is_empty());
        assert_eq!(b.calls(), 3);
    }

    #[test]
    fn pave_revise_path_uses_four_calls() {
        let b = ScriptedBackend::with_sequence([
            FACTS,
            "ANSWER: London\nRATIONALE: Guess.",
            "SUPPORT: 0.2",
            DRAFT,
        ]);
        let out = pipeline(&b, Variant::Pave).run_pave(&q(), &ctx()).unwrap();
        assert_eq!(out.final_answer.text, "Paris");
        assert!(out.final_answer.was_revised);
        assert_eq!(out.final_answer.backend_calls, 4);
        assert_eq!(out.trace.draft.answer, "London");
        assert!(validate_trace(&out.trace, &PipelineConfig::default()).is_empty());
    }

    #[test]
    fn pave_empty_decomposition_fails_after_retry() {
        let b = ScriptedBackend::with_sequence(["", ""]);
        let err = pipeline(&b, Variant::Pave)
            .run_pave(&q(), &ctx())
            .unwrap_err();
        assert_eq!(err.error, PipelineError::DecompositionFailed);
        assert_eq!((err.backend_calls, err.retry_calls), (1, 1));
        assert_eq!(b.calls(), 2);
    }

    #[test]
    fn pave_recovers_from_one_empty_decomposition() {
        let b = ScriptedBackend::with_sequence(["", FACTS, DRAFT, "SUPPORT: 0.8"]);
        let out = pipeline(&b, Variant::Pave).run_pave(&q(), &ctx()).unwrap();
        assert_eq!(out.final_answer.backend_calls, 3);
        assert_eq!(out.retry_calls, 1);
        assert_eq!(
            out.stage_errors[0].class,
            StageErrorClass::EmptyOutputRetried
        );
        assert_eq!(out.trace.prompt_fingerprints.len(), 4);
    }

    #[test]
    fn backend_exhaustion_propagates() {
        let b = ScriptedBackend::with_sequence([FACTS]);
        let err = pipeline(&b, Variant::Pave)
            .run_pave(&q(), &ctx())
            .unwrap_err();
        assert!(matches!(
            err.error,
            PipelineError::Backend {
                stage: Stage::Draft,
                source: BackendError::ScriptExhausted { .. }
            }
        ));
    }

    #[test]
    fn baseline_single_call() {
        let b = ScriptedBackend::with_sequence(["ANSWER: no"]);
        let p = pipeline(&b, Variant::Baseline);
        let out = p.run_baseline(&q(), &ctx()).unwrap();
        assert_eq!(out.final_answer.text, "no");
        assert_eq!(out.final_answer.backend_calls, 1);
        assert!(out.trace.facts.is_empty());
        assert!(out.trace.support.is_none());
        assert!(validate_trace(&out.trace, p.config()).is_empty());
    }

    #[test]
    fn baseline_empty_output_fails() {
        let b = ScriptedBackend::with_sequence(["", ""]);
        let err = pipeline(&b, Variant::Baseline)
            .run_baseline(&q(), &ctx())
            .unwrap_err();
        assert_eq!(
            err.error,
            PipelineError::EmptyDraft {
                stage: Stage::Draft
            }
        );
    }

    #[test]
    fn support_scoring_paths() {
        let b = ScriptedBackend::with_sequence([DRAFT, "SUPPORT: 0.95"]);
        let p = pipeline(&b, Variant::SupportScoring);
        let out = p.run_support_scoring(&q(), &ctx()).unwrap();
        assert_eq!(
            (out.final_answer.backend_calls, out.final_answer.was_revised),
            (2, false)
        );
        assert!(out.trace.facts.is_empty());

        let b = ScriptedBackend::with_sequence([DRAFT, "SUPPORT: 0.1", "ANSWER: Paris, France"]);
        let p = pipeline(&b, Variant::SupportScoring);
        let out = p.run_support_scoring(&q(), &ctx()).unwrap();
        assert_eq!(
            (out.final_answer.backend_calls, out.final_answer.was_revised),
            (3, true)
        );
        assert_eq!(out.final_answer.text, "Paris, France");
        assert!(validate_trace(&out.trace, p.config()).is_empty());
    }

    #[test]
    fn unparseable_score_triggers_revision() {
        let b = ScriptedBackend::with_sequence([DRAFT, "Looks fine to me.", DRAFT]);
        let out = pipeline(&b, Variant::SupportScoring)
            .run_support_scoring(&q(), &ctx())
            .unwrap();
        let support = out.trace.support.as_ref().unwrap();
        assert!(!support.parse_ok);
        assert_eq!(support.score, 0.0);
        assert!(out.final_answer.was_revised);
        assert!(out
            .stage_errors
            .iter()
            .any(|e| e.class == StageErrorClass::ScoreUnparseable));
    }

    #[test]
    fn importance_weighting_two_calls_with_saliences() {
        let b = ScriptedBackend::with_sequence([
            "1. The Eiffel Tower is in Paris. [0.9]\n2. It opened in 1889. [1.3]",
            DRAFT,
        ]);
        let p = pipeline(&b, Variant::ImportanceWeighting);
        let out = p.run_importance_weighting(&q(), &ctx()).unwrap();
        assert_eq!(out.final_answer.backend_calls, 2);
        let saliences: Vec<_> = out.trace.facts.iter().map(|f| f.salience).collect();
        assert_eq!(saliences, [Some(0.9), Some(1.0)]);
        assert!(out.trace.support.is_none());
        assert!(validate_trace(&out.trace, p.config()).is_empty());
    }

    #[test]
    fn importance_weighting_fails_on_empty_facts() {
        let b = ScriptedBackend::with_sequence(["", "   "]);
        let err = pipeline(&b, Variant::ImportanceWeighting)
            .run_importance_weighting(&q(), &ctx())
            .unwrap_err();
        assert_eq!(err.error, PipelineError::DecompositionFailed);
    }

    #[test]
    fn variant_mismatch_is_rejected() {
        let b = ScriptedBackend::new();
        let err = pipeline(&b, Variant::Baseline)
            .run_pave(&q(), &ctx())
            .unwrap_err();
        assert!(matches!(err.error, PipelineError::VariantMismatch { .. }));
        assert_eq!(b.calls(), 0);
    }

    #[test]
    fn multi_round_revision_rescoring() {
        let config = PipelineConfig {
            max_revisions: 2,
            ..PipelineConfig::default()
        };
        let b = ScriptedBackend::with_sequence([
            FACTS,
            "ANSWER: London",
            "SUPPORT: 0.1",
            "ANSWER: Lyon",
            "SUPPORT: 0.3",
            DRAFT,
        ]);
        let p = Pipeline::new(config, Prompter::default(), &b).unwrap();
        let out = p.run_pave(&q(), &ctx()).unwrap();
        assert_eq!(out.final_answer.text, "Paris");
        assert_eq!(out.final_answer.backend_calls, 6);
        assert_eq!(out.trace.support.as_ref().unwrap().score, 0.1);
    }

    #[test]
    fn stored_prompts_are_opt_in() {
        let config = PipelineConfig {
            store_prompts: true,
            ..PipelineConfig::default()
        };
        let b = ScriptedBackend::with_sequence([FACTS, DRAFT, "SUPPORT: 0.9"]);
        let out = Pipeline::new(config, Prompter::default(), &b)
            .unwrap()
            .run_pave(&q(), &ctx())
            .unwrap();
        let prompts = out.trace.prompts.unwrap();
        assert_eq!(prompts.len(), 3);
        assert_eq!(prompts[0].stage, "decompose");
    }

    struct FailingSink;

    impl TraceSink for FailingSink {
        fn append(&self, _: &AuditTrace) -> std::io::Result<()> {
            Err(std::io::Error::other("disk full"))
        }
    }

    fn record(id: &str) -> ExampleRecord {
        ExampleRecord {
            id: id.into(),
            task_kind: TaskKind::Span,
            question: "Where is the Eiffel Tower?".into(),
            contexts: vec!["It stands in Paris.".into()],
            gold: "Paris".into(),
            gold_alternatives: None,
        }
    }

    #[test]
    fn sink_failure_aborts_run() {
        let b = ScriptedBackend::from_json(
            r#"{"cycle": true, "stages": {"decompose": ["1. F."], "draft": ["ANSWER: Paris"], "score": ["SUPPORT: 1"]}}"#,
        )
        .unwrap();
        let recs: Vec<_> = (0..5).map(|i| record(&format!("r{i}"))).collect();
        let err = pipeline(&b, Variant::Pave)
            .run_dataset(&recs, 1, &FailingSink)
            .unwrap_err();
        assert!(matches!(err, RunError::Sink { ref id, .. } if id == "r0"));
        assert_eq!(b.calls(), 3);
    }

    #[test]
    fn invalid_records_are_tallied_as_failures() {
        let b = ScriptedBackend::with_sequence(["ANSWER: Paris"]);
        let mut bad = record("bad");
        bad.contexts = vec![];
        let recs = vec![bad, record("good")];
        let run = pipeline(&b, Variant::Baseline)
            .run_dataset(&recs, 1, &NullTraceSink)
            .unwrap();
        assert_eq!((run.summary.completed, run.summary.failed), (1, 1));
        assert!(matches!(
            run.results[0].result,
            Err(RunFailure {
                error: PipelineError::InvalidInput(_),
                ..
            })
        ));
    }

    #[test]
    fn zero_parallelism_is_rejected() {
        let b = ScriptedBackend::new();
        assert!(matches!(
            pipeline(&b, Variant::Pave).run_dataset(&[], 0, &NullTraceSink),
            Err(RunError::Parallelism)
        ));
    }
}
