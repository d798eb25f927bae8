//! C ABI for `pave-core`.
//!
//! Handles are opaque pointers created by `*_new` functions and released
//! with the matching `*_free`. Fallible functions return a [`PaveStatus`];
//! on failure a description is available from [`pave_last_error`] on the
//! same thread. Strings returned by accessors are owned by their handle and
//! stay valid until the handle is freed. Output parameters are written only
//! on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;
use std::time::Duration;

use pave_core::backend::{
    Backend, CallCounter, Counted, LiveBackend, RetryPolicy, RetryingBackend, ScriptedBackend,
};
use pave_core::evaluation::{accuracy_pct, relative_error_reduction, EvalError};
use pave_core::model::{gate_score, FinalizationDecision};
use pave_core::prompting::{parse_score, Prompter, TemplateSet};
use pave_core::{EvidenceContext, Pipeline, PipelineConfig, Question, TaskKind};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaveStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    InvalidConfig = 4,
    BackendError = 5,
    PipelineError = 6,
    Undefined = 7,
    Panic = 99,
}

/// Task kinds for [`pave_run`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaveTaskKind {
    Label3 = 0,
    Span = 1,
}

/// A completion backend.
pub struct PaveBackend {
    inner: Arc<dyn Backend>,
    calls: CallCounter,
}

/// A configured pipeline bound to a backend.
pub struct PavePipeline {
    config: PipelineConfig,
    prompter: Prompter,
    backend: Arc<dyn Backend>,
}

/// The result of one pipeline run.
pub struct PaveOutcome {
    final_answer: CString,
    trace_json: CString,
    was_revised: bool,
    backend_calls: u32,
    support: Option<(f64, bool)>,
}

struct Failure(PaveStatus, String);

impl Failure {
    fn new(status: PaveStatus, msg: impl Into<String>) -> Self {
        Self(status, msg.into())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PaveStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PaveStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            PaveStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(
            PaveStatus::NullPointer,
            format!("{name} is null"),
        ));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure::new(
            PaveStatus::InvalidUtf8,
            format!("{name} is not valid UTF-8"),
        )
    })
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(PaveStatus::NullPointer, format!("{name} is null")))
}

fn wrap_backend(b: impl Backend + 'static) -> *mut PaveBackend {
    let counted = Counted::new(b);
    let calls = counted.counter();
    Box::into_raw(Box::new(PaveBackend {
        inner: Arc::new(counted),
        calls,
    }))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pave_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pave_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a scripted backend from a JSON script.
///
/// # Safety
/// `script_json` must be a valid NUL-terminated string and `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn pave_backend_scripted_new(
    script_json: *const c_char,
    out: *mut *mut PaveBackend,
) -> PaveStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let json = str_arg(script_json, "script_json")?;
        let backend = ScriptedBackend::from_json(json)
            .map_err(|e| Failure::new(PaveStatus::InvalidConfig, format!("invalid script: {e}")))?;
        *out = wrap_backend(backend);
        Ok(())
    })
}

/// Creates a backend for an OpenAI-compatible chat completions API, with
/// the default retry policy. A NULL `api_key` reads `PAVE_API_KEY`.
///
/// # Safety
/// String arguments must be valid NUL-terminated strings (`api_key` may be
/// NULL) and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pave_backend_live_new(
    base_url: *const c_char,
    model: *const c_char,
    api_key: *const c_char,
    timeout_ms: u64,
    out: *mut *mut PaveBackend,
) -> PaveStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let base_url = str_arg(base_url, "base_url")?;
        let model = str_arg(model, "model")?;
        if timeout_ms == 0 {
            return Err(Failure::new(
                PaveStatus::InvalidArgument,
                "timeout_ms must be positive",
            ));
        }
        let timeout = Duration::from_millis(timeout_ms);
        let live = if api_key.is_null() {
            LiveBackend::from_env(base_url, model, timeout)
        } else {
            LiveBackend::new(base_url, model, str_arg(api_key, "api_key")?, timeout)
        }
        .map_err(|e| Failure::new(PaveStatus::BackendError, e.to_string()))?;
        *out = wrap_backend(RetryingBackend::new(live, RetryPolicy::default()));
        Ok(())
    })
}

/// Calls made through the backend so far; 0 for NULL.
///
/// # Safety
/// `backend` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pave_backend_calls(backend: *const PaveBackend) -> u64 {
    backend.as_ref().map_or(0, |b| b.calls.get())
}

/// # Safety
/// `backend` must be NULL or a handle not yet freed. Pipelines created from
/// it keep their own reference and remain usable.
#[no_mangle]
pub unsafe extern "C" fn pave_backend_free(backend: *mut PaveBackend) {
    if !backend.is_null() {
        drop(Box::from_raw(backend));
    }
}

/// Creates a pipeline. `config_json` may be NULL for defaults, or a JSON
/// object overriding any of `tau`, `variant`, `max_facts`, `max_revisions`,
/// `temperature`, `seed`, `store_prompts`.
///
/// # Safety
/// `backend` must be a live handle, `config_json` NULL or a valid string,
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pave_pipeline_new(
    backend: *const PaveBackend,
    config_json: *const c_char,
    out: *mut *mut PavePipeline,
) -> PaveStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let backend = backend
            .as_ref()
            .ok_or_else(|| Failure::new(PaveStatus::NullPointer, "backend is null"))?;
        let config = if config_json.is_null() {
            PipelineConfig::default()
        } else {
            config_from_json(str_arg(config_json, "config_json")?)?
        };
        config
            .validate()
            .map_err(|e| Failure::new(PaveStatus::InvalidConfig, e.to_string()))?;
        let prompter = Prompter::new(TemplateSet::builtin(), config.temperature, config.seed);
        *out = Box::into_raw(Box::new(PavePipeline {
            config,
            prompter,
            backend: Arc::clone(&backend.inner),
        }));
        Ok(())
    })
}

fn config_from_json(json: &str) -> Result<PipelineConfig, Failure> {
    let invalid = |e: serde_json::Error| {
        Failure::new(PaveStatus::InvalidConfig, format!("invalid config: {e}"))
    };
    let overrides: serde_json::Value = serde_json::from_str(json).map_err(invalid)?;
    let serde_json::Value::Object(overrides) = overrides else {
        return Err(Failure::new(
            PaveStatus::InvalidConfig,
            "config must be a JSON object",
        ));
    };
    let mut merged = serde_json::to_value(PipelineConfig::default()).map_err(invalid)?;
    let fields = merged
        .as_object_mut()
        .expect("config serializes to an object");
    for (k, v) in overrides {
        if !fields.contains_key(&k) {
            return Err(Failure::new(
                PaveStatus::InvalidConfig,
                format!("unknown config key `{k}`"),
            ));
        }
        fields.insert(k, v);
    }
    serde_json::from_value(merged).map_err(invalid)
}

/// # Safety
/// `pipeline` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pave_pipeline_free(pipeline: *mut PavePipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Runs the configured variant on one question with its passages. `task`
/// is a [`PaveTaskKind`] value.
///
/// # Safety
/// `pipeline` must be a live handle; `question_id` and `question` valid
/// strings; `passages` an array of `n_passages` valid strings; `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pave_run(
    pipeline: *const PavePipeline,
    question_id: *const c_char,
    question: *const c_char,
    task: i32,
    passages: *const *const c_char,
    n_passages: usize,
    out: *mut *mut PaveOutcome,
) -> PaveStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let p = pipeline
            .as_ref()
            .ok_or_else(|| Failure::new(PaveStatus::NullPointer, "pipeline is null"))?;
        let id = str_arg(question_id, "question_id")?;
        let text = str_arg(question, "question")?;
        if passages.is_null() && n_passages > 0 {
            return Err(Failure::new(PaveStatus::NullPointer, "passages is null"));
        }
        let mut texts = Vec::with_capacity(n_passages);
        for i in 0..n_passages {
            texts.push(str_arg(*passages.add(i), &format!("passages[{i}]"))?.to_string());
        }
        let task = match task {
            t if t == PaveTaskKind::Label3 as i32 => TaskKind::Label3,
            t if t == PaveTaskKind::Span as i32 => TaskKind::Span,
            other => {
                return Err(Failure::new(
                    PaveStatus::InvalidArgument,
                    format!("unknown task kind {other}"),
                ))
            }
        };
        let bad = |e: pave_core::model::ModelError| {
            Failure::new(PaveStatus::InvalidArgument, e.to_string())
        };
        let q = Question::new(id, text, task).map_err(bad)?;
        let ctx = EvidenceContext::new(texts).map_err(bad)?;

        let pipeline = Pipeline::new(p.config.clone(), p.prompter.clone(), &*p.backend)
            .map_err(|e| Failure::new(PaveStatus::InvalidConfig, e.to_string()))?;
        let outcome = pipeline.run(&q, &ctx).map_err(|f| {
            let status = match f.error {
                pave_core::PipelineError::Backend { .. } => PaveStatus::BackendError,
                _ => PaveStatus::PipelineError,
            };
            Failure::new(status, f.error.to_string())
        })?;
        let to_c = |s: String| CString::new(s.replace('\0', " ")).expect("NUL bytes removed");
        *out = Box::into_raw(Box::new(PaveOutcome {
            final_answer: to_c(outcome.final_answer.text.clone()),
            trace_json: to_c(outcome.trace.to_json_line()),
            was_revised: outcome.final_answer.was_revised,
            backend_calls: outcome.final_answer.backend_calls,
            support: outcome
                .trace
                .support
                .as_ref()
                .map(|s| (s.score, s.parse_ok)),
        }));
        Ok(())
    })
}

/// Final answer text; NULL for a NULL handle.
///
/// # Safety
/// `outcome` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pave_outcome_final_answer(outcome: *const PaveOutcome) -> *const c_char {
    outcome
        .as_ref()
        .map_or(ptr::null(), |o| o.final_answer.as_ptr())
}

/// The audit trace as one line of JSON; NULL for a NULL handle.
///
/// # Safety
/// `outcome` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pave_outcome_trace_json(outcome: *const PaveOutcome) -> *const c_char {
    outcome
        .as_ref()
        .map_or(ptr::null(), |o| o.trace_json.as_ptr())
}

/// # Safety
/// `outcome` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pave_outcome_was_revised(outcome: *const PaveOutcome) -> bool {
    outcome.as_ref().is_some_and(|o| o.was_revised)
}

/// Stage calls made for the example, format retries excluded.
///
/// # Safety
/// `outcome` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pave_outcome_backend_calls(outcome: *const PaveOutcome) -> u32 {
    outcome.as_ref().map_or(0, |o| o.backend_calls)
}

/// Support score of the draft. Returns `Undefined` for variants that do
/// not score.
///
/// # Safety
/// `outcome` must be a live handle; `score` and `parse_ok` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pave_outcome_support(
    outcome: *const PaveOutcome,
    score: *mut f64,
    parse_ok: *mut bool,
) -> PaveStatus {
    guard(|| {
        let o = outcome
            .as_ref()
            .ok_or_else(|| Failure::new(PaveStatus::NullPointer, "outcome is null"))?;
        let score = out_arg(score, "score")?;
        let parse_ok = out_arg(parse_ok, "parse_ok")?;
        let (s, ok) = o
            .support
            .ok_or_else(|| Failure::new(PaveStatus::Undefined, "variant does not score support"))?;
        *score = s;
        *parse_ok = ok;
        Ok(())
    })
}

/// # Safety
/// `outcome` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pave_outcome_free(outcome: *mut PaveOutcome) {
    if !outcome.is_null() {
        drop(Box::from_raw(outcome));
    }
}

/// True when a draft with support `score` is kept at threshold `tau`.
#[no_mangle]
pub extern "C" fn pave_gate_keep(score: f64, tau: f64) -> bool {
    gate_score(score, tau) == FinalizationDecision::Keep
}

/// Parses support-scorer output. Unparseable text yields score 0 with
/// `parse_ok` false and still returns `Ok`.
///
/// # Safety
/// `text` must be a valid string; `score` and `parse_ok` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pave_parse_score(
    text: *const c_char,
    score: *mut f64,
    parse_ok: *mut bool,
) -> PaveStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let score = out_arg(score, "score")?;
        let parse_ok = out_arg(parse_ok, "parse_ok")?;
        let s = parse_score(text);
        *score = s.score;
        *parse_ok = s.parse_ok;
        Ok(())
    })
}

/// Accuracy percentage rounded to 2 decimals.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pave_accuracy_pct(correct: u64, n: u64, out: *mut f64) -> PaveStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if n == 0 || correct > n {
            return Err(Failure::new(
                PaveStatus::InvalidArgument,
                "need 0 <= correct <= n and n > 0",
            ));
        }
        *out = accuracy_pct(correct as usize, n as usize);
        Ok(())
    })
}

/// Relative error reduction of `new_pct` over `baseline_pct`, 1 decimal.
/// Returns `Undefined` for a perfect baseline.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pave_relative_error_reduction(
    baseline_pct: f64,
    new_pct: f64,
    out: *mut f64,
) -> PaveStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if !(0.0..=100.0).contains(&baseline_pct) || !(0.0..=100.0).contains(&new_pct) {
            return Err(Failure::new(
                PaveStatus::InvalidArgument,
                "accuracies must lie in [0,100]",
            ));
        }
        *out = relative_error_reduction(baseline_pct, new_pct).map_err(|e| match e {
            EvalError::UndefinedAtPerfectBaseline => {
                Failure::new(PaveStatus::Undefined, e.to_string())
            }
            other => Failure::new(PaveStatus::InvalidArgument, other.to_string()),
        })?;
        Ok(())
    })
}
