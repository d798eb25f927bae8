//! Answer-level accuracy, relative error reduction, paired transition
//! analysis, and answer-length diagnostics over prediction logs.
//!
//! Presentation precision: accuracies to 2 decimals, reductions and bucket
//! accuracies to 1 decimal, both rounded half away from zero. Rounding is
//! done in integer arithmetic so printed values are exact.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError};
use crate::dataset::{normalize_label, ExampleRecord, Label, PredictionRecord};
use crate::model::{TaskKind, Variant};
use crate::pipeline::DatasetRun;
use crate::prompting::Prompter;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no predictions to evaluate")]
    EmptyInput,
    #[error("relative error reduction is undefined for a perfect baseline")]
    UndefinedAtPerfectBaseline,
    #[error("prediction logs cover different ids: {0:?}")]
    IdMismatch(Vec<String>),
    #[error("duplicate id `{0}` in prediction log")]
    DuplicateId(String),
    #[error("dataset `{0}` already has results for variant {1}")]
    DuplicateResult(String, Variant),
    #[error("predictions mix variants {0} and {1}")]
    MixedVariants(Variant, Variant),
    #[error("writing report {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// `round(num / den)` with halves rounded away from zero. `den > 0`.
fn div_round(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    let q = (2 * num.abs() + den) / (2 * den);
    if num < 0 {
        -q
    } else {
        q
    }
}

fn to_hundredths(pct: f64) -> i128 {
    (pct * 100.0).round() as i128
}

/// `100 * correct / n`, rounded to 2 decimals.
pub fn accuracy_pct(correct: usize, n: usize) -> f64 {
    assert!(n > 0, "accuracy over zero examples");
    div_round(10_000 * correct as i128, n as i128) as f64 / 100.0
}

/// Percentage rounded to 1 decimal.
fn pct_1dp(num: usize, den: usize) -> f64 {
    div_round(1_000 * num as i128, den as i128) as f64 / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub variant: Variant,
    pub n: usize,
    pub correct: usize,
    pub accuracy_pct: f64,
}

impl EvalResult {
    pub fn accuracy_display(&self) -> String {
        format!("{:.2}", self.accuracy_pct)
    }
}

/// Accuracy over predictions that all belong to one variant.
pub fn accuracy(predictions: &[PredictionRecord]) -> Result<EvalResult, EvalError> {
    let first = predictions.first().ok_or(EvalError::EmptyInput)?;
    if let Some(other) = predictions.iter().find(|p| p.variant != first.variant) {
        return Err(EvalError::MixedVariants(first.variant, other.variant));
    }
    let correct = predictions.iter().filter(|p| p.correct).count();
    Ok(EvalResult {
        variant: first.variant,
        n: predictions.len(),
        correct,
        accuracy_pct: accuracy_pct(correct, predictions.len()),
    })
}

/// Accuracy per variant, in variant order.
pub fn accuracy_by_variant(predictions: &[PredictionRecord]) -> Result<Vec<EvalResult>, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut groups: BTreeMap<Variant, Vec<PredictionRecord>> = BTreeMap::new();
    for p in predictions {
        groups.entry(p.variant).or_default().push(p.clone());
    }
    groups.values().map(|g| accuracy(g)).collect()
}

/// Unrounded `100 (new - base) / (100 - base)`.
pub fn relative_error_reduction_exact(
    baseline_acc_pct: f64,
    new_acc_pct: f64,
) -> Result<f64, EvalError> {
    if baseline_acc_pct >= 100.0 {
        return Err(EvalError::UndefinedAtPerfectBaseline);
    }
    Ok(100.0 * (new_acc_pct - baseline_acc_pct) / (100.0 - baseline_acc_pct))
}

/// Relative error reduction of `new` over `baseline`, rounded to 1 decimal.
/// Inputs are accuracy percentages at 2-decimal precision.
pub fn relative_error_reduction(baseline_acc_pct: f64, new_acc_pct: f64) -> Result<f64, EvalError> {
    let base = to_hundredths(baseline_acc_pct);
    let new = to_hundredths(new_acc_pct);
    if base >= 10_000 {
        return Err(EvalError::UndefinedAtPerfectBaseline);
    }
    Ok(div_round(1_000 * (new - base), 10_000 - base) as f64 / 10.0)
}

/// Paired outcomes of system A versus system B on a shared id set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub both_correct: usize,
    /// Correct under A, wrong under B: errors B introduced.
    pub a_only_correct: usize,
    /// Wrong under A, correct under B: errors B corrected.
    pub b_only_correct: usize,
    pub both_wrong: usize,
}

impl TransitionMatrix {
    pub fn total(&self) -> usize {
        self.both_correct + self.a_only_correct + self.b_only_correct + self.both_wrong
    }

    pub fn errors_a(&self) -> usize {
        self.b_only_correct + self.both_wrong
    }

    pub fn errors_b(&self) -> usize {
        self.a_only_correct + self.both_wrong
    }

    /// `100 (errors_a - errors_b) / errors_a`, 1 decimal; `None` when A made
    /// no errors.
    pub fn error_reduction_pct(&self) -> Option<f64> {
        let ea = self.errors_a();
        (ea > 0).then(|| {
            div_round(1_000 * (ea as i128 - self.errors_b() as i128), ea as i128) as f64 / 10.0
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub n: usize,
    pub matrix: TransitionMatrix,
    pub error_reduction_pct: Option<f64>,
}

fn index_by_id(preds: &[PredictionRecord]) -> Result<HashMap<&str, &PredictionRecord>, EvalError> {
    let mut map = HashMap::with_capacity(preds.len());
    for p in preds {
        if map.insert(p.id.as_str(), p).is_some() {
            return Err(EvalError::DuplicateId(p.id.clone()));
        }
    }
    Ok(map)
}

/// Cross-tabulates correctness of two logs over an identical id set.
pub fn paired_transition(
    preds_a: &[PredictionRecord],
    preds_b: &[PredictionRecord],
) -> Result<PairedComparison, EvalError> {
    let a = index_by_id(preds_a)?;
    let b = index_by_id(preds_b)?;
    let ids_a: HashSet<&str> = a.keys().copied().collect();
    let ids_b: HashSet<&str> = b.keys().copied().collect();
    if ids_a != ids_b {
        let mut diff: Vec<String> = ids_a
            .symmetric_difference(&ids_b)
            .map(|s| (*s).to_string())
            .collect();
        diff.sort();
        return Err(EvalError::IdMismatch(diff));
    }
    if a.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut m = TransitionMatrix::default();
    for (id, pa) in &a {
        match (pa.correct, b[id].correct) {
            (true, true) => m.both_correct += 1,
            (true, false) => m.a_only_correct += 1,
            (false, true) => m.b_only_correct += 1,
            (false, false) => m.both_wrong += 1,
        }
    }
    Ok(PairedComparison {
        n: m.total(),
        error_reduction_pct: m.error_reduction_pct(),
        matrix: m,
    })
}

/// Median; even counts average the middle two.
pub fn median(values: &[usize]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid] as f64
    } else {
        (v[mid - 1] + v[mid]) as f64 / 2.0
    })
}

/// Gold-length bucket names, by whitespace token count.
pub const LENGTH_BUCKETS: [&str; 3] = ["1-2", "3-4", "5+"];

pub fn length_bucket(gold_tokens: usize) -> &'static str {
    match gold_tokens {
        0..=2 => LENGTH_BUCKETS[0],
        3..=4 => LENGTH_BUCKETS[1],
        _ => LENGTH_BUCKETS[2],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    pub n: usize,
    pub correct: usize,
    /// 1 decimal; `None` for an empty bucket.
    pub accuracy_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub n: usize,
    pub median_pred_tokens: f64,
    pub median_gold_tokens: f64,
    pub buckets: BTreeMap<String, BucketStats>,
}

pub fn length_diagnostics(predictions: &[PredictionRecord]) -> Result<LengthStats, EvalError> {
    let pred_lens: Vec<usize> = predictions.iter().map(|p| p.answer_token_len).collect();
    let gold_lens: Vec<usize> = predictions.iter().map(|p| p.gold_token_len).collect();
    let median_pred_tokens = median(&pred_lens).ok_or(EvalError::EmptyInput)?;
    let median_gold_tokens = median(&gold_lens).ok_or(EvalError::EmptyInput)?;

    let mut buckets: BTreeMap<String, BucketStats> = LENGTH_BUCKETS
        .iter()
        .map(|b| {
            (
                (*b).to_string(),
                BucketStats {
                    n: 0,
                    correct: 0,
                    accuracy_pct: None,
                },
            )
        })
        .collect();
    for p in predictions {
        let b = buckets
            .get_mut(length_bucket(p.gold_token_len))
            .expect("bucket exists");
        b.n += 1;
        b.correct += usize::from(p.correct);
    }
    for b in buckets.values_mut() {
        b.accuracy_pct = (b.n > 0).then(|| pct_1dp(b.correct, b.n));
    }
    Ok(LengthStats {
        n: predictions.len(),
        median_pred_tokens,
        median_gold_tokens,
        buckets,
    })
}

/// How span correctness labels are produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    #[default]
    Normalized,
    ModelJudge,
}

impl JudgeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            JudgeMode::Normalized => "normalized",
            JudgeMode::ModelJudge => "model_judge",
        }
    }
}

impl std::str::FromStr for JudgeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "normalized" => Ok(JudgeMode::Normalized),
            "model_judge" => Ok(JudgeMode::ModelJudge),
            other => Err(format!(
                "unknown judge mode `{other}` (expected normalized or model_judge)"
            )),
        }
    }
}

/// PubMedQA-style exact agreement after label normalization.
pub fn judge_label3(predicted: &str, gold: &str) -> bool {
    match (normalize_label(predicted), normalize_label(gold)) {
        (Some(p), Some(g)) => p == g,
        _ => false,
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'
                | '\u{2019}'
                | '\u{201c}'
                | '\u{201d}'
                | '\u{2013}'
                | '\u{2014}'
                | '\u{2026}'
        )
}

/// Lowercase, drop punctuation, drop the articles a/an/the, collapse
/// whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !is_punct(*c))
        .collect();
    lowered
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn judge_span_normalized(predicted: &str, gold: &str, alternatives: &[String]) -> bool {
    let p = normalize_answer(predicted);
    std::iter::once(gold)
        .chain(alternatives.iter().map(String::as_str))
        .any(|g| normalize_answer(g) == p)
}

/// Reads a yes/no equivalence verdict; anything but a clear yes is false.
pub fn parse_judge_verdict(text: &str) -> bool {
    let first = text.split_whitespace().next().unwrap_or("");
    normalize_label(first) == Some(Label::Yes)
}

/// Span correctness judge.
pub enum SpanJudge<'a> {
    Normalized,
    Model {
        prompter: &'a Prompter,
        backend: &'a dyn Backend,
    },
}

impl SpanJudge<'_> {
    pub fn mode(&self) -> JudgeMode {
        match self {
            SpanJudge::Normalized => JudgeMode::Normalized,
            SpanJudge::Model { .. } => JudgeMode::ModelJudge,
        }
    }

    pub fn judge(
        &self,
        question: &str,
        predicted: &str,
        gold: &str,
        alternatives: &[String],
    ) -> Result<bool, BackendError> {
        match self {
            SpanJudge::Normalized => Ok(judge_span_normalized(predicted, gold, alternatives)),
            SpanJudge::Model { prompter, backend } => {
                if predicted.trim().is_empty() {
                    return Ok(false);
                }
                let req = prompter.render_judge(question, predicted, gold, alternatives);
                Ok(parse_judge_verdict(&backend.complete(&req)?.text))
            }
        }
    }
}

/// Correctness of a prediction for a dataset record.
pub fn judge_record(
    record: &ExampleRecord,
    predicted: &str,
    judge: &SpanJudge<'_>,
) -> Result<bool, BackendError> {
    match record.task_kind {
        TaskKind::Label3 => Ok(judge_label3(predicted, &record.gold)),
        TaskKind::Span => judge.judge(
            &record.question,
            predicted,
            &record.gold,
            record.alternatives(),
        ),
    }
}

/// Builds the prediction log for a run. Failed examples are recorded with an
/// empty prediction and count as incorrect.
pub fn predictions_from_run(
    records: &[ExampleRecord],
    run: &DatasetRun,
    variant: Variant,
    judge: &SpanJudge<'_>,
) -> Result<Vec<PredictionRecord>, BackendError> {
    records
        .iter()
        .zip(&run.results)
        .map(|(record, result)| {
            debug_assert_eq!(record.id, result.id);
            let predicted = match &result.result {
                Ok(outcome) => outcome.final_answer.text.as_str(),
                Err(_) => "",
            };
            let correct = !predicted.is_empty() && judge_record(record, predicted, judge)?;
            Ok(PredictionRecord::new(
                record.id.clone(),
                variant,
                predicted,
                &record.gold,
                correct,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub dataset: String,
    #[serde(flatten)]
    pub result: EvalResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionEntry {
    pub dataset: String,
    pub variant: Variant,
    pub baseline_accuracy_pct: f64,
    pub accuracy_pct: f64,
    pub relative_error_reduction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub label: String,
    #[serde(flatten)]
    pub comparison: PairedComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthEntry {
    pub label: String,
    #[serde(flatten)]
    pub stats: LengthStats,
}

/// Variants × datasets accuracy table plus diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub judge_mode: JudgeMode,
    pub results: Vec<ResultEntry>,
    pub relative_error_reductions: Vec<ReductionEntry>,
    pub comparisons: Vec<ComparisonEntry>,
    pub lengths: Vec<LengthEntry>,
}

impl Report {
    pub fn new(judge_mode: JudgeMode) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            judge_mode,
            results: Vec::new(),
            relative_error_reductions: Vec::new(),
            comparisons: Vec::new(),
            lengths: Vec::new(),
        }
    }

    /// Adds per-variant accuracies for one dataset. Logs of one dataset may
    /// arrive in several calls; reductions against the baseline are
    /// recomputed whenever both sides are present.
    pub fn add_dataset(
        &mut self,
        dataset: &str,
        predictions: &[PredictionRecord],
    ) -> Result<(), EvalError> {
        let results = accuracy_by_variant(predictions)?;
        for r in &results {
            if self
                .results
                .iter()
                .any(|e| e.dataset == dataset && e.result.variant == r.variant)
            {
                return Err(EvalError::DuplicateResult(dataset.to_string(), r.variant));
            }
        }
        self.results
            .extend(results.into_iter().map(|result| ResultEntry {
                dataset: dataset.to_string(),
                result,
            }));
        self.refresh_reductions(dataset);
        Ok(())
    }

    fn refresh_reductions(&mut self, dataset: &str) {
        self.relative_error_reductions
            .retain(|r| r.dataset != dataset);
        let of_dataset = || self.results.iter().filter(|e| e.dataset == dataset);
        let Some(base) = of_dataset()
            .find(|e| e.result.variant == Variant::Baseline)
            .map(|e| e.result.accuracy_pct)
        else {
            return;
        };
        let mut entries: Vec<ReductionEntry> = of_dataset()
            .filter(|e| e.result.variant != Variant::Baseline)
            .filter_map(|e| {
                let red = relative_error_reduction(base, e.result.accuracy_pct).ok()?;
                Some(ReductionEntry {
                    dataset: dataset.to_string(),
                    variant: e.result.variant,
                    baseline_accuracy_pct: base,
                    accuracy_pct: e.result.accuracy_pct,
                    relative_error_reduction_pct: red,
                })
            })
            .collect();
        entries.sort_by_key(|r| r.variant);
        self.relative_error_reductions.extend(entries);
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty() && self.comparisons.is_empty() && self.lengths.is_empty()
    }

    /// Aligned plain-text accuracy table: variants as rows, datasets as
    /// columns.
    pub fn render_table(&self) -> String {
        let mut datasets: Vec<&str> = Vec::new();
        for e in &self.results {
            if !datasets.contains(&e.dataset.as_str()) {
                datasets.push(&e.dataset);
            }
        }
        let variants: Vec<Variant> = Variant::ALL
            .into_iter()
            .filter(|v| self.results.iter().any(|e| e.result.variant == *v))
            .collect();
        let vw = variants
            .iter()
            .map(|v| v.as_str().len())
            .chain(["variant".len()])
            .max()
            .unwrap_or(7);
        let widths: Vec<usize> = datasets.iter().map(|d| d.len().max(6)).collect();

        let mut out = String::new();
        let _ = write!(out, "{:<vw$}", "variant");
        for (d, w) in datasets.iter().zip(&widths) {
            let _ = write!(out, "  {d:>w$}");
        }
        out.push('\n');
        for v in &variants {
            let _ = write!(out, "{:<vw$}", v.as_str());
            for (d, w) in datasets.iter().zip(&widths) {
                let cell = self
                    .results
                    .iter()
                    .find(|e| e.dataset == *d && e.result.variant == *v)
                    .map_or_else(|| "-".to_string(), |e| e.result.accuracy_display());
                let _ = write!(out, "  {cell:>w$}");
            }
            out.push('\n');
        }
        out
    }
}

/// Writes the report as JSON and returns the plain-text table.
pub fn emit_report(report: &Report, path: &Path) -> Result<String, EvalError> {
    if report.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let json = serde_json::to_string_pretty(report).expect("report serialization is infallible");
    std::fs::write(path, json + "\n").map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(report.render_table())
}

pub fn read_report(path: &Path) -> anyhow::Result<Report> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn pred(id: &str, variant: Variant, correct: bool) -> PredictionRecord {
        PredictionRecord {
            id: id.into(),
            variant,
            predicted: "x".into(),
            correct,
            answer_token_len: 1,
            gold_token_len: 1,
        }
    }

    fn log(variant: Variant, correct: usize, n: usize) -> Vec<PredictionRecord> {
        (0..n)
            .map(|i| pred(&format!("e{i}"), variant, i < correct))
            .collect()
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(
            accuracy(&log(Variant::Pave, 733, 1000))
                .unwrap()
                .accuracy_display(),
            "73.30"
        );
        assert_eq!(
            accuracy(&log(Variant::Pave, 951, 1000))
                .unwrap()
                .accuracy_display(),
            "95.10"
        );
        assert_eq!(
            accuracy(&log(Variant::Pave, 0, 10))
                .unwrap()
                .accuracy_display(),
            "0.00"
        );
        assert!(matches!(accuracy(&[]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn accuracy_rounds_half_up() {
        // 1/8 = 12.5% exactly; 1/800 = 0.125% -> 0.13
        assert_eq!(accuracy_pct(1, 800), 0.13);
        assert_eq!(accuracy_pct(2, 3), 66.67);
        assert_eq!(accuracy_pct(1, 3), 33.33);
    }

    #[test]
    fn mixed_variants_rejected() {
        let mut preds = log(Variant::Pave, 1, 2);
        preds.push(pred("z", Variant::Baseline, true));
        assert!(matches!(
            accuracy(&preds),
            Err(EvalError::MixedVariants(..))
        ));
        assert_eq!(accuracy_by_variant(&preds).unwrap().len(), 2);
    }

    #[test]
    fn reduction_examples() {
        assert_eq!(relative_error_reduction(62.40, 95.10).unwrap(), 87.0);
        assert_eq!(relative_error_reduction(71.20, 73.30).unwrap(), 7.3);
        assert_eq!(relative_error_reduction(50.0, 50.0).unwrap(), 0.0);
        assert_eq!(relative_error_reduction(71.20, 69.80).unwrap(), -4.9);
        assert!(matches!(
            relative_error_reduction(100.0, 100.0),
            Err(EvalError::UndefinedAtPerfectBaseline)
        ));
    }

    #[test]
    fn paired_examples() {
        let a = log(Variant::SupportScoring, 3, 5);
        let same = paired_transition(&a, &a).unwrap();
        assert_eq!(same.matrix.a_only_correct, 0);
        assert_eq!(same.matrix.b_only_correct, 0);
        assert_eq!(same.error_reduction_pct, Some(0.0));

        let b: Vec<_> = (0..5)
            .map(|i| pred(&format!("other{i}"), Variant::Pave, true))
            .collect();
        match paired_transition(&a, &b) {
            Err(EvalError::IdMismatch(ids)) => assert_eq!(ids.len(), 10),
            other => panic!("{other:?}"),
        }
        let mut dup = a.clone();
        dup.push(a[0].clone());
        assert!(matches!(
            paired_transition(&dup, &a),
            Err(EvalError::DuplicateId(_))
        ));
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[1, 2, 3]), Some(2.0));
        assert_eq!(median(&[4, 1, 3, 2]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn bucket_accuracy_one_decimal() {
        let preds: Vec<_> = (0..30)
            .map(|i| PredictionRecord {
                gold_token_len: 3,
                ..pred(&format!("b{i}"), Variant::Pave, i < 29)
            })
            .collect();
        let stats = length_diagnostics(&preds).unwrap();
        assert_eq!(stats.buckets["3-4"].accuracy_pct, Some(96.7));
        assert_eq!(stats.buckets["1-2"].accuracy_pct, None);
        assert!(matches!(
            length_diagnostics(&[]),
            Err(EvalError::EmptyInput)
        ));
    }

    #[test]
    fn label3_judging() {
        assert!(judge_label3("Yes.", "yes"));
        assert!(!judge_label3("maybe", "no"));
        assert!(!judge_label3("probably", "maybe"));
    }

    #[test]
    fn span_judging() {
        assert!(judge_span_normalized(
            "The Eiffel Tower",
            "Eiffel Tower",
            &[]
        ));
        assert!(judge_span_normalized("eiffel tower.", "Eiffel Tower", &[]));
        assert!(!judge_span_normalized("the Louvre", "Eiffel Tower", &[]));
        assert!(judge_span_normalized("1889", "in 1887", &["1889".into()]));
    }

    #[test]
    fn model_judge_uses_backend_verdict() {
        use crate::backend::ScriptedBackend;
        let prompter = Prompter::default();
        let backend = ScriptedBackend::with_sequence(["Yes.", "no", "I think so"]);
        let judge = SpanJudge::Model {
            prompter: &prompter,
            backend: &backend,
        };
        assert!(judge.judge("q", "Paris", "Paris, France", &[]).unwrap());
        assert!(!judge.judge("q", "Lyon", "Paris", &[]).unwrap());
        assert!(!judge.judge("q", "Paris", "Paris", &[]).unwrap());
        assert!(!judge.judge("q", "", "Paris", &[]).unwrap());
        assert!(matches!(
            judge.judge("q", "Paris", "Paris", &[]),
            Err(BackendError::ScriptExhausted { .. })
        ));
        assert_eq!(judge.mode(), JudgeMode::ModelJudge);
    }

    #[test]
    fn report_table_and_round_trip() {
        let mut report = Report::new(JudgeMode::Normalized);
        let mut preds = log(Variant::Baseline, 624, 1000);
        preds.extend(log(Variant::Pave, 951, 1000));
        report.add_dataset("squad", &preds).unwrap();
        assert_eq!(report.results.len(), 2);
        assert_eq!(
            report.relative_error_reductions[0].relative_error_reduction_pct,
            87.0
        );

        let mut split = Report::new(JudgeMode::Normalized);
        split
            .add_dataset("squad", &log(Variant::Pave, 951, 1000))
            .unwrap();
        assert!(split.relative_error_reductions.is_empty());
        split
            .add_dataset("squad", &log(Variant::Baseline, 624, 1000))
            .unwrap();
        assert_eq!(
            split.relative_error_reductions,
            report.relative_error_reductions
        );
        assert!(matches!(
            split.add_dataset("squad", &log(Variant::Pave, 1, 2)),
            Err(EvalError::DuplicateResult(..))
        ));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let table = emit_report(&report, &path).unwrap();
        assert!(table.contains("62.40"));
        assert!(table.contains("95.10"));
        assert_eq!(read_report(&path).unwrap(), report);

        assert!(matches!(
            emit_report(&Report::new(JudgeMode::Normalized), &path),
            Err(EvalError::EmptyInput)
        ));
    }

    proptest! {
        #[test]
        fn accuracy_is_permutation_invariant(
            flags in prop::collection::vec(any::<bool>(), 1..200),
            seed in any::<u64>(),
        ) {
            let preds: Vec<_> = flags.iter().enumerate()
                .map(|(i, c)| pred(&i.to_string(), Variant::Pave, *c)).collect();
            let mut shuffled = preds.clone();
            // deterministic Fisher-Yates driven by the seed
            let mut state = seed | 1;
            for i in (1..shuffled.len()).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                shuffled.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let recount = flags.iter().filter(|c| **c).count();
            let a = accuracy(&preds).unwrap();
            let b = accuracy(&shuffled).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.correct, recount);
            let exact = 100.0 * recount as f64 / flags.len() as f64;
            prop_assert!((a.accuracy_pct - exact).abs() <= 0.005 + 1e-9);
        }

        #[test]
        fn reduction_properties(base_h in 0u32..9_999, new_h in 0u32..=10_000, delta in 1u32..500) {
            let base = f64::from(base_h) / 100.0;
            let new = f64::from(new_h) / 100.0;
            prop_assert_eq!(relative_error_reduction(base, base).unwrap(), 0.0);
            prop_assert_eq!(relative_error_reduction(base, 100.0).unwrap(), 100.0);
            let higher = new + f64::from(delta) / 100.0;
            let lo = relative_error_reduction_exact(base, new).unwrap();
            let hi = relative_error_reduction_exact(base, higher).unwrap();
            prop_assert!(hi > lo);
            prop_assert!(relative_error_reduction(base, higher).unwrap() >= relative_error_reduction(base, new).unwrap());
        }

        #[test]
        fn transition_cells_sum_and_recover_b_accuracy(
            pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..150)
        ) {
            let a: Vec<_> = pairs.iter().enumerate().map(|(i, (ca, _))| pred(&i.to_string(), Variant::SupportScoring, *ca)).collect();
            let b: Vec<_> = pairs.iter().enumerate().map(|(i, (_, cb))| pred(&i.to_string(), Variant::Pave, *cb)).collect();
            let cmp = paired_transition(&a, &b).unwrap();
            prop_assert_eq!(cmp.matrix.total(), pairs.len());
            let b_correct = cmp.matrix.both_correct + cmp.matrix.b_only_correct;
            prop_assert_eq!(accuracy_pct(b_correct, pairs.len()), accuracy(&b).unwrap().accuracy_pct);
        }

        #[test]
        fn span_judge_is_symmetric(p in "[A-Za-z .,'-]{0,20}", g in "[A-Za-z .,'-]{0,20}") {
            prop_assert_eq!(judge_span_normalized(&p, &g, &[]), judge_span_normalized(&g, &p, &[]));
        }
    }
}
