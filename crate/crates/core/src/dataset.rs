//! QA records with their fixed retrieved contexts, and prediction logs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::{EvidenceContext, ModelError, Question, TaskKind, Variant};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: invalid field `{field}`: {reason}")]
    Schema {
        line: usize,
        field: String,
        reason: String,
    },
}

impl DatasetError {
    fn schema(line: usize, field: &str, reason: impl Into<String>) -> Self {
        DatasetError::Schema {
            line,
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// A normalized three-way label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Yes,
    No,
    Maybe,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Yes => "yes",
            Label::No => "no",
            Label::Maybe => "maybe",
        }
    }
}

/// Lowercases, strips surrounding punctuation and whitespace, then matches
/// yes/no/maybe exactly. Anything else is `None`.
pub fn normalize_label(text: &str) -> Option<Label> {
    let trimmed = text
        .trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .to_lowercase();
    match trimmed.as_str() {
        "yes" => Some(Label::Yes),
        "no" => Some(Label::No),
        "maybe" => Some(Label::Maybe),
        _ => None,
    }
}

/// Number of maximal non-whitespace runs.
pub fn whitespace_token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub task_kind: TaskKind,
    pub question: String,
    pub contexts: Vec<String>,
    pub gold: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_alternatives: Option<Vec<String>>,
}

impl ExampleRecord {
    pub fn to_question(&self) -> Result<Question, ModelError> {
        Question::new(self.id.clone(), self.question.clone(), self.task_kind)
    }

    pub fn to_context(&self) -> Result<EvidenceContext, ModelError> {
        EvidenceContext::new(self.contexts.iter().cloned())
    }

    pub fn alternatives(&self) -> &[String] {
        self.gold_alternatives.as_deref().unwrap_or(&[])
    }

    fn from_json(line: usize, value: Value) -> Result<Self, DatasetError> {
        let Value::Object(obj) = value else {
            return Err(DatasetError::schema(
                line,
                "<record>",
                "expected a JSON object",
            ));
        };
        let id = str_field(&obj, line, "id")?;
        let task_kind = str_field(&obj, line, "task_kind")?
            .parse::<TaskKind>()
            .map_err(|e| DatasetError::schema(line, "task_kind", e.to_string()))?;
        let question = str_field(&obj, line, "question")?;
        if question.trim().is_empty() {
            return Err(DatasetError::schema(line, "question", "empty"));
        }
        let contexts = str_list(&obj, line, "contexts")?
            .ok_or_else(|| DatasetError::schema(line, "contexts", "missing"))?;
        if contexts.is_empty() {
            return Err(DatasetError::schema(line, "contexts", "must be nonempty"));
        }
        if contexts.iter().any(|c| c.trim().is_empty()) {
            return Err(DatasetError::schema(
                line,
                "contexts",
                "contains an empty passage",
            ));
        }
        let mut gold = str_field(&obj, line, "gold")?;
        if task_kind == TaskKind::Label3 {
            gold = normalize_label(&gold)
                .ok_or_else(|| {
                    DatasetError::schema(line, "gold", format!("`{gold}` is not yes, no or maybe"))
                })?
                .as_str()
                .to_string();
        } else if gold.trim().is_empty() {
            return Err(DatasetError::schema(line, "gold", "empty"));
        }
        let gold_alternatives = str_list(&obj, line, "gold_alternatives")?;
        Ok(Self {
            id,
            task_kind,
            question,
            contexts,
            gold,
            gold_alternatives,
        })
    }
}

fn str_field(obj: &Map<String, Value>, line: usize, field: &str) -> Result<String, DatasetError> {
    match obj.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(DatasetError::schema(line, field, "expected a string")),
        None => Err(DatasetError::schema(line, field, "missing")),
    }
}

fn str_list(
    obj: &Map<String, Value>,
    line: usize,
    field: &str,
) -> Result<Option<Vec<String>>, DatasetError> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| DatasetError::schema(line, field, "expected strings"))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some),
        Some(_) => Err(DatasetError::schema(
            line,
            field,
            "expected an array of strings",
        )),
    }
}

/// Loads a JSONL dataset. Any malformed line rejects the whole file.
pub fn load_dataset(path: &Path) -> Result<Vec<ExampleRecord>, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    parse_dataset(BufReader::new(file)).map_err(|e| match e {
        DatasetError::Io { source, .. } => DatasetError::io(path, source),
        other => other,
    })
}

pub fn parse_dataset(reader: impl BufRead) -> Result<Vec<ExampleRecord>, DatasetError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: "<input>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line)
            .map_err(|e| DatasetError::schema(lineno, "<json>", e.to_string()))?;
        records.push(ExampleRecord::from_json(lineno, value)?);
    }
    Ok(records)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// One judged prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub variant: Variant,
    pub predicted: String,
    pub correct: bool,
    pub answer_token_len: usize,
    pub gold_token_len: usize,
}

impl PredictionRecord {
    pub fn new(
        id: impl Into<String>,
        variant: Variant,
        predicted: &str,
        gold: &str,
        correct: bool,
    ) -> Self {
        Self {
            id: id.into(),
            variant,
            predicted: predicted.to_string(),
            correct,
            answer_token_len: whitespace_token_count(predicted),
            gold_token_len: whitespace_token_count(gold),
        }
    }
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| DatasetError::schema(i + 1, "<prediction>", e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}
