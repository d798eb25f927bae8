//! Best-effort converters from public dataset releases into the JSONL
//! record schema.
//!
//! Supported inputs: the PubMedQA labeled file (`ori_pqal.json`, an object
//! keyed by PMID) and SQuAD v1.1 JSON. Subsets are drawn by seeded sampling
//! without replacement; sampled records keep their source order.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::dataset::{normalize_label, ExampleRecord};
use crate::model::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    PubMedQa,
    Squad,
}

impl std::str::FromStr for SourceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pubmedqa" => Ok(SourceFormat::PubMedQa),
            "squad" => Ok(SourceFormat::Squad),
            other => Err(format!(
                "unknown source format `{other}` (expected pubmedqa or squad)"
            )),
        }
    }
}

pub fn convert_file(format: SourceFormat, path: &Path) -> Result<Vec<ExampleRecord>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match format {
        SourceFormat::PubMedQa => convert_pubmedqa(&text),
        SourceFormat::Squad => convert_squad(&text),
    }
}

/// Records ordered by PMID. Entries whose decision is not yes/no/maybe are
/// skipped.
pub fn convert_pubmedqa(json: &str) -> Result<Vec<ExampleRecord>> {
    let root: Map<String, Value> =
        serde_json::from_str(json).context("PubMedQA file is not a JSON object")?;
    let mut out = Vec::with_capacity(root.len());
    for (pmid, entry) in root {
        let question = entry
            .get("QUESTION")
            .and_then(Value::as_str)
            .with_context(|| format!("{pmid}: missing QUESTION"))?;
        let contexts: Vec<String> = entry
            .get("CONTEXTS")
            .and_then(Value::as_array)
            .with_context(|| format!("{pmid}: missing CONTEXTS"))?
            .iter()
            .filter_map(Value::as_str)
            .filter(|c| !c.trim().is_empty())
            .map(str::to_string)
            .collect();
        let decision = entry
            .get("final_decision")
            .and_then(Value::as_str)
            .unwrap_or("");
        let (Some(label), false) = (normalize_label(decision), contexts.is_empty()) else {
            continue;
        };
        out.push(ExampleRecord {
            id: pmid,
            task_kind: TaskKind::Label3,
            question: question.to_string(),
            contexts,
            gold: label.as_str().to_string(),
            gold_alternatives: None,
        });
    }
    Ok(out)
}

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<SquadArticle>,
}

#[derive(Deserialize)]
struct SquadArticle {
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    answers: Vec<SquadAnswer>,
}

#[derive(Deserialize)]
struct SquadAnswer {
    text: String,
}

/// One record per question, with the paragraph as the sole context. The
/// first answer is gold; other distinct answers become alternatives.
/// Unanswerable questions are skipped.
pub fn convert_squad(json: &str) -> Result<Vec<ExampleRecord>> {
    let file: SquadFile = serde_json::from_str(json).context("not a SQuAD JSON file")?;
    let mut out = Vec::new();
    for para in file.data.iter().flat_map(|a| &a.paragraphs) {
        if para.context.trim().is_empty() {
            continue;
        }
        for qa in &para.qas {
            let mut answers: Vec<String> = Vec::new();
            for a in &qa.answers {
                let t = a.text.trim();
                if !t.is_empty() && !answers.iter().any(|x| x == t) {
                    answers.push(t.to_string());
                }
            }
            if answers.is_empty() || qa.question.trim().is_empty() {
                continue;
            }
            let gold = answers.remove(0);
            out.push(ExampleRecord {
                id: qa.id.clone(),
                task_kind: TaskKind::Span,
                question: qa.question.trim().to_string(),
                contexts: vec![para.context.clone()],
                gold,
                gold_alternatives: (!answers.is_empty()).then_some(answers),
            });
        }
    }
    Ok(out)
}

/// Seeded sample of `n` records without replacement, in source order.
pub fn sample(records: Vec<ExampleRecord>, n: usize, seed: u64) -> Result<Vec<ExampleRecord>> {
    if n > records.len() {
        bail!(
            "requested {n} records but only {} are available",
            records.len()
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = rand::seq::index::sample(&mut rng, records.len(), n).into_vec();
    keep.sort_unstable();
    let mut keep = keep.into_iter().peekable();
    Ok(records
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| (keep.next_if_eq(&i).is_some()).then_some(r))
        .collect())
}
