use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Draft, FactList, SupportAssessment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseOutcome<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

impl<T> ParseOutcome<T> {
    fn new(value: T, warnings: Vec<String>) -> Self {
        Self { value, warnings }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no parsable fact line in decomposition output")]
    EmptyFactList,
    #[error("draft output is empty")]
    EmptyDraft,
}

const NUMBER: &str = r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)";

static NUMBERED_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d+)\s*[.)]\s*(.*)$").expect("valid regex"));
static BULLET: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:[-*\u{2022}]|\d+\s*[.)])\s+").expect("valid regex"));
static TRAILING_WEIGHT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"^(.*?)\s*\[\s*({NUMBER})\s*\]\s*$")).expect("valid regex")
});
static ANSWER_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[ \t]*\**answer\**[ \t]*:\**").expect("valid regex"));
static RATIONALE_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[ \t]*\**rationale\**[ \t]*:\**").expect("valid regex"));
static SUPPORT_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bsupport\s*:").expect("valid regex"));
static SCORE_VALUE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"^\s*({NUMBER})(?:\s*/\s*({NUMBER})|(%))?")).expect("valid regex")
});

/// Parses numbered decomposition output into a premise list.
///
/// Lines look like `N. fact` (or `N. fact [w]` when `weighted`). Unnumbered
/// lines are skipped, facts beyond `max_facts` are dropped, and weights are
/// clamped into [0,1]; each of these leaves a warning.
pub fn parse_fact_list(
    text: &str,
    weighted: bool,
    max_facts: usize,
) -> Result<ParseOutcome<FactList>, ParseError> {
    let mut warnings = Vec::new();
    let mut entries: Vec<(String, Option<f64>)> = Vec::new();
    let mut numbering_ok = true;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let Some(caps) = NUMBERED_LINE.captures(line) else {
            warnings.push(format!("ignored unnumbered line {}", lineno + 1));
            continue;
        };
        if caps[1].parse::<usize>().ok() != Some(entries.len() + 1) {
            numbering_ok = false;
        }
        let mut body = caps[2].trim().to_string();
        while let Some(m) = BULLET.find(&body) {
            body = body[m.end()..].trim_start().to_string();
        }

        let mut salience = None;
        if weighted {
            match TRAILING_WEIGHT.captures(&body) {
                Some(w) => {
                    let value: f64 = w[2].parse().expect("regex admits only decimals");
                    let clamped = value.clamp(0.0, 1.0);
                    if clamped != value {
                        warnings.push(format!(
                            "salience {value} clamped to {clamped} on line {}",
                            lineno + 1
                        ));
                    }
                    salience = Some(clamped);
                    body = w[1].trim().to_string();
                }
                None => warnings.push(format!("missing salience on line {}", lineno + 1)),
            }
        }

        if body.is_empty() {
            warnings.push(format!("ignored empty fact on line {}", lineno + 1));
            continue;
        }
        entries.push((body, salience));
    }

    if entries.is_empty() {
        return Err(ParseError::EmptyFactList);
    }
    if !numbering_ok {
        warnings.push("fact numbering was not 1..n; facts renumbered".into());
    }
    if entries.len() > max_facts {
        warnings.push(format!(
            "truncated {} facts to max_facts {max_facts}",
            entries.len()
        ));
        entries.truncate(max_facts);
    }
    Ok(ParseOutcome::new(FactList::from_entries(entries), warnings))
}

/// Parses `ANSWER: ...` / `RATIONALE: ...` output. Without an ANSWER marker
/// the whole text (up to any RATIONALE marker) becomes the answer.
pub fn parse_draft(text: &str) -> Result<ParseOutcome<Draft>, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::EmptyDraft);
    }
    let mut warnings = Vec::new();
    let answer_m = ANSWER_MARKER.find(text);
    let rationale_m = RATIONALE_MARKER.find(text);

    let answer = match answer_m {
        Some(a) => {
            if !text[..a.start()].trim().is_empty() {
                warnings.push("ignored text before ANSWER marker".into());
            }
            let end = rationale_m
                .filter(|r| r.start() >= a.end())
                .map_or(text.len(), |r| r.start());
            text[a.end()..end].trim()
        }
        None => {
            warnings.push("missing ANSWER marker".into());
            let end = rationale_m.map_or(text.len(), |r| r.start());
            text[..end].trim()
        }
    };

    let rationale = match rationale_m {
        Some(r) if answer_m.is_none_or(|a| r.start() >= a.end()) => text[r.end()..].trim(),
        Some(_) => {
            warnings.push("RATIONALE marker precedes ANSWER; rationale ignored".into());
            ""
        }
        None => {
            warnings.push("missing RATIONALE marker".into());
            ""
        }
    };

    if answer.is_empty() {
        return Err(ParseError::EmptyDraft);
    }
    Ok(ParseOutcome::new(
        Draft {
            answer: answer.to_string(),
            rationale: rationale.to_string(),
        },
        warnings,
    ))
}

/// Reads a score value at the start of `s`: a decimal, a fraction `a/b` with
/// `b > 0`, or a percentage.
fn read_score_value(s: &str) -> Option<f64> {
    let caps = SCORE_VALUE.captures(s)?;
    let head: f64 = caps[1].parse().ok()?;
    if let Some(den) = caps.get(2) {
        let den: f64 = den.as_str().parse().ok()?;
        return (den > 0.0).then(|| head / den);
    }
    if caps.get(3).is_some() {
        return Some(head / 100.0);
    }
    Some(head)
}

/// Extracts the support score. Never fails: unreadable output yields score
/// 0.0 with `parse_ok = false`.
pub fn parse_score(text: &str) -> SupportAssessment {
    parse_score_outcome(text).value
}

pub fn parse_score_outcome(text: &str) -> ParseOutcome<SupportAssessment> {
    let mut warnings = Vec::new();
    let value = match SUPPORT_MARKER.find_iter(text).last() {
        Some(m) => read_score_value(&text[m.end()..]),
        None => {
            let bare = text.trim();
            let whole = SCORE_VALUE
                .captures(bare)
                .filter(|c| c.get(0).is_some_and(|m| m.end() == bare.len()));
            if whole.is_some() {
                warnings.push("bare score without SUPPORT marker".into());
                read_score_value(bare)
            } else {
                None
            }
        }
    };

    let assessment = match value {
        Some(v) if v.is_finite() => {
            if !(0.0..=1.0).contains(&v) {
                warnings.push(format!("support score {v} clamped into [0,1]"));
            }
            SupportAssessment::parsed(v, text)
        }
        _ => {
            warnings.push("no parsable support score".into());
            SupportAssessment::unparseable(text)
        }
    };
    ParseOutcome::new(assessment, warnings)
}
