use std::collections::BTreeSet;
use std::path::Path;

use regex::Regex;
use std::sync::LazyLock;
use thiserror::Error;

use crate::backend::Stage;

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{\{([a-z_]+)\}\}").expect("valid regex"));

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template for stage `{stage}` is missing the `{section}` section")]
    MissingSection { stage: Stage, section: &'static str },
    #[error("template for stage `{stage}` does not use placeholder {{{{{name}}}}}")]
    MissingPlaceholder { stage: Stage, name: &'static str },
    #[error("template for stage `{stage}` uses unknown placeholder {{{{{name}}}}}")]
    UnknownPlaceholder { stage: Stage, name: String },
    #[error("reading template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Placeholders the renderer supplies for each stage. A template must use
/// exactly this set.
pub fn placeholders(stage: Stage) -> &'static [&'static str] {
    match stage {
        Stage::Decompose => &["question", "passages", "max_facts", "salience_instruction"],
        Stage::Draft => &[
            "question",
            "evidence_label",
            "evidence",
            "evidence_noun",
            "salience_note",
            "answer_constraint",
        ],
        Stage::Score => &[
            "question",
            "evidence_label",
            "evidence",
            "evidence_noun",
            "answer",
            "rationale_block",
        ],
        Stage::Revise => &[
            "question",
            "evidence_label",
            "evidence",
            "evidence_noun",
            "answer",
            "rationale_block",
            "score",
            "uncertainty_instruction",
            "answer_constraint",
        ],
        Stage::Judge => &["question", "references", "candidate"],
    }
}

/// A stage prompt with `{{name}}` placeholders in both sections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub stage: Stage,
    pub system_text: String,
    pub user_text: String,
}

impl PromptTemplate {
    /// Parses the template file layout: a `[system]` line, the system text,
    /// a `[user]` line, the user text.
    pub fn parse(stage: Stage, source: &str) -> Result<Self, TemplateError> {
        let source = source.replace("\r\n", "\n");
        let body = source
            .split_once("[system]\n")
            .map(|(_, rest)| rest)
            .ok_or(TemplateError::MissingSection {
                stage,
                section: "[system]",
            })?;
        let (system, user) =
            body.split_once("\n[user]\n")
                .ok_or(TemplateError::MissingSection {
                    stage,
                    section: "[user]",
                })?;
        let template = Self {
            stage,
            system_text: system.trim().to_string(),
            user_text: user.trim_end().to_string(),
        };
        template.check_placeholders()?;
        Ok(template)
    }

    fn check_placeholders(&self) -> Result<(), TemplateError> {
        let expected = placeholders(self.stage);
        let used: BTreeSet<&str> = PLACEHOLDER
            .captures_iter(&self.system_text)
            .chain(PLACEHOLDER.captures_iter(&self.user_text))
            .map(|c| c.get(1).expect("group 1").as_str())
            .collect();
        if let Some(unknown) = used.iter().find(|u| !expected.contains(u)) {
            return Err(TemplateError::UnknownPlaceholder {
                stage: self.stage,
                name: (*unknown).to_string(),
            });
        }
        if let Some(missing) = expected.iter().find(|e| !used.contains(*e)) {
            return Err(TemplateError::MissingPlaceholder {
                stage: self.stage,
                name: missing,
            });
        }
        Ok(())
    }

    /// Substitutes every placeholder in one pass. Values are inserted
    /// verbatim, so braces inside values are never re-expanded.
    pub fn render(&self, values: &[(&str, &str)]) -> (String, String) {
        let fill = |text: &str| {
            PLACEHOLDER
                .replace_all(text, |caps: &regex::Captures<'_>| {
                    let name = &caps[1];
                    values
                        .iter()
                        .find(|(k, _)| *k == name)
                        .map(|(_, v)| (*v).to_string())
                        .unwrap_or_else(|| panic!("no value for placeholder {name}"))
                })
                .into_owned()
        };
        let system = format!("{}\n{}", self.stage.tag(), fill(&self.system_text));
        (system, fill(&self.user_text).trim_end().to_string())
    }
}

/// The five stage templates used by a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub decompose: PromptTemplate,
    pub draft: PromptTemplate,
    pub score: PromptTemplate,
    pub revise: PromptTemplate,
    pub judge: PromptTemplate,
}

fn builtin_source(stage: Stage) -> &'static str {
    match stage {
        Stage::Decompose => include_str!("../../templates/decompose.txt"),
        Stage::Draft => include_str!("../../templates/draft.txt"),
        Stage::Score => include_str!("../../templates/score.txt"),
        Stage::Revise => include_str!("../../templates/revise.txt"),
        Stage::Judge => include_str!("../../templates/judge.txt"),
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self::build(|stage| PromptTemplate::parse(stage, builtin_source(stage)))
            .expect("built-in templates are valid")
    }

    /// Loads `<stage>.txt` from `dir`; stages without a file keep the
    /// built-in template.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        Self::build(|stage| {
            let path = dir.join(format!("{}.txt", stage.as_str()));
            match std::fs::read_to_string(&path) {
                Ok(text) => PromptTemplate::parse(stage, &text),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    PromptTemplate::parse(stage, builtin_source(stage))
                }
                Err(source) => Err(TemplateError::Io {
                    path: path.display().to_string(),
                    source,
                }),
            }
        })
    }

    fn build(
        mut load: impl FnMut(Stage) -> Result<PromptTemplate, TemplateError>,
    ) -> Result<Self, TemplateError> {
        Ok(Self {
            decompose: load(Stage::Decompose)?,
            draft: load(Stage::Draft)?,
            score: load(Stage::Score)?,
            revise: load(Stage::Revise)?,
            judge: load(Stage::Judge)?,
        })
    }

    pub fn get(&self, stage: Stage) -> &PromptTemplate {
        match stage {
            Stage::Decompose => &self.decompose,
            Stage::Draft => &self.draft,
            Stage::Score => &self.score,
            Stage::Revise => &self.revise,
            Stage::Judge => &self.judge,
        }
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}
