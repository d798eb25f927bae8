//! Stage prompt rendering and output parsing.

mod parse;
mod templates;

pub use parse::{
    parse_draft, parse_fact_list, parse_score, parse_score_outcome, ParseError, ParseOutcome,
};
pub use templates::{placeholders, PromptTemplate, TemplateError, TemplateSet};

use crate::backend::{CompletionRequest, Stage};
use crate::model::{Draft, EvidenceContext, FactList, Question, SupportAssessment, TaskKind};

/// Output token budgets per stage.
pub const DECOMPOSE_MAX_TOKENS: u32 = 768;
pub const DRAFT_MAX_TOKENS: u32 = 256;
pub const SCORE_MAX_TOKENS: u32 = 256;
pub const REVISE_MAX_TOKENS: u32 = 256;
pub const JUDGE_MAX_TOKENS: u32 = 8;

#[cfg(test)]
const NUMBERED_INSTRUCTION_HINT: &str = "one fact per line, numbered";
const SALIENCE_INSTRUCTION: &str = "After each fact, append how important it is for answering the question as a decimal between 0 and 1 in square brackets, for example: 1. The drug reduced mortality. [0.9]";
const SALIENCE_NOTE: &str = "Each premise ends with its importance weight in square brackets. Rely most on the premises with the highest weights.\n";
const LABEL3_CONSTRAINT: &str = "The answer must be exactly one word: yes, no, or maybe. Use maybe when the evidence is mixed or does not settle the question.";
const SPAN_CONSTRAINT: &str = "The answer must be the shortest exact span from the evidence that answers the question, with no extra words.";
const LABEL3_UNCERTAINTY: &str =
    "If the evidence conflicts or does not settle the question, answer maybe.";
const SPAN_UNCERTAINTY: &str =
    "If the evidence conflicts or does not settle the question, answer uncertain.";

/// Evidence a stage is conditioned on: extracted premises or raw passages.
#[derive(Debug, Clone, Copy)]
pub enum Evidence<'a> {
    Facts(&'a FactList),
    Context(&'a EvidenceContext),
}

impl Evidence<'_> {
    fn label(&self) -> &'static str {
        match self {
            Evidence::Facts(_) => "Premises",
            Evidence::Context(_) => "Context",
        }
    }

    fn noun(&self) -> &'static str {
        match self {
            Evidence::Facts(_) => "premises",
            Evidence::Context(_) => "passages",
        }
    }

    fn render(&self) -> String {
        match self {
            Evidence::Facts(facts) => render_facts(facts),
            Evidence::Context(ctx) => render_passages(ctx),
        }
    }

    fn weighted(&self) -> bool {
        matches!(self, Evidence::Facts(f) if f.iter().any(|x| x.salience.is_some()))
    }
}

fn render_facts(facts: &FactList) -> String {
    facts
        .iter()
        .map(|f| match f.salience {
            Some(w) => format!("{}. {} [{w:.2}]", f.index, f.text),
            None => format!("{}. {}", f.index, f.text),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_passages(ctx: &EvidenceContext) -> String {
    ctx.passages()
        .iter()
        .enumerate()
        .map(|(i, p)| format!("[{}] {}", i + 1, p.trim()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn answer_constraint(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Label3 => LABEL3_CONSTRAINT,
        TaskKind::Span => SPAN_CONSTRAINT,
    }
}

fn rationale_block(draft: &Draft) -> String {
    let r = draft.rationale.trim();
    if r.is_empty() {
        String::new()
    } else {
        format!("Draft rationale: {r}\n")
    }
}

/// Renders stage requests from a template set with fixed decoding settings.
/// Rendering is pure: equal inputs give byte-equal requests.
#[derive(Debug, Clone)]
pub struct Prompter {
    templates: TemplateSet,
    temperature: f64,
    seed: Option<u64>,
}

impl Default for Prompter {
    fn default() -> Self {
        Self::new(TemplateSet::builtin(), 0.0, None)
    }
}

impl Prompter {
    pub fn new(templates: TemplateSet, temperature: f64, seed: Option<u64>) -> Self {
        Self {
            templates,
            temperature,
            seed,
        }
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    fn request(&self, stage: Stage, values: &[(&str, &str)], max_tokens: u32) -> CompletionRequest {
        let (system_text, user_text) = self.templates.get(stage).render(values);
        CompletionRequest {
            system_text,
            user_text,
            temperature: self.temperature,
            max_output_tokens: max_tokens,
            seed: self.seed,
        }
    }

    pub fn render_decompose(
        &self,
        question: &Question,
        context: &EvidenceContext,
        max_facts: usize,
        weighted: bool,
    ) -> CompletionRequest {
        let passages = render_passages(context);
        let max_facts = max_facts.to_string();
        self.request(
            Stage::Decompose,
            &[
                ("question", question.text()),
                ("passages", &passages),
                ("max_facts", &max_facts),
                (
                    "salience_instruction",
                    if weighted { SALIENCE_INSTRUCTION } else { "" },
                ),
            ],
            DECOMPOSE_MAX_TOKENS,
        )
    }

    pub fn render_draft(&self, question: &Question, evidence: Evidence<'_>) -> CompletionRequest {
        let body = evidence.render();
        self.request(
            Stage::Draft,
            &[
                ("question", question.text()),
                ("evidence_label", evidence.label()),
                ("evidence", &body),
                ("evidence_noun", evidence.noun()),
                (
                    "salience_note",
                    if evidence.weighted() {
                        SALIENCE_NOTE
                    } else {
                        ""
                    },
                ),
                ("answer_constraint", answer_constraint(question.task())),
            ],
            DRAFT_MAX_TOKENS,
        )
    }

    pub fn render_score(
        &self,
        question: &Question,
        evidence: Evidence<'_>,
        draft: &Draft,
    ) -> CompletionRequest {
        let body = evidence.render();
        let rationale = rationale_block(draft);
        self.request(
            Stage::Score,
            &[
                ("question", question.text()),
                ("evidence_label", evidence.label()),
                ("evidence", &body),
                ("evidence_noun", evidence.noun()),
                ("answer", draft.answer.trim()),
                ("rationale_block", &rationale),
            ],
            SCORE_MAX_TOKENS,
        )
    }

    pub fn render_revise(
        &self,
        question: &Question,
        evidence: Evidence<'_>,
        draft: &Draft,
        support: &SupportAssessment,
    ) -> CompletionRequest {
        let body = evidence.render();
        let rationale = rationale_block(draft);
        let score = format!("{:.2}", support.score);
        let uncertainty = match question.task() {
            TaskKind::Label3 => LABEL3_UNCERTAINTY,
            TaskKind::Span => SPAN_UNCERTAINTY,
        };
        self.request(
            Stage::Revise,
            &[
                ("question", question.text()),
                ("evidence_label", evidence.label()),
                ("evidence", &body),
                ("evidence_noun", evidence.noun()),
                ("answer", draft.answer.trim()),
                ("rationale_block", &rationale),
                ("score", &score),
                ("uncertainty_instruction", uncertainty),
                ("answer_constraint", answer_constraint(question.task())),
            ],
            REVISE_MAX_TOKENS,
        )
    }

    pub fn render_judge(
        &self,
        question: &str,
        candidate: &str,
        gold: &str,
        alternatives: &[String],
    ) -> CompletionRequest {
        let mut refs = vec![gold.trim().to_string()];
        refs.extend(alternatives.iter().map(|a| a.trim().to_string()));
        let references = refs.join(" | ");
        self.request(
            Stage::Judge,
            &[
                ("question", question),
                ("references", &references),
                ("candidate", candidate.trim()),
            ],
            JUDGE_MAX_TOKENS,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(task: TaskKind) -> Question {
        Question::new("q1", "Is drug X effective against Y?", task).unwrap()
    }

    fn ctx(passages: &[&str]) -> EvidenceContext {
        EvidenceContext::new(passages.iter().copied()).unwrap()
    }

    #[test]
    fn decompose_contains_passage_and_list_instruction() {
        let p = Prompter::default();
        let r = p.render_decompose(
            &q(TaskKind::Label3),
            &ctx(&["Drug X cut Y by half."]),
            10,
            false,
        );
        assert_eq!(r.stage(), Some(Stage::Decompose));
        assert!(r.user_text.contains("Drug X cut Y by half."));
        assert!(r.user_text.contains(NUMBERED_INSTRUCTION_HINT));
        assert!(r.user_text.contains("at most 10"));
        assert!(!r.user_text.contains(SALIENCE_INSTRUCTION));
        assert!(r
            .user_text
            .contains("main claim, the condition, and the exception"));
    }

    #[test]
    fn weighted_decompose_adds_salience_format() {
        let p = Prompter::default();
        let r = p.render_decompose(&q(TaskKind::Label3), &ctx(&["a"]), 10, true);
        assert!(r.user_text.contains(SALIENCE_INSTRUCTION));
    }

    #[test]
    fn decompose_keeps_passage_order() {
        let p = Prompter::default();
        let r = p.render_decompose(
            &q(TaskKind::Span),
            &ctx(&["alpha one", "beta two", "gamma three"]),
            5,
            false,
        );
        let pos: Vec<_> = ["alpha one", "beta two", "gamma three"]
            .iter()
            .map(|s| r.user_text.find(s).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn draft_constraints_by_task() {
        let p = Prompter::default();
        let c = ctx(&["passage text"]);
        let r = p.render_draft(&q(TaskKind::Label3), Evidence::Context(&c));
        assert!(r.user_text.contains("yes, no, or maybe"));
        let r = p.render_draft(&q(TaskKind::Span), Evidence::Context(&c));
        assert!(r.user_text.contains("shortest exact span"));
        assert!(r.user_text.contains("ANSWER: <answer>"));
    }

    #[test]
    fn draft_from_facts_omits_passages() {
        let p = Prompter::default();
        let facts = FactList::from_texts(["Premise one.", "Premise two."]);
        let r = p.render_draft(&q(TaskKind::Span), Evidence::Facts(&facts));
        assert!(r.user_text.contains("1. Premise one."));
        assert!(r.user_text.contains("2. Premise two."));
        assert!(!r.user_text.contains("[1]"));
        assert!(!r.user_text.contains(SALIENCE_NOTE.trim()));
    }

    #[test]
    fn draft_from_weighted_facts_lists_weights() {
        let p = Prompter::default();
        let facts = FactList::from_entries([("A.".to_string(), Some(0.8))]);
        let r = p.render_draft(&q(TaskKind::Span), Evidence::Facts(&facts));
        assert!(r.user_text.contains("1. A. [0.80]"));
        assert!(r.user_text.contains(SALIENCE_NOTE.trim()));
    }

    #[test]
    fn score_prompt_shape() {
        let p = Prompter::default();
        let facts = FactList::from_texts(["F one.", "F two."]);
        let draft = Draft {
            answer: "yes".into(),
            rationale: String::new(),
        };
        let r = p.render_score(&q(TaskKind::Label3), Evidence::Facts(&facts), &draft);
        assert!(r
            .user_text
            .ends_with("\"SUPPORT: <decimal between 0 and 1>\"."));
        assert!(r.user_text.contains("1. F one.\n2. F two."));
        assert!(!r.user_text.contains("Draft rationale"));
        assert!(r.user_text.contains("strongly supported"));
        let with_rationale = Draft {
            rationale: "Because F one.".into(),
            ..draft
        };
        let r = p.render_score(
            &q(TaskKind::Label3),
            Evidence::Facts(&facts),
            &with_rationale,
        );
        assert!(r.user_text.contains("Draft rationale: Because F one."));
    }

    #[test]
    fn revise_prompt_shape() {
        let p = Prompter::default();
        let facts = FactList::from_texts(["F one."]);
        let draft = Draft {
            answer: "yes".into(),
            rationale: "r".into(),
        };
        let low = SupportAssessment::parsed(0.2, "SUPPORT: 0.2");
        let r = p.render_revise(&q(TaskKind::Label3), Evidence::Facts(&facts), &draft, &low);
        assert!(r.user_text.contains("Support score: 0.20"));
        assert!(r.user_text.contains("stays strictly within the premises"));
        assert!(r.user_text.contains("yes, no, or maybe"));
        assert!(r.user_text.contains("answer maybe"));
        let r = p.render_revise(&q(TaskKind::Span), Evidence::Facts(&facts), &draft, &low);
        assert!(r.user_text.contains("shortest exact span"));
    }

    #[test]
    fn rendering_is_pure() {
        let p = Prompter::default();
        let c = ctx(&["x y z"]);
        let a = p.render_decompose(&q(TaskKind::Span), &c, 16, false);
        let b = p.render_decompose(&q(TaskKind::Span), &c, 16, false);
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
    }
}
