use std::fmt::Write as _;

use crate::model::{gate, AuditTrace, FinalizationDecision, Variant};

/// Human-readable rendering of one trace: premises, draft, support, gate
/// decision and final answer.
pub fn render_trace(t: &AuditTrace) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "trace {}  (variant {}, tau {:.2})",
        t.question_id, t.variant, t.tau_used
    );
    let _ = writeln!(
        s,
        "  started {}  ended {}",
        t.started_at.to_rfc3339(),
        t.ended_at.to_rfc3339()
    );

    s.push_str("\npremises:\n");
    if t.variant == Variant::Baseline {
        s.push_str("  (none, baseline variant)\n");
    } else if t.facts.is_empty() {
        s.push_str("  (none)\n");
    } else {
        for f in t.facts.facts() {
            match f.salience {
                Some(w) => {
                    let _ = writeln!(s, "  {:>2}. {}  [salience {w:.2}]", f.index, f.text);
                }
                None => {
                    let _ = writeln!(s, "  {:>2}. {}", f.index, f.text);
                }
            }
        }
    }

    s.push_str("\ndraft:\n");
    let _ = writeln!(s, "  answer:    {}", t.draft.answer);
    if !t.draft.rationale.is_empty() {
        let _ = writeln!(s, "  rationale: {}", t.draft.rationale);
    }

    s.push_str("\nsupport:\n");
    match &t.support {
        Some(sup) => {
            let parsed = if sup.parse_ok {
                ""
            } else {
                "  (unparseable, scored as 0)"
            };
            let _ = writeln!(s, "  score: {:.2}{parsed}", sup.score);
            let (word, cmp) = match gate(sup, t.tau_used) {
                FinalizationDecision::Keep => ("keep", ">="),
                FinalizationDecision::Revise => ("revise", "<"),
            };
            let _ = writeln!(
                s,
                "  gate:  {word} ({:.2} {cmp} {:.2})",
                sup.score, t.tau_used
            );
        }
        None => {
            let _ = writeln!(s, "  (not scored, {} variant)", t.variant);
        }
    }

    s.push_str("\nfinal:\n");
    let _ = writeln!(s, "  answer:  {}", t.final_answer.text);
    let _ = writeln!(
        s,
        "  revised: {}  backend calls: {}",
        if t.final_answer.was_revised {
            "yes"
        } else {
            "no"
        },
        t.final_answer.backend_calls
    );
    s
}
