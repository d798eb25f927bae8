use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pave_core::dataset::{write_jsonl, PredictionRecord};
use pave_core::Variant;

const DATA: &str = r#"{"id":"q1","task_kind":"span","question":"When was the tower finished?","contexts":["The tower was finished in 1889."],"gold":"1889"}
{"id":"q2","task_kind":"label3","question":"Does the drug lower fever?","contexts":["The drug lowered fever in all trials."],"gold":"Yes."}
{"id":"q3","task_kind":"span","question":"Who built the tower?","contexts":["Engineers from Gustave's firm built the tower."],"gold":"Gustave's firm"}
"#;

const SCRIPT: &str = r#"{"cycle": true,
 "rules": [{"stage": "score", "contains": "fever", "text": "SUPPORT: 0.1"},
           {"stage": "draft", "contains": "Who built", "text": "ANSWER: Gustave's firm\nRATIONALE: fact 1"}],
 "stages": {"decompose": ["1. The tower was finished in 1889."],
            "draft": ["ANSWER: 1889\nRATIONALE: fact 1"],
            "score": ["SUPPORT: 0.9"],
            "revise": ["ANSWER: yes\nRATIONALE: fact 1"]}}"#;

struct Env {
    dir: tempfile::TempDir,
}

impl Env {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("data.jsonl"), DATA).unwrap();
        std::fs::write(dir.path().join("script.json"), SCRIPT).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn pave(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_pave"))
            .current_dir(self.dir.path())
            .env_remove("PAVE_API_KEY")
            .args(args)
            .output()
            .unwrap()
    }

    fn run(&self, extra: &[&str]) -> Output {
        let mut args = vec![
            "run",
            "--backend",
            "scripted",
            "--script",
            "script.json",
            "--dataset",
            "data.jsonl",
        ];
        args.extend_from_slice(extra);
        self.pave(args.as_slice())
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn preds(path: &Path, variant: Variant, correct: &[bool]) {
    let recs: Vec<_> = correct
        .iter()
        .enumerate()
        .map(|(i, c)| PredictionRecord::new(format!("id{i}"), variant, "an answer", "gold", *c))
        .collect();
    write_jsonl(path, &recs).unwrap();
}

#[test]
fn run_writes_traces_predictions_and_summary() {
    let env = Env::new();
    let out = env.run(&[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["summary"]["completed"], 3);
    assert_eq!(summary["summary"]["revised"], 1);
    assert_eq!(summary["summary"]["total_backend_calls"], 10);
    assert_eq!(summary["config"]["tau"], 0.7);
    assert_eq!(summary["config"]["variant"], "pave");
    assert_eq!(summary["judge_mode"], "normalized");
    assert_eq!(summary["accuracy"]["correct"], 3);

    let traces = std::fs::read_to_string(env.path("traces.jsonl")).unwrap();
    assert_eq!(traces.lines().count(), 3);
    let preds = std::fs::read_to_string(env.path("predictions.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 3);
}

#[test]
fn failed_examples_still_exit_zero() {
    let env = Env::new();
    std::fs::write(
        env.path("empty.json"),
        r#"{"cycle": true, "stages": {"decompose": [""]}}"#,
    )
    .unwrap();
    let out = env.pave(&[
        "run",
        "--backend",
        "scripted",
        "--script",
        "empty.json",
        "--dataset",
        "data.jsonl",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["summary"]["failed"], 3);
    assert_eq!(summary["summary"]["retry_calls"], 3);
    assert_eq!(summary["accuracy"]["correct"], 0);
    assert_eq!(
        std::fs::read_to_string(env.path("traces.jsonl")).unwrap(),
        ""
    );
    let preds = std::fs::read_to_string(env.path("predictions.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 3);
    assert!(preds.contains(r#""predicted":"""#));
}

#[test]
fn missing_dataset_names_the_flag() {
    let env = Env::new();
    let out = env.pave(&["run", "--backend", "scripted", "--script", "script.json"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--dataset"), "{}", stderr(&out));
}

#[test]
fn out_of_range_tau_fails_before_any_backend_work() {
    let env = Env::new();
    // the script path does not exist: only validation can produce the error
    let out = env.pave(&[
        "run",
        "--backend",
        "scripted",
        "--script",
        "nope.json",
        "--dataset",
        "data.jsonl",
        "--tau",
        "1.5",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("tau"), "{}", stderr(&out));
    assert!(!env.path("traces.jsonl").exists());
}

#[test]
fn live_backend_without_key_fails_cleanly() {
    let env = Env::new();
    let out = env.pave(&[
        "run",
        "--base-url",
        "http://127.0.0.1:9",
        "--model",
        "m",
        "--dataset",
        "data.jsonl",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("PAVE_API_KEY"), "{}", stderr(&out));
}

#[test]
fn config_file_values_yield_to_flags() {
    let env = Env::new();
    std::fs::write(
        env.path("pave.toml"),
        "variant = \"baseline\"\ntau = 0.5\nbackend = \"scripted\"\nscript = \"script.json\"\ndataset = \"data.jsonl\"\n",
    )
    .unwrap();
    let out = env.pave(&["run", "--config", "pave.toml", "--tau", "0.95"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["config"]["variant"], "baseline");
    assert_eq!(summary["config"]["tau"], 0.95);
    assert_eq!(summary["config"]["parallelism"], 1);
    assert_eq!(summary["summary"]["total_backend_calls"], 3);

    std::fs::write(env.path("bad.toml"), "tua = 0.5\n").unwrap();
    let out = env.pave(&["run", "--config", "bad.toml"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("bad.toml"), "{}", stderr(&out));
}

#[test]
fn run_can_write_a_report() {
    let env = Env::new();
    let out = env.run(&["--report", "report.json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = pave_core::evaluation::read_report(&env.path("report.json")).unwrap();
    assert_eq!(report.results.len(), 1);
    assert_eq!(report.results[0].dataset, "data");
}

#[test]
fn eval_reports_accuracy_per_log() {
    let env = Env::new();
    preds(
        &env.path("base.jsonl"),
        Variant::Baseline,
        &[true, false, false, true],
    );
    preds(
        &env.path("pave.jsonl"),
        Variant::Pave,
        &[true, true, false, true],
    );
    let out = env.pave(&[
        "eval",
        "squad=base.jsonl",
        "squad=pave.jsonl",
        "--report",
        "r.json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("50.00") && text.contains("75.00"), "{text}");
    assert!(text.contains("judge mode: normalized"));
    let report = pave_core::evaluation::read_report(&env.path("r.json")).unwrap();
    assert_eq!(report.results.len(), 2);
    assert_eq!(
        report.relative_error_reductions[0].relative_error_reduction_pct,
        50.0
    );
}

#[test]
fn eval_rejects_malformed_and_empty_logs() {
    let env = Env::new();
    std::fs::write(env.path("bad.jsonl"), "{\"id\": 1}\n").unwrap();
    let out = env.pave(&["eval", "bad.jsonl"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("line 1"), "{}", stderr(&out));

    std::fs::write(env.path("empty.jsonl"), "").unwrap();
    let out = env.pave(&["eval", "empty.jsonl"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("no predictions"), "{}", stderr(&out));
}

#[test]
fn compare_prints_the_matrix() {
    let env = Env::new();
    preds(
        &env.path("a.jsonl"),
        Variant::SupportScoring,
        &[true, false, false, true],
    );
    preds(
        &env.path("b.jsonl"),
        Variant::Pave,
        &[true, true, false, false],
    );
    let out = env.pave(&["compare", "a.jsonl", "b.jsonl", "--report", "c.json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("both correct           1"), "{text}");
    assert!(text.contains("A only correct         1"), "{text}");
    assert!(text.contains("B only correct         1"), "{text}");
    assert!(text.contains("both wrong             1"), "{text}");
    assert!(env.path("c.json").exists());

    let out = env.pave(&["compare", "a.jsonl", "a.jsonl"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("A only correct         0") && text.contains("B only correct         0"));
}

#[test]
fn compare_rejects_mismatched_ids() {
    let env = Env::new();
    preds(&env.path("a.jsonl"), Variant::Pave, &[true, false]);
    let other = vec![PredictionRecord::new("zz", Variant::Pave, "x", "x", true)];
    write_jsonl(&env.path("b.jsonl"), &other).unwrap();
    let out = env.pave(&["compare", "a.jsonl", "b.jsonl"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("different ids"), "{}", stderr(&out));
}

#[test]
fn trace_show_renders_one_trace() {
    let env = Env::new();
    assert!(env.run(&[]).status.success());
    let out = env.pave(&["trace", "show", "--trace", "traces.jsonl", "q2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("1. The tower was finished in 1889."),
        "{text}"
    );
    assert!(text.contains("gate:  revise (0.10 < 0.70)"), "{text}");
    assert!(text.contains("answer:  yes"), "{text}");

    let out = env.pave(&["trace", "show", "--trace", "traces.jsonl", "missing"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("missing"));

    assert!(env
        .run(&[
            "--variant",
            "baseline",
            "--trace",
            "base.jsonl",
            "--predictions",
            "bp.jsonl"
        ])
        .status
        .success());
    let out = env.pave(&["trace", "show", "--trace", "base.jsonl", "q1"]);
    assert!(
        stdout(&out).contains("(none, baseline variant)"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn convert_squad_with_seeded_sample() {
    let env = Env::new();
    let squad = r#"{"data": [{"title": "t", "paragraphs": [{"context": "Alpha beta gamma.", "qas": [
        {"id": "a", "question": "First?", "answers": [{"text": "Alpha", "answer_start": 0}]},
        {"id": "b", "question": "Second?", "answers": [{"text": "beta", "answer_start": 6}]},
        {"id": "c", "question": "Third?", "answers": [{"text": "gamma", "answer_start": 11}]}]}]}]}"#;
    std::fs::write(env.path("squad.json"), squad).unwrap();
    for out_name in ["s1.jsonl", "s2.jsonl"] {
        let out = env.pave(&[
            "convert",
            "--format",
            "squad",
            "--input",
            "squad.json",
            "--output",
            out_name,
            "--sample",
            "2",
            "--seed",
            "3",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stdout(&out).contains("wrote 2 of 3 records"));
    }
    let s1 = std::fs::read_to_string(env.path("s1.jsonl")).unwrap();
    assert_eq!(s1, std::fs::read_to_string(env.path("s2.jsonl")).unwrap());
    let loaded = pave_core::dataset::load_dataset(&env.path("s1.jsonl")).unwrap();
    assert_eq!(loaded.len(), 2);
}
