use pave_core::backend::{ScriptRule, ScriptSpec, ScriptedBackend, Stage};
use pave_core::dataset::ExampleRecord;
use pave_core::model::validate_trace;
use pave_core::pipeline::{JsonlTraceSink, MemoryTraceSink, NullTraceSink};
use pave_core::{Pipeline, PipelineConfig, Prompter, TaskKind, Variant};

fn records(n: usize) -> Vec<ExampleRecord> {
    (0..n)
        .map(|i| ExampleRecord {
            id: format!("x{i:02}"),
            task_kind: TaskKind::Span,
            question: format!("Where is item {i} kept?"),
            contexts: vec![format!("Item {i} is kept in the north vault.")],
            gold: "north vault".into(),
            gold_alternatives: None,
        })
        .collect()
}

/// Cycling script: score 0.9 everywhere except questions about the listed
/// items, which score 0.2.
fn script(low: &[usize]) -> ScriptedBackend {
    let mut stages = std::collections::HashMap::new();
    stages.insert(
        Stage::Decompose,
        vec!["1. The item is kept in the north vault.".to_string()],
    );
    stages.insert(
        Stage::Draft,
        vec!["ANSWER: south vault\nRATIONALE: guess".to_string()],
    );
    stages.insert(Stage::Score, vec!["SUPPORT: 0.9".to_string()]);
    stages.insert(
        Stage::Revise,
        vec!["ANSWER: north vault\nRATIONALE: fact 1".to_string()],
    );
    ScriptedBackend::from_spec(ScriptSpec {
        cycle: true,
        rules: low
            .iter()
            .map(|i| ScriptRule {
                stage: Stage::Score,
                contains: format!("item {i} kept"),
                text: "SUPPORT: 0.2".into(),
            })
            .collect(),
        stages,
        sequence: Vec::new(),
    })
}

#[test]
fn all_keep_dataset_makes_three_calls_each() {
    let backend = script(&[]);
    let pipeline = Pipeline::new(PipelineConfig::default(), Prompter::default(), &backend).unwrap();
    let run = pipeline
        .run_dataset(&records(10), 1, &NullTraceSink)
        .unwrap();
    assert_eq!(run.summary.total_backend_calls, 30);
    assert_eq!(backend.calls(), 30);
    assert_eq!(
        (
            run.summary.completed,
            run.summary.revised,
            run.summary.failed
        ),
        (10, 0, 0)
    );
}

#[test]
fn revised_examples_add_one_call_each() {
    let low = [1, 4, 6, 9];
    let backend = script(&low);
    let pipeline = Pipeline::new(PipelineConfig::default(), Prompter::default(), &backend).unwrap();
    let sink = MemoryTraceSink::new();
    let run = pipeline.run_dataset(&records(10), 1, &sink).unwrap();
    let expected = 3 * 10 + low.len() as u64;
    assert_eq!(run.summary.total_backend_calls, expected);
    assert_eq!(backend.calls(), expected);
    assert_eq!(run.summary.revised, 4);

    let traces = sink.traces();
    let ids: Vec<_> = traces.iter().map(|t| t.question_id.clone()).collect();
    let input: Vec<_> = records(10).into_iter().map(|r| r.id).collect();
    assert_eq!(ids, input, "parallelism 1 keeps input order");
    for (i, t) in traces.iter().enumerate() {
        assert_eq!(t.final_answer.was_revised, low.contains(&i));
        assert!(validate_trace(t, &PipelineConfig::default()).is_empty());
    }
}

#[test]
fn parallel_run_matches_sequential_run() {
    let low = [0, 3, 7, 11, 15];
    let seq = {
        let backend = script(&low);
        let pipeline =
            Pipeline::new(PipelineConfig::default(), Prompter::default(), &backend).unwrap();
        pipeline
            .run_dataset(&records(20), 1, &NullTraceSink)
            .unwrap()
    };
    let backend = script(&low);
    let pipeline = Pipeline::new(PipelineConfig::default(), Prompter::default(), &backend).unwrap();
    let sink = MemoryTraceSink::new();
    let par = pipeline.run_dataset(&records(20), 4, &sink).unwrap();
    assert_eq!(par.summary, seq.summary);
    assert_eq!(par.summary.total_backend_calls, 3 * 20 + 5);
    let answers = |run: &pave_core::pipeline::DatasetRun| {
        run.results
            .iter()
            .map(|r| r.result.as_ref().unwrap().final_answer.text.clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(answers(&par), answers(&seq));
    assert_eq!(sink.traces().len(), 20);
}

#[test]
fn every_variant_runs_a_dataset() {
    for variant in Variant::ALL {
        let backend = script(&[2]);
        let config = PipelineConfig::with_variant(variant);
        let pipeline = Pipeline::new(config.clone(), Prompter::default(), &backend).unwrap();
        let sink = MemoryTraceSink::new();
        let run = pipeline.run_dataset(&records(5), 2, &sink).unwrap();
        assert_eq!(run.summary.completed, 5, "{variant}");
        let expected: u64 = run
            .results
            .iter()
            .map(|r| {
                u64::from(
                    variant.expected_calls(r.result.as_ref().unwrap().final_answer.was_revised),
                )
            })
            .sum();
        assert_eq!(run.summary.total_backend_calls, expected, "{variant}");
        for t in sink.traces() {
            assert!(validate_trace(&t, &config).is_empty(), "{variant}");
            assert_eq!(t.facts.is_empty(), !variant.decomposes());
            assert_eq!(t.support.is_some(), variant.scores());
        }
    }
}

#[test]
fn jsonl_sink_writes_one_line_per_completed_example() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let backend = script(&[]);
    let pipeline = Pipeline::new(PipelineConfig::default(), Prompter::default(), &backend).unwrap();
    let sink = JsonlTraceSink::create(&path).unwrap();
    pipeline.run_dataset(&records(6), 3, &sink).unwrap();
    drop(sink);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 6);
    for line in text.lines() {
        pave_core::AuditTrace::from_json_line(line).unwrap();
    }
}
