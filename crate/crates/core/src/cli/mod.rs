//! `pave` command-line interface.

mod config;
mod show;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::{
    BackendKind, CliConfig, ConfigLayer, DEFAULT_MAX_ATTEMPTS, DEFAULT_PARALLELISM,
    DEFAULT_PREDICTIONS_PATH, DEFAULT_TIMEOUT_SECS, DEFAULT_TRACE_PATH,
};
pub use show::render_trace;

use crate::convert::{self, SourceFormat};
use crate::dataset::{load_dataset, load_predictions, write_jsonl, PredictionRecord};
use crate::evaluation::{
    accuracy, emit_report, length_diagnostics, paired_transition, predictions_from_run,
    ComparisonEntry, EvalResult, JudgeMode, LengthEntry, Report, SpanJudge,
};
use crate::model::AuditTrace;
use crate::pipeline::{JsonlTraceSink, Pipeline, RunSummary};

#[derive(Debug, Parser)]
#[command(
    name = "pave",
    version,
    about = "Validate retrieval-augmented answers against extracted premises"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Run a pipeline variant over a dataset, writing traces and predictions.
    Run(RunArgs),
    /// Compute accuracy tables from prediction logs.
    Eval(EvalArgs),
    /// Paired comparison of two prediction logs over the same ids.
    Compare(CompareArgs),
    /// Inspect trace files.
    Trace {
        #[command(subcommand)]
        command: TraceCommand,
    },
    /// Convert a public dataset release into the JSONL record schema.
    Convert(ConvertArgs),
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub layer: ConfigLayer,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Prediction logs, each `PATH` or `NAME=PATH`; NAME defaults to the file stem.
    #[arg(required = true)]
    pub logs: Vec<String>,
    /// JSON report output.
    #[arg(long, default_value = "report.json")]
    pub report: PathBuf,
    /// Judge mode the logs were labelled with, disclosed in the report.
    #[arg(long, default_value = "normalized")]
    pub judge_mode: JudgeMode,
}

#[derive(Debug, clap::Args)]
pub struct CompareArgs {
    /// Reference system log (A).
    pub log_a: PathBuf,
    /// Candidate system log (B).
    pub log_b: PathBuf,
    /// JSON report output.
    #[arg(long, default_value = "compare.json")]
    pub report: PathBuf,
    #[arg(long, default_value = "normalized")]
    pub judge_mode: JudgeMode,
}

#[derive(Debug, Subcommand)]
pub enum TraceCommand {
    /// Pretty-print one trace by question id.
    Show {
        /// Trace file (JSONL).
        #[arg(long)]
        trace: PathBuf,
        id: String,
    },
}

#[derive(Debug, clap::Args)]
pub struct ConvertArgs {
    /// Source format: pubmedqa or squad.
    #[arg(long)]
    pub format: SourceFormat,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Keep a seeded random subset of this many records.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Printed on stdout by `pave run`.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub config: CliConfig,
    pub judge_mode: JudgeMode,
    pub summary: RunSummary,
    pub accuracy: Option<EvalResult>,
}

/// Parses `args` (program name first) and runs the command, writing normal
/// output to `out`.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    match cli.command {
        Command::Run(args) => cmd_run(args, out),
        Command::Eval(args) => cmd_eval(args, out),
        Command::Compare(args) => cmd_compare(args, out),
        Command::Trace {
            command: TraceCommand::Show { trace, id },
        } => cmd_trace_show(&trace, &id, out),
        Command::Convert(args) => cmd_convert(args, out),
    }
}

/// Process entry point for the `pave` binary.
pub fn main() -> std::process::ExitCode {
    use std::process::ExitCode;
    let args: Vec<OsString> = std::env::args_os().collect();
    let stdout = std::io::stdout();
    match run_cli(args, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(clap_err) = err.downcast_ref::<clap::Error>() {
                let _ = clap_err.print();
                return if clap_err.use_stderr() {
                    ExitCode::from(2)
                } else {
                    ExitCode::SUCCESS
                };
            }
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn cmd_run(args: RunArgs, out: &mut dyn Write) -> Result<()> {
    let config = CliConfig::from_sources(args.layer, args.config.as_deref())?;
    config.validate()?;
    let prompter = config.prompter()?;
    let dataset_path = config.dataset.as_deref().context("--dataset is required")?;
    let records = load_dataset(dataset_path)?;
    let backend = config.build_backend()?;

    let pipeline = Pipeline::new(config.pipeline_config(), prompter.clone(), backend.as_ref())?;
    let sink = JsonlTraceSink::create(&config.trace)
        .with_context(|| format!("creating trace file {}", config.trace.display()))?;
    let run = pipeline.run_dataset(&records, config.parallelism, &sink)?;

    let judge = match config.judge_mode {
        JudgeMode::Normalized => SpanJudge::Normalized,
        JudgeMode::ModelJudge => SpanJudge::Model {
            prompter: &prompter,
            backend: backend.as_ref(),
        },
    };
    let predictions = predictions_from_run(&records, &run, config.variant, &judge)
        .context("judging predictions")?;
    write_jsonl(&config.predictions, &predictions)
        .with_context(|| format!("writing {}", config.predictions.display()))?;

    let acc = accuracy(&predictions).ok();
    if let Some(path) = &config.report {
        let mut report = Report::new(config.judge_mode);
        report.add_dataset(&dataset_label(dataset_path), &predictions)?;
        emit_report(&report, path)?;
    }
    let summary = RunReport {
        judge_mode: config.judge_mode,
        config,
        summary: run.summary,
        accuracy: acc,
    };
    writeln!(out, "{}", serde_json::to_string(&summary)?)?;
    Ok(())
}

fn dataset_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn split_log_arg(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => {
            (name.to_string(), path.into())
        }
        _ => {
            let path = PathBuf::from(arg);
            (dataset_label(&path), path)
        }
    }
}

fn read_log(path: &Path) -> Result<Vec<PredictionRecord>> {
    Ok(load_predictions(path)?)
}

pub fn cmd_eval(args: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let mut report = Report::new(args.judge_mode);
    for arg in &args.logs {
        let (name, path) = split_log_arg(arg);
        let preds = read_log(&path)?;
        report
            .add_dataset(&name, &preds)
            .with_context(|| format!("evaluating {}", path.display()))?;
    }
    let table = emit_report(&report, &args.report)?;
    write!(out, "{table}")?;
    for r in &report.relative_error_reductions {
        writeln!(
            out,
            "{}: {} vs baseline {:.2} -> {:.2}, relative error reduction {:.1}%",
            r.dataset,
            r.variant,
            r.baseline_accuracy_pct,
            r.accuracy_pct,
            r.relative_error_reduction_pct
        )?;
    }
    writeln!(out, "judge mode: {}", args.judge_mode.as_str())?;
    Ok(())
}

pub fn cmd_compare(args: CompareArgs, out: &mut dyn Write) -> Result<()> {
    let a = read_log(&args.log_a)?;
    let b = read_log(&args.log_b)?;
    let cmp = paired_transition(&a, &b)?;
    let (name_a, name_b) = (dataset_label(&args.log_a), dataset_label(&args.log_b));
    let len_a = length_diagnostics(&a)?;
    let len_b = length_diagnostics(&b)?;

    let m = &cmp.matrix;
    writeln!(
        out,
        "paired comparison over {} shared ids (A = {name_a}, B = {name_b})",
        cmp.n
    )?;
    writeln!(out, "  both correct      {:>6}", m.both_correct)?;
    writeln!(
        out,
        "  A only correct    {:>6}  (errors B introduced)",
        m.a_only_correct
    )?;
    writeln!(
        out,
        "  B only correct    {:>6}  (errors B corrected)",
        m.b_only_correct
    )?;
    writeln!(out, "  both wrong        {:>6}", m.both_wrong)?;
    match cmp.error_reduction_pct {
        Some(r) => writeln!(
            out,
            "  error reduction   {r:.1}% ({} -> {} errors)",
            m.errors_a(),
            m.errors_b()
        )?,
        None => writeln!(out, "  error reduction   undefined (A made no errors)")?,
    }
    for (name, stats) in [(&name_a, &len_a), (&name_b, &len_b)] {
        writeln!(
            out,
            "length {name}: median answer {} tokens, median gold {} tokens",
            stats.median_pred_tokens, stats.median_gold_tokens
        )?;
        for (bucket, s) in &stats.buckets {
            match s.accuracy_pct {
                Some(acc) => writeln!(
                    out,
                    "  gold {bucket:<4} {acc:>5.1}% ({}/{})",
                    s.correct, s.n
                )?,
                None => writeln!(out, "  gold {bucket:<4}     - (0)")?,
            }
        }
    }

    let mut report = Report::new(args.judge_mode);
    report.comparisons.push(ComparisonEntry {
        label: format!("{name_a} vs {name_b}"),
        comparison: cmp,
    });
    report.lengths.push(LengthEntry {
        label: name_a,
        stats: len_a,
    });
    report.lengths.push(LengthEntry {
        label: name_b,
        stats: len_b,
    });
    emit_report(&report, &args.report)?;
    Ok(())
}

pub fn find_trace(path: &Path, id: &str) -> Result<AuditTrace> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let trace = AuditTrace::from_json_line(line)
            .with_context(|| format!("{}: line {} is not a valid trace", path.display(), i + 1))?;
        if trace.question_id == id {
            return Ok(trace);
        }
    }
    anyhow::bail!("no trace with id `{id}` in {}", path.display())
}

pub fn cmd_trace_show(path: &Path, id: &str, out: &mut dyn Write) -> Result<()> {
    let trace = find_trace(path, id)?;
    write!(out, "{}", render_trace(&trace))?;
    Ok(())
}

pub fn cmd_convert(args: ConvertArgs, out: &mut dyn Write) -> Result<()> {
    let mut records = convert::convert_file(args.format, &args.input)?;
    let available = records.len();
    if let Some(n) = args.sample {
        records = convert::sample(records, n, args.seed)?;
    }
    write_jsonl(&args.output, &records)
        .with_context(|| format!("writing {}", args.output.display()))?;
    writeln!(
        out,
        "wrote {} of {available} records to {}",
        records.len(),
        args.output.display()
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn log_args_take_optional_names() {
        assert_eq!(
            split_log_arg("squad=out/p.jsonl"),
            ("squad".into(), "out/p.jsonl".into())
        );
        assert_eq!(
            split_log_arg("out/pave.jsonl"),
            ("pave".into(), "out/pave.jsonl".into())
        );
    }
}
