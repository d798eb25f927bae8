//! Run configuration: a flat TOML file overridden field by field by flags.
//!
//! Every key of the file has a flag of the same name (snake_case in the
//! file, kebab-case on the command line).

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, LiveBackend, RetryPolicy, RetryingBackend, ScriptedBackend};
use crate::evaluation::JudgeMode;
use crate::model::{PipelineConfig, Variant, DEFAULT_MAX_FACTS, DEFAULT_TAU};
use crate::prompting::{Prompter, TemplateSet};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Live,
    Scripted,
}

/// One configuration source. Unset fields defer to the next source down.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    /// Pipeline variant: baseline, importance_weighting, support_scoring or pave.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Revision threshold in [0,1].
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub max_facts: Option<usize>,
    #[arg(long)]
    pub max_revisions: Option<u32>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Decoding seed forwarded to the backend.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Store full rendered prompts in traces.
    #[arg(long)]
    pub store_prompts: Option<bool>,
    /// Examples in flight at once.
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Base URL of an OpenAI-compatible API.
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Attempts per live call, retries included.
    #[arg(long)]
    pub max_attempts: Option<u32>,
    /// Response script for the scripted backend.
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long)]
    pub template_dir: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Trace output (JSONL).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Prediction log output (JSONL).
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Optional evaluation report output (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Span correctness: normalized or model_judge.
    #[arg(long)]
    pub judge_mode: Option<JudgeMode>,
}

impl ConfigLayer {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config file {}", path.display()))
    }

    /// Fields set here win; unset fields fall back to `lower`.
    pub fn over(self, lower: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            variant: self.variant.or(lower.variant),
            tau: self.tau.or(lower.tau),
            max_facts: self.max_facts.or(lower.max_facts),
            max_revisions: self.max_revisions.or(lower.max_revisions),
            temperature: self.temperature.or(lower.temperature),
            seed: self.seed.or(lower.seed),
            store_prompts: self.store_prompts.or(lower.store_prompts),
            parallelism: self.parallelism.or(lower.parallelism),
            backend: self.backend.or(lower.backend),
            base_url: self.base_url.or(lower.base_url),
            model: self.model.or(lower.model),
            timeout_secs: self.timeout_secs.or(lower.timeout_secs),
            max_attempts: self.max_attempts.or(lower.max_attempts),
            script: self.script.or(lower.script),
            template_dir: self.template_dir.or(lower.template_dir),
            dataset: self.dataset.or(lower.dataset),
            trace: self.trace.or(lower.trace),
            predictions: self.predictions.or(lower.predictions),
            report: self.report.or(lower.report),
            judge_mode: self.judge_mode.or(lower.judge_mode),
        }
    }
}

/// Fully resolved configuration, recorded verbatim in the run summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliConfig {
    pub variant: Variant,
    pub tau: f64,
    pub max_facts: usize,
    pub max_revisions: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub store_prompts: bool,
    pub parallelism: usize,
    pub backend: BackendKind,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub script: Option<PathBuf>,
    pub template_dir: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub trace: PathBuf,
    pub predictions: PathBuf,
    pub report: Option<PathBuf>,
    pub judge_mode: JudgeMode,
}

pub const DEFAULT_PARALLELISM: usize = 1;
pub const DEFAULT_TIMEOUT_SECS: u64 = 60;
pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;
pub const DEFAULT_TRACE_PATH: &str = "traces.jsonl";
pub const DEFAULT_PREDICTIONS_PATH: &str = "predictions.jsonl";

impl Default for CliConfig {
    fn default() -> Self {
        Self::resolve(ConfigLayer::default())
    }
}

impl CliConfig {
    /// Applies built-in defaults to unset fields. Does not validate.
    pub fn resolve(layer: ConfigLayer) -> Self {
        Self {
            variant: layer.variant.unwrap_or_default(),
            tau: layer.tau.unwrap_or(DEFAULT_TAU),
            max_facts: layer.max_facts.unwrap_or(DEFAULT_MAX_FACTS),
            max_revisions: layer.max_revisions.unwrap_or(1),
            temperature: layer.temperature.unwrap_or(0.0),
            seed: layer.seed,
            store_prompts: layer.store_prompts.unwrap_or(false),
            parallelism: layer.parallelism.unwrap_or(DEFAULT_PARALLELISM),
            backend: layer.backend.unwrap_or_default(),
            base_url: layer.base_url,
            model: layer.model,
            timeout_secs: layer.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS),
            max_attempts: layer.max_attempts.unwrap_or(DEFAULT_MAX_ATTEMPTS),
            script: layer.script,
            template_dir: layer.template_dir,
            dataset: layer.dataset,
            trace: layer.trace.unwrap_or_else(|| DEFAULT_TRACE_PATH.into()),
            predictions: layer
                .predictions
                .unwrap_or_else(|| DEFAULT_PREDICTIONS_PATH.into()),
            report: layer.report,
            judge_mode: layer.judge_mode.unwrap_or_default(),
        }
    }

    /// Flags over the optional config file over defaults.
    pub fn from_sources(flags: ConfigLayer, config_file: Option<&Path>) -> Result<Self> {
        let file = match config_file {
            Some(path) => ConfigLayer::from_file(path)?,
            None => ConfigLayer::default(),
        };
        Ok(Self::resolve(flags.over(file)))
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            tau: self.tau,
            variant: self.variant,
            max_facts: self.max_facts,
            max_revisions: self.max_revisions,
            temperature: self.temperature,
            seed: self.seed,
            store_prompts: self.store_prompts,
        }
    }

    /// Checks every field. Runs before any file is read or backend built.
    pub fn validate(&self) -> Result<()> {
        self.pipeline_config().validate()?;
        if self.parallelism == 0 {
            bail!("parallelism must be at least 1 (--parallelism)");
        }
        if self.timeout_secs == 0 {
            bail!("timeout_secs must be at least 1 (--timeout-secs)");
        }
        if self.max_attempts == 0 {
            bail!("max_attempts must be at least 1 (--max-attempts)");
        }
        if self.dataset.is_none() {
            bail!("missing dataset path: pass --dataset or set `dataset` in the config file");
        }
        match self.backend {
            BackendKind::Scripted if self.script.is_none() => {
                bail!("the scripted backend needs a response script: pass --script")
            }
            BackendKind::Live if self.base_url.is_none() => {
                bail!("the live backend needs an API base URL: pass --base-url")
            }
            BackendKind::Live if self.model.is_none() => {
                bail!("the live backend needs a model name: pass --model")
            }
            _ => {}
        }
        if let Some(dir) = &self.template_dir {
            if !dir.is_dir() {
                bail!(
                    "template directory {} does not exist (--template-dir)",
                    dir.display()
                );
            }
        }
        if self.trace == self.predictions {
            bail!("--trace and --predictions must name different files");
        }
        Ok(())
    }

    pub fn prompter(&self) -> Result<Prompter> {
        let templates = match &self.template_dir {
            Some(dir) => TemplateSet::load_dir(dir)?,
            None => TemplateSet::builtin(),
        };
        Ok(Prompter::new(templates, self.temperature, self.seed))
    }

    pub fn build_backend(&self) -> Result<Box<dyn Backend>> {
        match self.backend {
            BackendKind::Scripted => {
                let path = self.script.as_deref().context("--script is required")?;
                Ok(Box::new(ScriptedBackend::from_file(path)?))
            }
            BackendKind::Live => {
                let live = LiveBackend::from_env(
                    self.base_url.as_deref().context("--base-url is required")?,
                    self.model.clone().context("--model is required")?,
                    Duration::from_secs(self.timeout_secs),
                )?;
                let policy = RetryPolicy {
                    max_attempts: self.max_attempts,
                    ..RetryPolicy::default()
                };
                Ok(Box::new(RetryingBackend::new(live, policy)))
            }
        }
    }
}
