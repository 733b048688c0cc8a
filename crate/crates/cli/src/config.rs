//! Experiment configuration: a TOML file layered over the built-in benchmark
//! preset, then command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde_json::{Map, Value};

use delta_core::experiment::{DatasetSpec, ExperimentSpec};
use delta_core::{Method, PriorScope, Stage2Loss};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Two-stage training with the equalization loss in the classifier stage.
    Delta,
    /// Two-stage training with plain cross-entropy in the classifier stage.
    DeltaCe,
    /// Experience replay trained end to end with cross-entropy.
    ErCe,
}

impl MethodArg {
    pub fn apply(self, spec: &mut ExperimentSpec) {
        let (method, loss) = match self {
            MethodArg::Delta => (Method::Delta, Stage2Loss::Equalization),
            MethodArg::DeltaCe => (Method::Delta, Stage2Loss::CrossEntropy),
            MethodArg::ErCe => (Method::ErCe, Stage2Loss::CrossEntropy),
        };
        spec.train.method = method;
        spec.train.stage2_loss = loss;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriorScopeArg {
    Task,
    Batch,
}

/// Options shared by every subcommand. Flags win over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// TOML file overriding the built-in synthetic benchmark preset.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// `synthetic`, `idx:IMAGES,LABELS` or `csv:PATH`.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Tail-to-head ratio of per-class training counts.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub tasks: Option<usize>,
    #[arg(long)]
    pub classes_per_task: Option<usize>,
    #[arg(long)]
    pub buffer_size: Option<usize>,
    /// Exemplars retrieved per incoming sample.
    #[arg(long)]
    pub pairing: Option<usize>,
    /// Contrastive temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub prior_scope: Option<PriorScopeArg>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

impl ExperimentArgs {
    /// Preset, then config file, then flags. The result is validated.
    pub fn resolve(&self) -> CliResult<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => load_config(path)?,
            None => ExperimentSpec::synthetic_benchmark(),
        };
        self.apply_overrides(&mut spec)?;
        spec.validate()?;
        Ok(spec)
    }

    fn apply_overrides(&self, spec: &mut ExperimentSpec) -> CliResult<()> {
        if let Some(d) = &self.dataset {
            spec.dataset = parse_dataset(d, &spec.dataset)?;
        }
        if let Some(rho) = self.rho {
            spec.stream.rho = rho;
        }
        if self.tasks.is_some() || self.classes_per_task.is_some() {
            let tasks = self.tasks.unwrap_or(spec.stream.num_tasks);
            let per_task = match self.classes_per_task {
                Some(c) => c,
                None => uniform_task_size(&spec.stream.classes_per_task)?,
            };
            spec.stream.num_tasks = tasks;
            spec.stream.classes_per_task = vec![per_task; tasks];
            spec.stream.num_classes = tasks * per_task;
        }
        if let Some(m) = self.buffer_size {
            spec.train.buffer_capacity = m;
        }
        if let Some(m) = self.pairing {
            spec.train.pairing.exemplars_per_input = m;
        }
        if let Some(tau) = self.tau {
            spec.train.contrastive.temperature = tau;
        }
        if let Some(lr) = self.lr {
            spec.train.sgd.learning_rate = lr;
        }
        if let Some(wd) = self.weight_decay {
            spec.train.sgd.weight_decay = wd;
        }
        if let Some(b) = self.batch_size {
            spec.stream.batch_size = b;
        }
        if let Some(scope) = self.prior_scope {
            spec.train.prior_scope = match scope {
                PriorScopeArg::Task => PriorScope::Task,
                PriorScopeArg::Batch => PriorScope::Batch,
            };
        }
        if let Some(method) = self.method {
            method.apply(spec);
        }
        if let Some(seeds) = &self.seeds {
            spec.seeds = seeds.clone();
        }
        Ok(())
    }
}

fn uniform_task_size(sizes: &[usize]) -> CliResult<usize> {
    match sizes {
        [first, rest @ ..] if rest.iter().all(|s| s == first) => Ok(*first),
        _ => Err(CliError::Config(format!(
            "--tasks needs --classes-per-task when the configured tasks are uneven ({sizes:?})"
        ))),
    }
}

fn parse_dataset(arg: &str, current: &DatasetSpec) -> CliResult<DatasetSpec> {
    if arg == "synthetic" {
        return Ok(match current {
            DatasetSpec::Synthetic { .. } => current.clone(),
            _ => DatasetSpec::Synthetic {
                dim: 32,
                cluster_spread: 0.2,
            },
        });
    }
    if let Some(paths) = arg.strip_prefix("idx:") {
        if let Some((images, labels)) = paths.split_once(',') {
            return Ok(DatasetSpec::Idx {
                images: images.into(),
                labels: labels.into(),
            });
        }
    }
    if let Some(path) = arg.strip_prefix("csv:") {
        if !path.is_empty() {
            return Ok(DatasetSpec::Csv { path: path.into() });
        }
    }
    Err(CliError::Config(format!(
        "--dataset: expected `synthetic`, `idx:IMAGES,LABELS` or `csv:PATH`, got `{arg}`"
    )))
}

/// Reads a TOML experiment file. Missing keys keep the preset's values;
/// unknown keys are rejected.
pub fn load_config(path: &Path) -> CliResult<ExperimentSpec> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let overlay: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let overlay = serde_json::to_value(overlay)?;
    let mut base = serde_json::to_value(ExperimentSpec::synthetic_benchmark())?;
    merge(&mut base, overlay, "")?;
    serde_json::from_value(base).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn merge(base: &mut Value, overlay: Value, at: &str) -> CliResult<()> {
    match (base, overlay) {
        // A tagged table (the dataset) replaces the preset wholesale.
        (slot, Value::Object(o)) if o.contains_key("kind") => {
            *slot = Value::Object(o);
        }
        (Value::Object(b), Value::Object(o)) => {
            for (key, value) in o {
                let path = if at.is_empty() {
                    key.clone()
                } else {
                    format!("{at}.{key}")
                };
                match b.get_mut(&key) {
                    Some(slot) => merge(slot, value, &path)?,
                    None => return Err(CliError::Config(format!("unknown field `{path}`"))),
                }
            }
        }
        (slot, value) => *slot = value,
    }
    Ok(())
}

/// Renders a spec back to TOML, e.g. as a starting point for a config file.
pub fn to_toml(spec: &ExperimentSpec) -> CliResult<String> {
    let value = serde_json::to_value(spec)?;
    let table: Map<String, Value> = match value {
        Value::Object(m) => m,
        _ => unreachable!("spec serializes to a table"),
    };
    toml::to_string(&table).map_err(|e| CliError::Config(e.to_string()))
}
