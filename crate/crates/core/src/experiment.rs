//! Declarative experiment description and the per-seed runner shared by the
//! CLI, the benchmarks and the acceptance tests.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{average_accuracy, average_forgetting, headtail_breakdown, HeadTailBreakdown};
use crate::losses::ContrastiveConfig;
use crate::model::{ModelConfig, Network};
use crate::seeds::{mix, RunSeeds};
use crate::stream::{
    build_stream, load_csv_dataset, load_idx_dataset, make_balanced_test_split,
    make_synthetic_source, PooledSource, SampleSource, StreamConfig,
};
use crate::trainer::{run_experiment, ExperimentOutcome, RunState, TrainConfig};

const TEST_SPLIT_TAG: u64 = 0x7465_7374_7370_6c74;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    Synthetic { dim: usize, cluster_spread: f64 },
    Idx { images: PathBuf, labels: PathBuf },
    Csv { path: PathBuf },
}

/// Encoder/projection widths; input and output widths come from the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    pub proj_dim: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hidden_dims: vec![64, 64],
            embed_dim: 64,
            proj_dim: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: DatasetSpec,
    pub stream: StreamConfig,
    pub train: TrainConfig,
    pub model: ModelSpec,
    pub test_per_class: usize,
    pub seeds: Vec<u64>,
}

impl ExperimentSpec {
    /// The desk-scale long-tailed benchmark: 20 Gaussian classes in 32
    /// dimensions, `rho = 0.01`, 10 tasks of 2 classes, a 200-slot buffer.
    pub fn synthetic_benchmark() -> Self {
        let stream = StreamConfig::even(0.01, 20, 200, 10, 0).expect("valid preset");
        // The stream is only ~60 batches long, so the frozen-encoder classifier
        // needs several steps per batch to keep up; a softer temperature keeps
        // the small MLP's embedding from over-clustering early tasks.
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            stage2_steps_per_batch: 20,
            contrastive: ContrastiveConfig { temperature: 0.5 },
            ..defaults
        };
        Self {
            dataset: DatasetSpec::Synthetic {
                dim: 32,
                cluster_spread: 0.2,
            },
            stream,
            train,
            model: ModelSpec::default(),
            test_per_class: 50,
            seeds: vec![0, 1, 2, 3, 4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stream.validate()?;
        self.train.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        if self.test_per_class == 0 {
            return Err(Error::Config("test_per_class must be positive".into()));
        }
        if let DatasetSpec::Synthetic {
            dim,
            cluster_spread,
        } = self.dataset
        {
            if dim == 0 || cluster_spread.is_nan() || cluster_spread < 0.0 {
                return Err(Error::Config(format!(
                    "synthetic dataset needs dim >= 1 and cluster_spread >= 0, got {dim}, {cluster_spread}"
                )));
            }
        }
        ModelConfig {
            input_dim: 1,
            hidden_dims: self.model.hidden_dims.clone(),
            embed_dim: self.model.embed_dim,
            proj_dim: self.model.proj_dim,
            num_classes_max: self.stream.num_classes,
        }
        .validate()
    }

    fn source(&self, stream_seed: u64) -> Result<Box<dyn SampleSource>> {
        let k = self.stream.num_classes;
        Ok(match &self.dataset {
            DatasetSpec::Synthetic {
                dim,
                cluster_spread,
            } => Box::new(make_synthetic_source(
                k,
                *dim,
                *cluster_spread,
                stream_seed,
            )?),
            DatasetSpec::Idx { images, labels } => Box::new(PooledSource::new(
                load_idx_dataset(images, labels)?,
                k,
                self.test_per_class,
                stream_seed,
            )?),
            DatasetSpec::Csv { path } => Box::new(PooledSource::new(
                load_csv_dataset(path)?,
                k,
                self.test_per_class,
                stream_seed,
            )?),
        })
    }

    /// Runs one seed end to end.
    pub fn run_seed(&self, seed: u64) -> Result<ExperimentOutcome> {
        self.run_seed_with(seed, |s| s)
    }

    /// Like [`Self::run_seed`] but lets the caller adjust the initial run state.
    pub fn run_seed_with(
        &self,
        seed: u64,
        prepare: impl FnOnce(RunState) -> RunState,
    ) -> Result<ExperimentOutcome> {
        self.validate()?;
        let seeds = RunSeeds::from_run_seed(seed);
        let source = self.source(seeds.stream)?;
        let stream = StreamConfig {
            seed: seeds.stream,
            ..self.stream.clone()
        };
        let tasks = build_stream(source.as_ref(), &stream)?;
        let test = make_balanced_test_split(
            source.as_ref(),
            stream.num_classes,
            self.test_per_class,
            mix(seeds.stream, TEST_SPLIT_TAG),
        )?;
        let network = Network::new(
            ModelConfig {
                input_dim: source.dim(),
                hidden_dims: self.model.hidden_dims.clone(),
                embed_dim: self.model.embed_dim,
                proj_dim: self.model.proj_dim,
                num_classes_max: stream.num_classes,
            },
            seeds.model_init,
        )?;
        let train = TrainConfig {
            seed: seeds.training,
            ..self.train.clone()
        };
        let state = prepare(RunState::new(network, train)?);
        run_experiment(tasks, &test, state)
    }
}

/// Final metrics of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub average_accuracy: f64,
    pub average_forgetting: Option<f64>,
    /// `A_t` after each task.
    pub per_task_average_accuracy: Vec<f64>,
    pub breakdown: HeadTailBreakdown,
    pub wall_clock_secs: f64,
}

impl SeedMetrics {
    pub fn from_outcome(seed: u64, out: &ExperimentOutcome) -> Result<Self> {
        let t = out.accuracy.num_tasks();
        let per_task = (1..=t)
            .map(|i| average_accuracy(&out.accuracy, i))
            .collect::<Result<Vec<_>>>()?;
        let last = out.confusions.last().ok_or(Error::EmptyTestSet)?;
        Ok(Self {
            seed,
            average_accuracy: *per_task.last().ok_or(Error::EmptyTestSet)?,
            average_forgetting: if t >= 2 {
                Some(average_forgetting(&out.accuracy, t)?)
            } else {
                None
            },
            per_task_average_accuracy: per_task,
            breakdown: headtail_breakdown(last, &out.train_counts),
            wall_clock_secs: out.elapsed_secs,
        })
    }
}

/// Mean and sample standard deviation (zero for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Self { mean, std, n })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std() {
        let s = MeanStd::of(&[0.5]).unwrap();
        assert_eq!((s.mean, s.std, s.n), (0.5, 0.0, 1));
        let s = MeanStd::of(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert!((s.std - 2.5f64.sqrt()).abs() < 1e-15);
        assert!(MeanStd::of(&[]).is_none());
    }

    #[test]
    fn preset_validates() {
        let spec = ExperimentSpec::synthetic_benchmark();
        spec.validate().unwrap();
        assert_eq!(spec.stream.num_classes, 20);
        let mut bad = spec.clone();
        bad.seeds.clear();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn csv_dataset_runs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let src = make_synthetic_source(4, 5, 0.2, 3).unwrap();
        let mut samples = Vec::new();
        for c in 0..4 {
            samples.extend(src.draw(c, 30, crate::stream::Split::Train, 1).unwrap());
        }
        crate::stream::write_csv_dataset(&path, &samples).unwrap();
        let spec = ExperimentSpec {
            dataset: DatasetSpec::Csv { path },
            stream: StreamConfig::even(0.5, 4, 20, 2, 0).unwrap(),
            train: TrainConfig::default(),
            model: ModelSpec {
                hidden_dims: vec![8],
                embed_dim: 8,
                proj_dim: 8,
            },
            test_per_class: 5,
            seeds: vec![0],
        };
        let out = spec.run_seed(0).unwrap();
        assert_eq!(out.accuracy.num_tasks(), 2);
        let m = SeedMetrics::from_outcome(0, &out).unwrap();
        assert_eq!(m.per_task_average_accuracy.len(), 2);
    }
}
