//! Long-tailed, task-partitioned, single-pass data streams.

mod augment;
mod csv_io;
mod idx;
mod source;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use augment::{AugmentConfig, Augmenter};
pub use csv_io::{load_csv_dataset, write_csv_dataset};
pub use idx::{load_idx_dataset, parse_idx_images, parse_idx_labels};
pub use source::{
    make_balanced_test_split, make_synthetic_source, PooledSource, SampleSource, Split,
    SyntheticSource,
};

use crate::error::{Error, Result};
use crate::numeric::RealMatrix;
use crate::seeds::mix;

/// One stream sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledVector {
    pub features: Vec<f64>,
    pub label: usize,
}

impl LabeledVector {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }
}

/// Stacks sample features into a `len x dim` matrix.
pub fn features_matrix(samples: &[LabeledVector]) -> Result<RealMatrix> {
    RealMatrix::from_rows(&samples.iter().map(|s| &s.features[..]).collect::<Vec<_>>())
}

pub fn labels_of(samples: &[LabeledVector]) -> Vec<usize> {
    samples.iter().map(|s| s.label).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    /// Tail-to-head count ratio in `(0, 1]`.
    pub rho: f64,
    pub num_classes: usize,
    pub max_per_class: usize,
    pub num_tasks: usize,
    pub classes_per_task: Vec<usize>,
    pub batch_size: usize,
    pub seed: u64,
    /// Permute labels before assigning counts and tasks.
    #[serde(default)]
    pub shuffle_classes: bool,
}

impl StreamConfig {
    /// Equal-size tasks: `num_classes / num_tasks` classes each.
    pub fn even(
        rho: f64,
        num_classes: usize,
        max_per_class: usize,
        num_tasks: usize,
        seed: u64,
    ) -> Result<Self> {
        if num_tasks == 0 || !num_classes.is_multiple_of(num_tasks) {
            return Err(Error::Config(format!(
                "{num_classes} classes cannot be split evenly into {num_tasks} tasks"
            )));
        }
        let cfg = Self {
            rho,
            num_classes,
            max_per_class,
            num_tasks,
            classes_per_task: vec![num_classes / num_tasks; num_tasks],
            batch_size: 16,
            seed,
            shuffle_classes: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_rho(self.rho)?;
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        if self.max_per_class == 0 {
            return Err(Error::Config("max_per_class must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.num_tasks == 0 || self.classes_per_task.len() != self.num_tasks {
            return Err(Error::Config(format!(
                "classes_per_task has {} entries but num_tasks is {}",
                self.classes_per_task.len(),
                self.num_tasks
            )));
        }
        if self.classes_per_task.contains(&0) {
            return Err(Error::Config("every task needs at least one class".into()));
        }
        let total: usize = self.classes_per_task.iter().sum();
        if total != self.num_classes {
            return Err(Error::Config(format!(
                "classes_per_task sums to {total}, expected num_classes = {}",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Class labels in the order they receive long-tail counts and task slots.
    pub fn class_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.num_classes).collect();
        if self.shuffle_classes {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, 0x006f_7264_6572));
            order.shuffle(&mut rng);
        }
        order
    }

    /// Training count per class label.
    pub fn counts_by_label(&self) -> Result<Vec<usize>> {
        let counts = long_tail_counts(self.rho, self.num_classes, self.max_per_class)?;
        let mut by_label = vec![0; self.num_classes];
        for (pos, &label) in self.class_order().iter().enumerate() {
            by_label[label] = counts[pos];
        }
        Ok(by_label)
    }

    /// Class labels of each task.
    pub fn task_classes(&self) -> Vec<Vec<usize>> {
        let order = self.class_order();
        let mut start = 0;
        self.classes_per_task
            .iter()
            .map(|&k| {
                let classes = order[start..start + k].to_vec();
                start += k;
                classes
            })
            .collect()
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Config(format!("rho must lie in (0, 1], got {rho}")));
    }
    Ok(())
}

/// Per-class sample counts decaying exponentially from `n_max` to `n_max * rho`.
///
/// `count_j = max(1, round(n_max * rho^((j-1)/(K-1))))` for `j = 1..=K`.
pub fn long_tail_counts(rho: f64, num_classes: usize, n_max: usize) -> Result<Vec<usize>> {
    check_rho(rho)?;
    if num_classes == 0 || n_max == 0 {
        return Err(Error::Config(format!(
            "long tail needs K >= 1 and n_max >= 1, got K={num_classes}, n_max={n_max}"
        )));
    }
    if num_classes == 1 {
        return Ok(vec![n_max]);
    }
    let denom = (num_classes - 1) as f64;
    Ok((0..num_classes)
        .map(|j| {
            let c = (n_max as f64 * rho.powf(j as f64 / denom)).round() as usize;
            c.max(1)
        })
        .collect())
}

/// One mini-batch of a task stream, identified by `(task, index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamBatch {
    pub task: usize,
    pub index: usize,
    pub samples: Vec<LabeledVector>,
}

impl StreamBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// The batches of one task. Can be consumed exactly once.
#[derive(Debug, Clone)]
pub struct TaskStream {
    task_id: usize,
    class_ids: Vec<usize>,
    batches: Vec<StreamBatch>,
    sample_count: usize,
    consumed: bool,
}

impl TaskStream {
    pub fn task_id(&self) -> usize {
        self.task_id
    }

    pub fn class_ids(&self) -> &[usize] {
        &self.class_ids
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn num_batches(&self) -> usize {
        self.batches.len()
    }

    /// Read-only view of the batches, for inspection without consuming.
    pub fn batches(&self) -> &[StreamBatch] {
        &self.batches
    }

    /// Hands out the batches. A second call fails with [`Error::StreamConsumed`].
    pub fn consume(&mut self) -> Result<Vec<StreamBatch>> {
        if self.consumed {
            return Err(Error::StreamConsumed(self.task_id));
        }
        self.consumed = true;
        Ok(std::mem::take(&mut self.batches))
    }
}

/// Draws the long-tailed subsample of every class and lays it out as task streams.
pub fn build_stream(source: &dyn SampleSource, cfg: &StreamConfig) -> Result<Vec<TaskStream>> {
    cfg.validate()?;
    if source.num_classes() < cfg.num_classes {
        return Err(Error::Config(format!(
            "source provides {} classes, stream needs {}",
            source.num_classes(),
            cfg.num_classes
        )));
    }
    let counts = cfg.counts_by_label()?;
    cfg.task_classes()
        .into_iter()
        .enumerate()
        .map(|(task_id, class_ids)| {
            let mut samples = Vec::new();
            for &class in &class_ids {
                let drawn = source.draw(class, counts[class], Split::Train, cfg.seed)?;
                if drawn.len() < counts[class] {
                    return Err(Error::InsufficientData {
                        class,
                        requested: counts[class],
                        available: drawn.len(),
                    });
                }
                samples.extend(drawn);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x7461_736b + task_id as u64));
            samples.shuffle(&mut rng);
            let sample_count = samples.len();
            let batches = samples
                .chunks(cfg.batch_size)
                .enumerate()
                .map(|(index, chunk)| StreamBatch {
                    task: task_id,
                    index,
                    samples: chunk.to_vec(),
                })
                .collect();
            Ok(TaskStream {
                task_id,
                class_ids,
                batches,
                sample_count,
                consumed: false,
            })
        })
        .collect()
}
