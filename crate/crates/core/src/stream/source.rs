use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::LabeledVector;
use crate::error::{Error, Result};
use crate::seeds::mix;

/// Which partition of a source a draw comes from. Train and test draws never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn tag(self) -> u64 {
        match self {
            Split::Train => 0x0074_7261_696e,
            Split::Test => 0x7465_7374,
        }
    }
}

/// A per-class sample provider.
pub trait SampleSource: Send + Sync {
    fn num_classes(&self) -> usize;

    fn dim(&self) -> usize;

    /// Draws `n` samples of `class` from the given split. Deterministic in `(class, n, split, seed)`.
    fn draw(&self, class: usize, n: usize, split: Split, seed: u64) -> Result<Vec<LabeledVector>>;
}

/// Isotropic Gaussian clusters around seeded unit-norm class means.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    means: Vec<Vec<f64>>,
    spread: f64,
}

/// Builds a Gaussian-mixture source with one cluster per class.
pub fn make_synthetic_source(
    num_classes: usize,
    dim: usize,
    cluster_spread: f64,
    seed: u64,
) -> Result<SyntheticSource> {
    if num_classes == 0 || dim == 0 {
        return Err(Error::Config(format!(
            "synthetic source needs at least one class and one dimension, got K={num_classes}, dim={dim}"
        )));
    }
    if !(cluster_spread >= 0.0 && cluster_spread.is_finite()) {
        return Err(Error::Config(format!(
            "cluster_spread must be a non-negative real, got {cluster_spread}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x6d65_616e));
    let means = (0..num_classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect();
    Ok(SyntheticSource {
        means,
        spread: cluster_spread,
    })
}

impl SyntheticSource {
    pub fn class_mean(&self, class: usize) -> &[f64] {
        &self.means[class]
    }

    pub fn spread(&self) -> f64 {
        self.spread
    }
}

impl SampleSource for SyntheticSource {
    fn num_classes(&self) -> usize {
        self.means.len()
    }

    fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn draw(&self, class: usize, n: usize, split: Split, seed: u64) -> Result<Vec<LabeledVector>> {
        let mean = self.means.get(class).ok_or(Error::InsufficientData {
            class,
            requested: n,
            available: 0,
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(seed, split.tag()), class as u64));
        Ok((0..n)
            .map(|_| {
                let features = mean
                    .iter()
                    .map(|m| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + self.spread * z
                    })
                    .collect();
                LabeledVector::new(features, class)
            })
            .collect())
    }
}

/// A finite labeled dataset partitioned per class into a training prefix and a
/// reserved test suffix of fixed size.
#[derive(Debug, Clone)]
pub struct PooledSource {
    by_class: Vec<Vec<Vec<f64>>>,
    test_per_class: usize,
    dim: usize,
}

impl PooledSource {
    /// Groups `samples` by label, shuffles each class pool with `seed` and sets
    /// aside the last `test_per_class` samples of each class for testing.
    pub fn new(
        samples: Vec<LabeledVector>,
        num_classes: usize,
        test_per_class: usize,
        seed: u64,
    ) -> Result<Self> {
        let dim = samples.first().map_or(0, |s| s.features.len());
        if dim == 0 {
            return Err(Error::Config("dataset is empty".into()));
        }
        let mut by_class = vec![Vec::new(); num_classes];
        for s in samples {
            if s.label >= num_classes {
                return Err(Error::Config(format!(
                    "label {} is outside [0, {num_classes})",
                    s.label
                )));
            }
            if s.features.len() != dim {
                return Err(Error::Config(format!(
                    "inconsistent feature dimension: expected {dim}, got {}",
                    s.features.len()
                )));
            }
            by_class[s.label].push(s.features);
        }
        for (class, pool) in by_class.iter_mut().enumerate() {
            if pool.len() < test_per_class {
                return Err(Error::InsufficientData {
                    class,
                    requested: test_per_class,
                    available: pool.len(),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, class as u64));
            pool.shuffle(&mut rng);
        }
        Ok(Self {
            by_class,
            test_per_class,
            dim,
        })
    }

    pub fn train_available(&self, class: usize) -> usize {
        self.by_class[class].len() - self.test_per_class
    }
}

impl SampleSource for PooledSource {
    fn num_classes(&self) -> usize {
        self.by_class.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn draw(&self, class: usize, n: usize, split: Split, _seed: u64) -> Result<Vec<LabeledVector>> {
        let pool = self.by_class.get(class).ok_or(Error::InsufficientData {
            class,
            requested: n,
            available: 0,
        })?;
        let (start, available) = match split {
            Split::Train => (0, pool.len() - self.test_per_class),
            Split::Test => (pool.len() - self.test_per_class, self.test_per_class),
        };
        if n > available {
            return Err(Error::InsufficientData {
                class,
                requested: n,
                available,
            });
        }
        Ok(pool[start..start + n]
            .iter()
            .map(|f| LabeledVector::new(f.clone(), class))
            .collect())
    }
}

/// Exactly `per_class` test samples for each of the first `num_classes` classes, in label order.
pub fn make_balanced_test_split(
    source: &dyn SampleSource,
    num_classes: usize,
    per_class: usize,
    seed: u64,
) -> Result<Vec<LabeledVector>> {
    let mut out = Vec::with_capacity(num_classes * per_class);
    for class in 0..num_classes {
        out.extend(source.draw(class, per_class, Split::Test, seed)?);
    }
    Ok(out)
}
