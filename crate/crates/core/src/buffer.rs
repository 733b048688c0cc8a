//! Fixed-capacity exemplar memory: reservoir update, uniform retrieval and
//! multi-exemplar pairing.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::mix;
use crate::stream::{write_csv_dataset, Augmenter, LabeledVector};

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    slots: Vec<LabeledVector>,
    seen_count: u64,
    update_rng: ChaCha8Rng,
    retrieve_rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("buffer capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            slots: Vec::with_capacity(capacity),
            seen_count: 0,
            update_rng: ChaCha8Rng::seed_from_u64(mix(seed, 0x0075_7064)),
            retrieve_rng: ChaCha8Rng::seed_from_u64(mix(seed, 0x0072_6574)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn seen_count(&self) -> u64 {
        self.seen_count
    }

    pub fn slots(&self) -> &[LabeledVector] {
        &self.slots
    }

    /// Reservoir sampling: the `n`-th offered sample (1-based, over the buffer's
    /// lifetime) is appended while `n <= M`, otherwise it replaces a uniformly
    /// random slot with probability `M / n`.
    pub fn reservoir_update(&mut self, batch: &[LabeledVector]) {
        for sample in batch {
            self.seen_count += 1;
            if self.slots.len() < self.capacity {
                self.slots.push(sample.clone());
            } else {
                // j uniform in [0, n); keep iff j < M, which has probability M/n
                let j = self.update_rng.random_range(0..self.seen_count);
                if (j as usize) < self.capacity {
                    self.slots[j as usize] = sample.clone();
                }
            }
        }
    }

    /// Up to `count` stored samples drawn uniformly without replacement.
    pub fn random_retrieve(&mut self, count: usize) -> Vec<LabeledVector> {
        let amount = count.min(self.slots.len());
        if amount == 0 {
            return Vec::new();
        }
        index::sample(&mut self.retrieve_rng, self.slots.len(), amount)
            .into_iter()
            .map(|i| self.slots[i].clone())
            .collect()
    }

    /// Retrieves slot indices instead of copies; same distribution as [`Self::random_retrieve`].
    pub fn random_retrieve_indices(&mut self, count: usize) -> Vec<usize> {
        let amount = count.min(self.slots.len());
        if amount == 0 {
            return Vec::new();
        }
        index::sample(&mut self.retrieve_rng, self.slots.len(), amount).into_vec()
    }

    /// Hash of the stored samples (not of the generator state).
    pub fn content_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.seen_count.hash(&mut h);
        for s in &self.slots {
            s.label.hash(&mut h);
            for f in &s.features {
                f.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// Stored sample count per class label.
    pub fn class_histogram(&self) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        for s in &self.slots {
            *hist.entry(s.label).or_insert(0) += 1;
        }
        hist
    }

    /// Dumps the stored samples as `label,features...` CSV.
    pub fn write_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv_dataset(path, &self.slots)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingConfig {
    /// Exemplars retrieved per incoming stream sample.
    pub exemplars_per_input: usize,
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self {
            exemplars_per_input: 1,
        }
    }
}

/// Retrieves `m * |batch|` exemplars, clamped to the buffer occupancy.
pub fn pair_exemplars(
    input_batch: &[LabeledVector],
    buf: &mut ReplayBuffer,
    cfg: &PairingConfig,
) -> Vec<LabeledVector> {
    buf.random_retrieve(cfg.exemplars_per_input * input_batch.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Stream,
    Buffer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum View {
    Original,
    Augmented,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub origin: Origin,
    pub view: View,
    /// Index in the combined batch of the other view of the same sample.
    pub partner: usize,
}

/// The per-step training batch: stream inputs, their augmentations, the
/// retrieved exemplars and their augmentations, in that order.
#[derive(Debug, Clone)]
pub struct CombinedBatch {
    pub samples: Vec<LabeledVector>,
    pub provenance: Vec<Provenance>,
}

impl CombinedBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

pub fn compose_combined_batch(
    stream: &[LabeledVector],
    exemplars: &[LabeledVector],
    augmenter: &mut Augmenter,
) -> CombinedBatch {
    let total = 2 * (stream.len() + exemplars.len());
    let mut samples = Vec::with_capacity(total);
    let mut provenance = Vec::with_capacity(total);
    for (part, origin) in [(stream, Origin::Stream), (exemplars, Origin::Buffer)] {
        let base = samples.len();
        let n = part.len();
        samples.extend_from_slice(part);
        samples.extend(augmenter.augment(part));
        provenance.extend((0..n).map(|i| Provenance {
            origin,
            view: View::Original,
            partner: base + n + i,
        }));
        provenance.extend((0..n).map(|i| Provenance {
            origin,
            view: View::Augmented,
            partner: base + i,
        }));
    }
    CombinedBatch {
        samples,
        provenance,
    }
}
