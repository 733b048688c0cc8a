//! Dual-stage training for long-tailed online continual learning.
//!
//! A single-pass stream of long-tailed tasks is consumed batch by batch. Each
//! batch is paired with exemplars retrieved from a reservoir-sampled replay
//! buffer, augmented, and routed through two stages: a supervised contrastive
//! stage that trains the encoder and projection head, and a classifier stage
//! that trains only the output layer with a prior-adjusted cross-entropy.

pub mod artifacts;
pub mod buffer;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod losses;
pub mod model;
pub mod numeric;
pub mod seeds;
pub mod stream;
pub mod trainer;

pub use error::{Error, Result};

pub use buffer::{PairingConfig, ReplayBuffer};
pub use eval::{AccuracyMatrix, ConfusionMatrix};
pub use losses::{ClassPrior, ContrastiveConfig, PriorScope};
pub use model::{ModelConfig, Network, Stage};
pub use numeric::{ParamTensor, RealMatrix, SgdConfig};
pub use stream::{AugmentConfig, LabeledVector, StreamConfig, TaskStream};
pub use trainer::{ExperimentOutcome, Method, RunState, Stage2Loss, TrainConfig};
