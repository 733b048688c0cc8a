//! MLP encoder with a projection head (representation stage) and a linear
//! classifier (classification stage), built on the numeric primitives.

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{
    l2_normalize_rows, l2_normalize_rows_backward, matmul, matmul_nt, matmul_tn, relu,
    relu_backward, ParamTensor, RealMatrix, NORM_EPSILON,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    pub proj_dim: usize,
    pub num_classes_max: usize,
}

impl ModelConfig {
    pub fn new(input_dim: usize, num_classes_max: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![64, 64],
            embed_dim: 64,
            proj_dim: 128,
            num_classes_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.input_dim,
            self.embed_dim,
            self.proj_dim,
            self.num_classes_max,
        ];
        if dims.iter().chain(&self.hidden_dims).any(|&d| d == 0) {
            return Err(Error::Config(format!(
                "all model dimensions must be >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Fully connected layer `y = x W + b`, `W` is `in x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamTensor,
    pub bias: ParamTensor,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weight: ParamTensor::new(
                RealMatrix::from_vec(fan_in, fan_out, data).expect("weight shape"),
            ),
            bias: ParamTensor::new(RealMatrix::zeros(1, fan_out)),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn forward(&self, x: &RealMatrix) -> Result<RealMatrix> {
        let mut y = matmul(x, &self.weight.value)?;
        y.add_row_broadcast(&self.bias.value)?;
        Ok(y)
    }

    /// Accumulates parameter gradients (trainable tensors only) and returns `dL/dx`.
    pub fn backward(&mut self, x: &RealMatrix, grad_y: &RealMatrix) -> Result<RealMatrix> {
        if self.weight.trainable {
            self.weight.accumulate(&matmul_tn(x, grad_y)?)?;
        }
        if self.bias.trainable {
            self.bias.accumulate(&grad_y.sum_rows())?;
        }
        matmul_nt(grad_y, &self.weight.value)
    }

    fn params_mut(&mut self) -> [&mut ParamTensor; 2] {
        [&mut self.weight, &mut self.bias]
    }

    fn params(&self) -> [&ParamTensor; 2] {
        [&self.weight, &self.bias]
    }
}

/// Which parameter groups a training stage updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    /// Encoder and projection head.
    One,
    /// Classifier only.
    Two,
    /// Everything (single-stage baselines).
    Joint,
}

/// Intermediate values of an encoder forward pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    /// Input of every linear layer.
    layer_inputs: Vec<RealMatrix>,
    /// Output of every linear layer.
    layer_outputs: Vec<RealMatrix>,
    pub embedding: RealMatrix,
}

impl EncoderTrace {
    /// Encoder output before normalization.
    pub fn raw_embedding(&self) -> &RealMatrix {
        self.layer_outputs.last().expect("encoder has layers")
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionTrace {
    input: RealMatrix,
    raw: RealMatrix,
    pub projection: RealMatrix,
}

impl ProjectionTrace {
    pub fn raw_projection(&self) -> &RealMatrix {
        &self.raw
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    config: ModelConfig,
    encoder: Vec<Linear>,
    projection: Linear,
    classifier: Linear,
}

impl Network {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![config.input_dim];
        widths.extend(&config.hidden_dims);
        widths.push(config.embed_dim);
        let encoder = widths
            .windows(2)
            .map(|w| Linear::new(w[0], w[1], &mut rng))
            .collect();
        let projection = Linear::new(config.embed_dim, config.proj_dim, &mut rng);
        let classifier = Linear::new(config.embed_dim, config.num_classes_max, &mut rng);
        Ok(Self {
            config,
            encoder,
            projection,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn classifier_mut(&mut self) -> &mut Linear {
        &mut self.classifier
    }

    pub fn encode_traced(&self, x: &RealMatrix) -> Result<EncoderTrace> {
        if x.cols() != self.config.input_dim {
            return Err(Error::dimension(
                "encode",
                x.shape(),
                (x.rows(), self.config.input_dim),
            ));
        }
        let depth = self.encoder.len();
        let mut layer_inputs = Vec::with_capacity(depth);
        let mut layer_outputs = Vec::with_capacity(depth);
        let mut h = x.clone();
        for (i, layer) in self.encoder.iter().enumerate() {
            let z = layer.forward(&h)?;
            layer_inputs.push(h);
            h = if i + 1 < depth { relu(&z) } else { z.clone() };
            layer_outputs.push(z);
        }
        let embedding = l2_normalize_rows(&h, NORM_EPSILON);
        Ok(EncoderTrace {
            layer_inputs,
            layer_outputs,
            embedding,
        })
    }

    /// Unit-norm embeddings, `batch x embed_dim`.
    pub fn encode(&self, x: &RealMatrix) -> Result<RealMatrix> {
        Ok(self.encode_traced(x)?.embedding)
    }

    pub fn encode_backward(
        &mut self,
        trace: &EncoderTrace,
        grad_embedding: &RealMatrix,
    ) -> Result<()> {
        let last = trace.layer_outputs.last().expect("encoder has layers");
        let mut grad =
            l2_normalize_rows_backward(last, &trace.embedding, grad_embedding, NORM_EPSILON)?;
        for i in (0..self.encoder.len()).rev() {
            if i + 1 < self.encoder.len() {
                grad = relu_backward(&trace.layer_outputs[i], &grad)?;
            }
            grad = self.encoder[i].backward(&trace.layer_inputs[i], &grad)?;
        }
        Ok(())
    }

    pub fn project_traced(&self, e: &RealMatrix) -> Result<ProjectionTrace> {
        if e.cols() != self.config.embed_dim {
            return Err(Error::dimension(
                "project",
                e.shape(),
                (e.rows(), self.config.embed_dim),
            ));
        }
        let raw = self.projection.forward(e)?;
        let projection = l2_normalize_rows(&raw, NORM_EPSILON);
        Ok(ProjectionTrace {
            input: e.clone(),
            raw,
            projection,
        })
    }

    /// Unit-norm projections, `batch x proj_dim`.
    pub fn project(&self, e: &RealMatrix) -> Result<RealMatrix> {
        Ok(self.project_traced(e)?.projection)
    }

    /// Returns `dL/de`.
    pub fn project_backward(
        &mut self,
        trace: &ProjectionTrace,
        grad_projection: &RealMatrix,
    ) -> Result<RealMatrix> {
        let grad_raw = l2_normalize_rows_backward(
            &trace.raw,
            &trace.projection,
            grad_projection,
            NORM_EPSILON,
        )?;
        self.projection.backward(&trace.input, &grad_raw)
    }

    /// Raw logits, `batch x num_classes_max`.
    pub fn classify(&self, e: &RealMatrix) -> Result<RealMatrix> {
        if e.cols() != self.config.embed_dim {
            return Err(Error::dimension(
                "classify",
                e.shape(),
                (e.rows(), self.config.embed_dim),
            ));
        }
        self.classifier.forward(e)
    }

    /// Returns `dL/de`.
    pub fn classify_backward(
        &mut self,
        e: &RealMatrix,
        grad_logits: &RealMatrix,
    ) -> Result<RealMatrix> {
        self.classifier.backward(e, grad_logits)
    }

    /// Raw logits for a feature batch.
    pub fn logits(&self, x: &RealMatrix) -> Result<RealMatrix> {
        self.classify(&self.encode(x)?)
    }

    pub fn set_stage(&mut self, stage: Stage) {
        let (repr, cls) = match stage {
            Stage::One => (true, false),
            Stage::Two => (false, true),
            Stage::Joint => (true, true),
        };
        for p in self.representation_params_mut() {
            p.trainable = repr;
        }
        for p in self.classifier.params_mut() {
            p.trainable = cls;
        }
    }

    /// Trainable flags in a fixed order: encoder, projection, classifier.
    pub fn trainable_flags(&self) -> Vec<bool> {
        self.all_params().map(|p| p.trainable).collect()
    }

    pub fn encoder_params_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.encoder.iter_mut().flat_map(|l| l.params_mut())
    }

    pub fn representation_params_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.encoder
            .iter_mut()
            .chain(std::iter::once(&mut self.projection))
            .flat_map(|l| l.params_mut())
    }

    pub fn classifier_params_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.classifier.params_mut().into_iter()
    }

    pub fn all_params_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.encoder
            .iter_mut()
            .chain([&mut self.projection, &mut self.classifier])
            .flat_map(|l| l.params_mut())
    }

    pub fn all_params(&self) -> impl Iterator<Item = &ParamTensor> {
        self.encoder
            .iter()
            .chain([&self.projection, &self.classifier])
            .flat_map(|l| l.params())
    }

    pub fn parameter_count(&self) -> usize {
        self.all_params().map(|p| p.value.as_slice().len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.all_params_mut().for_each(ParamTensor::zero_grad);
    }

    /// Bit-level fingerprint of the encoder weights.
    pub fn encoder_fingerprint(&self) -> u64 {
        fingerprint(self.encoder.iter().flat_map(|l| l.params()))
    }

    pub fn projection_fingerprint(&self) -> u64 {
        fingerprint(self.projection.params())
    }

    pub fn classifier_fingerprint(&self) -> u64 {
        fingerprint(self.classifier.params())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let net: Network = serde_json::from_slice(&fs::read(path)?)?;
        net.config.validate()?;
        Ok(net)
    }
}

fn fingerprint<'a>(params: impl IntoIterator<Item = &'a ParamTensor>) -> u64 {
    let mut h = DefaultHasher::new();
    for p in params {
        p.value.shape().hash(&mut h);
        for x in p.value.as_slice() {
            x.to_bits().hash(&mut h);
        }
    }
    h.finish()
}
