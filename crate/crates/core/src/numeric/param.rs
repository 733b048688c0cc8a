use serde::{Deserialize, Serialize};

use super::matrix::RealMatrix;
use crate::error::{Error, Result};

/// A trainable parameter with its accumulated gradient.
///
/// Backward passes add into `gradient`; [`sgd_step`] consumes and clears it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub value: RealMatrix,
    #[serde(skip, default)]
    gradient: Option<RealMatrix>,
    pub trainable: bool,
}

impl ParamTensor {
    pub fn new(value: RealMatrix) -> Self {
        Self {
            value,
            gradient: None,
            trainable: true,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    /// The accumulated gradient; zeros if nothing has been accumulated.
    pub fn gradient(&self) -> RealMatrix {
        self.gradient
            .clone()
            .unwrap_or_else(|| RealMatrix::zeros(self.value.rows(), self.value.cols()))
    }

    pub fn accumulate(&mut self, grad: &RealMatrix) -> Result<()> {
        if grad.shape() != self.value.shape() {
            return Err(Error::dimension(
                "accumulate",
                self.value.shape(),
                grad.shape(),
            ));
        }
        match &mut self.gradient {
            Some(g) => g.add_scaled(grad, 1.0)?,
            None => self.gradient = Some(grad.clone()),
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.gradient = None;
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            weight_decay: 1e-4,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// `value -= lr * (grad + wd * value)` on every trainable tensor, then clears
/// its gradient. Frozen tensors are not touched at all.
pub fn sgd_step<'a>(params: impl IntoIterator<Item = &'a mut ParamTensor>, cfg: &SgdConfig) {
    for p in params {
        if !p.trainable {
            continue;
        }
        let lr = cfg.learning_rate;
        let wd = cfg.weight_decay;
        match p.gradient.take() {
            Some(g) => {
                for (v, g) in p.value.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *v -= lr * (g + wd * *v);
                }
            }
            None => {
                if wd != 0.0 {
                    p.value.scale(1.0 - lr * wd);
                }
            }
        }
    }
}
