use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vib::BottleneckMode;

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the summed KL term in the loss.
    pub beta: f64,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stochastic validation repetitions.
    pub eval_runs: usize,
    /// `stochastic` for bottlenecked training, `disabled` for the plain
    /// transformer baseline.
    pub bottleneck: BottleneckMode,
    /// Random resized crop and flip on training images.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 0.0,
            base_lr: 1e-3,
            weight_decay: 0.05,
            epochs: 20,
            warmup_epochs: 2,
            batch_size: 64,
            seed: 0,
            eval_runs: 10,
            bottleneck: BottleneckMode::Stochastic,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be a finite value >= 0, got {}", self.beta)));
        }
        if !(self.base_lr >= 0.0) || !self.base_lr.is_finite() {
            return Err(Error::Config(format!("base_lr must be >= 0, got {}", self.base_lr)));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::Config(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if self.warmup_epochs > self.epochs {
            return Err(Error::Config(format!(
                "warmup_epochs {} exceeds epochs {}",
                self.warmup_epochs, self.epochs
            )));
        }
        if self.eval_runs == 0 {
            return Err(Error::Config("eval_runs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        match self.bottleneck {
            BottleneckMode::Stochastic | BottleneckMode::Disabled => Ok(()),
            other => Err(Error::Config(format!(
                "training bottleneck must be stochastic or disabled, got {}",
                other.as_str()
            ))),
        }
    }

    /// Mode used for validation passes: stochastic bottlenecks stay
    /// stochastic, the baseline stays disabled.
    pub fn eval_mode(&self) -> BottleneckMode {
        self.bottleneck
    }
}
