use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LmError;

/// Architecture hyperparameters of the decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub embedding_size: usize,
    pub inner_size: usize,
    pub dropout: f64,
    pub context: usize,
    pub vocab_size: usize,
}

/// Named model/training presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 12 layers, 12 heads, 768 wide, 3072 inner, dropout 0.1.
    Full,
    /// 2 layers, 2 heads, 64 wide, 256 inner, no dropout.
    Desk,
}

impl Preset {
    pub fn model(self, vocab_size: usize) -> ModelConfig {
        match self {
            Preset::Full => ModelConfig {
                layers: 12,
                heads: 12,
                embedding_size: 768,
                inner_size: 3072,
                dropout: 0.1,
                context: 128,
                vocab_size,
            },
            Preset::Desk => ModelConfig {
                layers: 2,
                heads: 2,
                embedding_size: 64,
                inner_size: 256,
                dropout: 0.0,
                context: 128,
                vocab_size,
            },
        }
    }

    pub fn train(self, seed: u64) -> TrainConfig {
        match self {
            Preset::Full => TrainConfig {
                learning_rate: 1e-3,
                max_steps: 400_000,
                warmup_steps: 90_000,
                checkpoint_interval: 50_000,
                batch_size: 32,
                seed,
                weight_decay: 0.0,
                grad_clip: 1.0,
            },
            Preset::Desk => TrainConfig {
                learning_rate: 3e-3,
                max_steps: 5_000,
                warmup_steps: 250,
                checkpoint_interval: 1_000,
                batch_size: 8,
                seed,
                weight_decay: 0.0,
                grad_clip: 1.0,
            },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Full => "full",
            Preset::Desk => "desk",
        })
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            other => Err(format!("unknown preset {other:?} (expected full or desk)")),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        let bad = |msg: String| Err(LmError::Config(msg));
        if self.layers == 0 || self.heads == 0 || self.embedding_size == 0 || self.inner_size == 0 {
            return bad("layers, heads, embedding and inner sizes must be positive".into());
        }
        if self.embedding_size % self.heads != 0 {
            return bad(format!(
                "embedding size {} is not divisible by {} heads",
                self.embedding_size, self.heads
            ));
        }
        if self.context < 2 {
            return bad(format!("context {} is below 2", self.context));
        }
        if self.vocab_size == 0 {
            return bad("vocab size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} is outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn head_size(&self) -> usize {
        self.embedding_size / self.heads
    }

    /// Parameter count with the output projection tied to the token embedding.
    pub fn param_count(&self) -> usize {
        let (d, f) = (self.embedding_size, self.inner_size);
        let per_layer = 2 * d + (d * 3 * d + 3 * d) + (d * d + d) + 2 * d + (d * f + f) + (f * d + d);
        self.vocab_size * d + self.context * d + self.layers * per_layer + 2 * d
    }
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    pub warmup_steps: usize,
    pub checkpoint_interval: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
    /// Global gradient-norm ceiling; non-positive disables clipping.
    pub grad_clip: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        let bad = |msg: String| Err(LmError::Config(msg));
        if self.max_steps == 0 || self.batch_size == 0 || self.checkpoint_interval == 0 {
            return bad("max steps, batch size and checkpoint interval must be positive".into());
        }
        if self.warmup_steps > self.max_steps {
            return bad(format!(
                "warmup steps {} exceed max steps {}",
                self.warmup_steps, self.max_steps
            ));
        }
        if self.checkpoint_interval > self.max_steps {
            return bad(format!(
                "checkpoint interval {} exceeds max steps {}",
                self.checkpoint_interval, self.max_steps
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.weight_decay < 0.0 {
            return bad(format!("weight decay {} is negative", self.weight_decay));
        }
        Ok(())
    }

    /// Linear warmup from 0 to the peak, then linear decay to 0 at `max_steps`.
    pub fn lr_at(&self, step: usize) -> f64 {
        let peak = self.learning_rate;
        if step < self.warmup_steps {
            peak * step as f64 / self.warmup_steps as f64
        } else if step >= self.max_steps {
            0.0
        } else {
            peak * (self.max_steps - step) as f64 / (self.max_steps - self.warmup_steps) as f64
        }
    }

    /// Completed-step counts at which a checkpoint is evaluated.
    pub fn checkpoint_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = (1..=self.max_steps / self.checkpoint_interval)
            .map(|i| i * self.checkpoint_interval)
            .collect();
        if steps.last() != Some(&self.max_steps) {
            steps.push(self.max_steps);
        }
        steps
    }
}
