//! Negative sampling, the self-adversarial loss, Adam and the training loop.

pub mod adam;
pub mod loss;
pub mod negatives;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{KgeError, Result};

pub use adam::{AdamSettings, Moments};
pub use loss::{adversarial_weights, batch_objective, log_sigmoid, loss, BatchGrads, LossSettings};
pub use negatives::{sample_negatives, NegativeBatch, NegativeMode};
pub use trainer::{train, EntityParams, MetricsRecord, TrainOutcome, TrainState};

/// Where entity vectors come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityMode {
    /// One free vector per entity.
    #[default]
    Table,
    /// Vectors encoded from anchor tokens.
    NodePiece,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Negatives per positive and per corrupted side.
    pub negatives: usize,
    /// Self-adversarial temperature α; 0 weighs negatives uniformly.
    pub adversarial_temperature: f64,
    pub learning_rate: f64,
    pub max_steps: u64,
    pub seed: u64,
    pub entity_mode: EntityMode,
    /// L3 penalty coefficient.
    pub regularization: f64,
    pub negative_mode: NegativeMode,
    /// Validate every this many steps; 0 validates only at the end.
    pub eval_interval: u64,
    /// Negatives per query in the sampled validation protocol.
    pub eval_candidates: usize,
    /// Project touched entity rows back to unit L2 norm after each step.
    pub renormalize_entities: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 512,
            negatives: 128,
            adversarial_temperature: 1.0,
            learning_rate: 0.0005,
            max_steps: 10_000,
            seed: 0,
            entity_mode: EntityMode::Table,
            regularization: 0.0,
            negative_mode: NegativeMode::Filtered,
            eval_interval: 1_000,
            eval_candidates: 500,
            renormalize_entities: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.negatives == 0 {
            return Err(KgeError::validation("batch_size and negatives must be positive"));
        }
        if self.adversarial_temperature.is_nan() || self.adversarial_temperature < 0.0 {
            return Err(KgeError::validation("adversarial_temperature must be >= 0"));
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return Err(KgeError::validation("learning_rate must be >= 0"));
        }
        if self.regularization.is_nan() || self.regularization < 0.0 {
            return Err(KgeError::validation("regularization must be >= 0"));
        }
        if self.eval_candidates == 0 {
            return Err(KgeError::validation("eval_candidates must be positive"));
        }
        Ok(())
    }
}
