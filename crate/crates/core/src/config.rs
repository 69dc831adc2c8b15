//! Flat run configuration shared by config files and command-line flags.
//!
//! Keys are kebab-case and mirror the CLI flags one to one. A config file
//! supplies a base layer, flags override individual keys, and unknown keys
//! are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{KgeError, Result};
use crate::models::{ModelKind, ModelSpec, Norm};
use crate::nodepiece::{Activation, AnchorStrategy, EncodingMode, NodePieceConfig};
use crate::training::{EntityMode, NegativeMode, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelKind,
    pub dim: usize,
    pub norm: Norm,
    pub u: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub negatives: usize,
    pub temperature: f64,
    pub lr: f64,
    pub steps: u64,
    pub seed: u64,
    pub entity_mode: EntityMode,
    pub regularization: f64,
    pub negative_mode: NegativeMode,
    pub eval_interval: u64,
    pub eval_candidates: usize,
    pub renormalize: bool,
    pub anchors: Option<usize>,
    pub strategy: AnchorStrategy,
    pub k: usize,
    pub m: usize,
    pub d_atom: Option<usize>,
    pub hidden: usize,
    pub activation: Activation,
    pub encoding: EncodingMode,
    pub max_distance: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = ModelSpec::new(ModelKind::TripleREv2, 200);
        let train = TrainConfig::default();
        let np = NodePieceConfig::default();
        RunConfig {
            model: spec.kind,
            dim: spec.dim,
            norm: spec.norm,
            u: spec.u,
            gamma: spec.gamma,
            batch_size: train.batch_size,
            negatives: train.negatives,
            temperature: train.adversarial_temperature,
            lr: train.learning_rate,
            steps: train.max_steps,
            seed: train.seed,
            entity_mode: train.entity_mode,
            regularization: train.regularization,
            negative_mode: train.negative_mode,
            eval_interval: train.eval_interval,
            eval_candidates: train.eval_candidates,
            renormalize: train.renormalize_entities,
            anchors: np.n_anchors,
            strategy: np.strategy,
            k: np.k,
            m: np.m,
            d_atom: np.d_atom,
            hidden: np.hidden,
            activation: np.activation,
            encoding: np.mode,
            max_distance: np.max_distance,
        }
    }
}

impl RunConfig {
    /// Builds a config from an optional base JSON object and key overrides.
    pub fn from_layers(base: Option<Value>, overrides: &Map<String, Value>) -> Result<Self> {
        let mut merged = match base {
            None => Map::new(),
            Some(Value::Object(m)) => m,
            Some(_) => return Err(KgeError::Validation("config file must hold a JSON object".into())),
        };
        for (k, v) in overrides {
            merged.insert(k.clone(), v.clone());
        }
        let cfg: RunConfig =
            serde_json::from_value(Value::Object(merged)).map_err(|e| KgeError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &Map<String, Value>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| KgeError::io(path, e))?;
        let base: Value =
            serde_json::from_str(&text).map_err(|e| KgeError::Validation(format!("{}: {e}", path.display())))?;
        Self::from_layers(Some(base), overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_spec().validate()?;
        self.train_config().validate()?;
        self.nodepiece_config().validate()
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.model,
            dim: self.dim,
            norm: self.norm,
            u: self.u,
            gamma: self.gamma,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            negatives: self.negatives,
            adversarial_temperature: self.temperature,
            learning_rate: self.lr,
            max_steps: self.steps,
            seed: self.seed,
            entity_mode: self.entity_mode,
            regularization: self.regularization,
            negative_mode: self.negative_mode,
            eval_interval: self.eval_interval,
            eval_candidates: self.eval_candidates,
            renormalize_entities: self.renormalize,
        }
    }

    pub fn nodepiece_config(&self) -> NodePieceConfig {
        NodePieceConfig {
            n_anchors: self.anchors,
            strategy: self.strategy,
            k: self.k,
            m: self.m,
            d_atom: self.d_atom,
            hidden: self.hidden,
            activation: self.activation,
            mode: self.encoding,
            max_distance: self.max_distance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_win_over_base() {
        let base = json!({"model": "pairre", "dim": 8, "lr": 0.1});
        let mut over = Map::new();
        over.insert("dim".into(), json!(16));
        let cfg = RunConfig::from_layers(Some(base), &over).unwrap();
        assert_eq!(cfg.model, ModelKind::PairRE);
        assert_eq!(cfg.dim, 16);
        assert_eq!(cfg.lr, 0.1);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_layers(Some(json!({"learning-rate": 0.1})), &Map::new()).unwrap_err();
        assert!(matches!(err, KgeError::Validation(_)), "{err}");
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig::default();
        let v = serde_json::to_value(&cfg).unwrap();
        assert_eq!(RunConfig::from_layers(Some(v), &Map::new()).unwrap(), cfg);
    }

    #[test]
    fn invalid_values_rejected() {
        let err = RunConfig::from_layers(Some(json!({"dim": 0})), &Map::new()).unwrap_err();
        assert!(matches!(err, KgeError::Validation(_)));
    }
}
