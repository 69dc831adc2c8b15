//! Anchor-based entity tokenization.
//!
//! Each entity is described by its `K` nearest anchors (with hop distances)
//! and up to `M` incident relation types. An encoder maps these tokens to an
//! entity vector, so the number of parameters depends on the anchor count
//! and the relation vocabulary, never on the number of entities.

mod anchors;
mod encoder;
mod tokenize;

use serde::{Deserialize, Serialize};

use crate::error::{KgeError, Result};

pub use anchors::{select_anchors, AnchorSet, AnchorStrategy};
pub use encoder::{
    count_parameters, encode_entity, Activation, AtomVocabulary, EncoderParams, EncodingMode, NodePieceGrads,
    NodePieceModel, ParamCountConfig,
};
pub use tokenize::{tokenize_all, AnchorToken, NodeHash, Tokenization};

/// Marks an empty anchor slot.
pub const NO_ANCHOR: u32 = u32::MAX;
/// Marks an empty relational-context slot.
pub const NO_RELATION: u32 = u32::MAX;
/// Distance of an empty anchor slot.
pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodePieceConfig {
    /// Number of anchors; `None` means `round(sqrt(|E|))`.
    #[serde(default)]
    pub n_anchors: Option<usize>,
    #[serde(default = "default_strategy")]
    pub strategy: AnchorStrategy,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    /// Atom width; `None` means the model dimension.
    #[serde(default)]
    pub d_atom: Option<usize>,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub mode: EncodingMode,
    /// Distances above this share the last distance embedding.
    #[serde(default = "default_max_distance")]
    pub max_distance: u32,
}

fn default_strategy() -> AnchorStrategy {
    AnchorStrategy::Degree
}
fn default_k() -> usize {
    20
}
fn default_m() -> usize {
    12
}
fn default_hidden() -> usize {
    256
}
fn default_max_distance() -> u32 {
    10
}

impl Default for NodePieceConfig {
    fn default() -> Self {
        NodePieceConfig {
            n_anchors: None,
            strategy: default_strategy(),
            k: default_k(),
            m: default_m(),
            d_atom: None,
            hidden: default_hidden(),
            activation: Activation::default(),
            mode: EncodingMode::default(),
            max_distance: default_max_distance(),
        }
    }
}

impl NodePieceConfig {
    pub fn resolved_anchors(&self, n_entities: usize) -> usize {
        self.n_anchors
            .unwrap_or_else(|| (n_entities as f64).sqrt().round() as usize)
            .clamp(1, n_entities.max(1))
    }

    pub fn resolved_d_atom(&self, dim: usize) -> usize {
        self.d_atom.unwrap_or(dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(KgeError::validation("nodepiece k must be at least 1"));
        }
        if self.hidden == 0 || self.d_atom == Some(0) {
            return Err(KgeError::validation("nodepiece widths must be positive"));
        }
        Ok(())
    }
}
