//! Embedding tables and the translation-distance scoring family.
//!
//! All four models score a triple as the negated p-norm of a difference
//! vector `x = h∘P_h − t∘P_t + T` where the projections `P_h`, `P_t` and the
//! translation `T` come from the relation parameters:
//!
//! | kind          | segments          | `P_h`      | `P_t`      | `T`   |
//! |---------------|-------------------|------------|------------|-------|
//! | `TransE`      | `[r]`             | `e`        | `e`        | `r`   |
//! | `PairRE`      | `[r_h, r_t]`      | `r_h`      | `r_t`      | `0`   |
//! | `TripleREv1`  | `[r_h, r_m, r_t]` | `r_h`      | `r_t`      | `r_m` |
//! | `TripleREv2`  | `[r_h, r_m, r_t]` | `r_h + ue` | `r_t + ue` | `r_m` |
//!
//! `e` is the all-ones vector. Every variant evaluates `x` in the same
//! operation order, `(h∘P_h − t∘P_t) + T`, so the special cases reduce to
//! each other bit for bit.

pub(crate) mod score;
mod tables;

use serde::{Deserialize, Serialize};

use crate::error::{KgeError, Result};

pub use score::{add_distance_grad, distance_grad, grad, score, score_batch_corrupted, ScoreGrad};
pub use tables::{init_params, EntityTable, Matrix, RelationParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "transe")]
    TransE,
    #[serde(rename = "pairre")]
    PairRE,
    #[serde(rename = "triplere_v1", alias = "triplere")]
    TripleREv1,
    #[serde(rename = "triplere_v2")]
    TripleREv2,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::TransE,
        ModelKind::PairRE,
        ModelKind::TripleREv1,
        ModelKind::TripleREv2,
    ];

    /// Number of `dim`-wide segments per relation.
    pub fn segments(self) -> usize {
        match self {
            ModelKind::TransE => 1,
            ModelKind::PairRE => 2,
            ModelKind::TripleREv1 | ModelKind::TripleREv2 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TransE => "transe",
            ModelKind::PairRE => "pairre",
            ModelKind::TripleREv1 => "triplere_v1",
            ModelKind::TripleREv2 => "triplere_v2",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "transe" => Some(ModelKind::TransE),
            "pairre" => Some(ModelKind::PairRE),
            "triplere" | "triplere_v1" | "triplerev1" => Some(ModelKind::TripleREv1),
            "triplere_v2" | "triplerev2" => Some(ModelKind::TripleREv2),
            _ => None,
        }
    }

    /// Column offset of the translation segment, if the model has one
    /// stored separately from the projections.
    pub fn translation_segment(self) -> Option<usize> {
        match self {
            ModelKind::TransE => Some(0),
            ModelKind::PairRE => None,
            ModelKind::TripleREv1 | ModelKind::TripleREv2 => Some(1),
        }
    }
}

/// Norm order of the distance. L1 by default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Norm {
    #[default]
    L1,
    L2,
}

impl TryFrom<u8> for Norm {
    type Error = String;

    fn try_from(p: u8) -> std::result::Result<Self, Self::Error> {
        match p {
            1 => Ok(Norm::L1),
            2 => Ok(Norm::L2),
            other => Err(format!("norm order must be 1 or 2, got {other}")),
        }
    }
}

impl From<Norm> for u8 {
    fn from(n: Norm) -> u8 {
        match n {
            Norm::L1 => 1,
            Norm::L2 => 2,
        }
    }
}

/// Residual constants tried for TripleREv2.
pub const RESIDUAL_GRID: [f64; 4] = [1.0, 0.5, 0.25, 0.125];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub dim: usize,
    #[serde(default)]
    pub norm: Norm,
    /// Residual constant added to both projections (TripleREv2 only).
    #[serde(default = "default_u")]
    pub u: f64,
    /// Margin: training and evaluation see `gamma + score`.
    pub gamma: f64,
}

fn default_u() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn new(kind: ModelKind, dim: usize) -> Self {
        ModelSpec {
            kind,
            dim,
            norm: Norm::L1,
            u: 1.0,
            gamma: 12.0,
        }
    }

    pub fn with_norm(mut self, norm: Norm) -> Self {
        self.norm = norm;
        self
    }

    pub fn with_u(mut self, u: f64) -> Self {
        self.u = u;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn relation_width(&self) -> usize {
        self.kind.segments() * self.dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(KgeError::validation("dim must be positive"));
        }
        if !(self.u >= 0.0 && self.u.is_finite()) {
            return Err(KgeError::validation("u must be a finite non-negative number"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(KgeError::validation("gamma must be positive"));
        }
        if self.kind == ModelKind::TripleREv2 && !RESIDUAL_GRID.contains(&self.u) {
            log::info!("u = {} is outside the usual grid {RESIDUAL_GRID:?}", self.u);
        }
        Ok(())
    }
}

/// Parameter count of a table-based model: `|E|·d + |R|·k·d`.
pub fn count_parameters(spec: &ModelSpec, n_entities: u64, n_relations: u64) -> u64 {
    let d = spec.dim as u64;
    n_entities * d + n_relations * spec.kind.segments() as u64 * d
}
