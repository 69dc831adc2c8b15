use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{KgeError, Result};
use crate::kgdata::{EntityId, KnowledgeGraph};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorStrategy {
    /// Highest undirected train degree, ties by ascending id.
    Degree,
    Random,
    /// Half by degree, half uniformly from the rest.
    Mixed,
}

/// Selected anchors, kept sorted by entity id. An anchor's position in
/// `anchors` is its token index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub anchors: Vec<EntityId>,
    pub strategy: AnchorStrategy,
    pub seed: u64,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

pub fn select_anchors(kg: &KnowledgeGraph, n_anchors: usize, strategy: AnchorStrategy, seed: u64) -> Result<AnchorSet> {
    let n_e = kg.num_entities();
    if n_anchors == 0 || n_anchors > n_e {
        return Err(KgeError::validation(format!(
            "n_anchors must be in [1, {n_e}], got {n_anchors}"
        )));
    }
    let by_degree = || {
        let mut ids: Vec<EntityId> = (0..n_e as u32).collect();
        ids.sort_by_key(|&e| (std::cmp::Reverse(kg.degree(e)), e));
        ids
    };
    let mut rng = rng::stream(seed, "anchors", 0);
    let mut anchors: Vec<EntityId> = match strategy {
        AnchorStrategy::Degree => by_degree().into_iter().take(n_anchors).collect(),
        AnchorStrategy::Random => index::sample(&mut rng, n_e, n_anchors)
            .into_iter()
            .map(|i| i as u32)
            .collect(),
        AnchorStrategy::Mixed => {
            let n_random = n_anchors / 2;
            let ranked = by_degree();
            let (top, rest) = ranked.split_at(n_anchors - n_random);
            let mut rest = rest.to_vec();
            rest.sort_unstable();
            let mut chosen = top.to_vec();
            chosen.extend(
                index::sample(&mut rng, rest.len(), n_random)
                    .into_iter()
                    .map(|i| rest[i]),
            );
            chosen
        }
    };
    anchors.sort_unstable();
    Ok(AnchorSet {
        anchors,
        strategy,
        seed,
    })
}
