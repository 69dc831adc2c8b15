use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kgdata::{EntityId, FilterIndex, Side, Triple};
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeMode {
    /// Uniform over all entities.
    Raw,
    /// Uniform over entities that do not complete a known triple.
    #[default]
    Filtered,
}

/// Corruption candidates, one row of `n` entity ids per positive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegativeBatch {
    pub side: Side,
    pub candidates: Vec<Vec<EntityId>>,
}

const MAX_RETRIES: usize = 64;

/// Draws `n` corruption candidates per triple in `batch`.
///
/// Filtered mode rejects candidates that complete a known triple; after
/// `MAX_RETRIES` failed draws for one slot it falls back to a raw draw and
/// logs a warning.
pub fn sample_negatives(
    n_entities: usize,
    filter: &FilterIndex,
    batch: &[Triple],
    side: Side,
    n: usize,
    mode: NegativeMode,
    seed: u64,
) -> NegativeBatch {
    let tag = match side {
        Side::Head => "negatives-head",
        Side::Tail => "negatives-tail",
    };
    let mut rng = rng::stream(seed, tag, 0);
    sample_with(&mut rng, n_entities, filter, batch, side, n, mode)
}

pub(crate) fn sample_with(
    rng: &mut impl Rng,
    n_entities: usize,
    filter: &FilterIndex,
    batch: &[Triple],
    side: Side,
    n: usize,
    mode: NegativeMode,
) -> NegativeBatch {
    let mut fallbacks = 0usize;
    let candidates = batch
        .iter()
        .map(|triple| {
            (0..n)
                .map(|_| match mode {
                    NegativeMode::Raw => rng.gen_range(0..n_entities as u32),
                    NegativeMode::Filtered => {
                        for _ in 0..MAX_RETRIES {
                            let c = rng.gen_range(0..n_entities as u32);
                            if !filter.completes(triple, side, c) {
                                return c;
                            }
                        }
                        fallbacks += 1;
                        rng.gen_range(0..n_entities as u32)
                    }
                })
                .collect()
        })
        .collect();
    if fallbacks > 0 {
        log::warn!("{fallbacks} filtered negatives fell back to raw sampling");
    }
    NegativeBatch { side, candidates }
}
