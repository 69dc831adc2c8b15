use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnchorSet, NO_ANCHOR, NO_RELATION, UNREACHABLE};
use crate::kgdata::{EntityId, KnowledgeGraph, RelationId};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AnchorToken {
    /// Index into the anchor set, or `NO_ANCHOR`.
    pub anchor: u32,
    /// Hop distance, or `UNREACHABLE` for an empty slot.
    pub distance: u32,
}

impl AnchorToken {
    pub const EMPTY: AnchorToken = AnchorToken {
        anchor: NO_ANCHOR,
        distance: UNREACHABLE,
    };

    pub fn is_empty(&self) -> bool {
        self.anchor == NO_ANCHOR
    }
}

/// Token sequence of one entity: exactly `K` anchor slots and `M` context
/// slots, padded with sentinels.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NodeHash {
    pub anchors: Vec<AnchorToken>,
    pub context: Vec<RelationId>,
}

/// Tokenization of every entity plus the settings that produced it.
///
/// Serializes to the vocabulary JSON file. Sentinels are written as `-1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "TokenizationFile", try_from = "TokenizationFile")]
pub struct Tokenization {
    pub anchors: AnchorSet,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub hashes: Vec<NodeHash>,
}

impl Tokenization {
    pub fn hash(&self, entity: EntityId) -> &NodeHash {
        &self.hashes[entity as usize]
    }

    /// Largest finite anchor distance observed.
    pub fn max_observed_distance(&self) -> u32 {
        self.hashes
            .iter()
            .flat_map(|h| &h.anchors)
            .filter(|t| !t.is_empty())
            .map(|t| t.distance)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenizationFile {
    anchors: Vec<EntityId>,
    strategy: super::AnchorStrategy,
    anchor_seed: u64,
    seed: u64,
    k: usize,
    m: usize,
    /// Per entity: `[[anchor, distance]; K]`.
    anchor_tokens: Vec<Vec<[i64; 2]>>,
    /// Per entity: `[relation; M]`.
    context_tokens: Vec<Vec<i64>>,
}

fn encode_sentinel(x: u32) -> i64 {
    if x == u32::MAX {
        -1
    } else {
        x as i64
    }
}

fn decode_sentinel(x: i64) -> Result<u32, String> {
    match x {
        -1 => Ok(u32::MAX),
        v if (0..u32::MAX as i64).contains(&v) => Ok(v as u32),
        v => Err(format!("token {v} out of range")),
    }
}

impl From<Tokenization> for TokenizationFile {
    fn from(t: Tokenization) -> Self {
        TokenizationFile {
            anchor_tokens: t
                .hashes
                .iter()
                .map(|h| {
                    h.anchors
                        .iter()
                        .map(|a| [encode_sentinel(a.anchor), encode_sentinel(a.distance)])
                        .collect()
                })
                .collect(),
            context_tokens: t
                .hashes
                .iter()
                .map(|h| h.context.iter().map(|&r| encode_sentinel(r)).collect())
                .collect(),
            anchors: t.anchors.anchors,
            strategy: t.anchors.strategy,
            anchor_seed: t.anchors.seed,
            seed: t.seed,
            k: t.k,
            m: t.m,
        }
    }
}

impl TryFrom<TokenizationFile> for Tokenization {
    type Error = String;

    fn try_from(f: TokenizationFile) -> Result<Self, Self::Error> {
        if f.anchor_tokens.len() != f.context_tokens.len() {
            return Err("anchor and context token lists differ in length".into());
        }
        let hashes = f
            .anchor_tokens
            .iter()
            .zip(&f.context_tokens)
            .map(|(a, c)| {
                if a.len() != f.k || c.len() != f.m {
                    return Err(format!("hash lengths must be k={} and m={}", f.k, f.m));
                }
                Ok(NodeHash {
                    anchors: a
                        .iter()
                        .map(|&[i, d]| {
                            Ok(AnchorToken {
                                anchor: decode_sentinel(i)?,
                                distance: decode_sentinel(d)?,
                            })
                        })
                        .collect::<Result<_, String>>()?,
                    context: c.iter().map(|&r| decode_sentinel(r)).collect::<Result<_, String>>()?,
                })
            })
            .collect::<Result<_, String>>()?;
        Ok(Tokenization {
            anchors: AnchorSet {
                anchors: f.anchors,
                strategy: f.strategy,
                seed: f.anchor_seed,
            },
            k: f.k,
            m: f.m,
            seed: f.seed,
            hashes,
        })
    }
}

/// Tokenizes every entity of `kg` against `anchors`.
///
/// Anchor tokens are the `k` nearest anchors in the undirected train graph,
/// ordered by `(distance, anchor index)`; context tokens are up to `m`
/// distinct incident train relations in a seed-determined order.
pub fn tokenize_all(kg: &KnowledgeGraph, anchors: &AnchorSet, k: usize, m: usize, seed: u64) -> Tokenization {
    let nearest = nearest_anchors(kg, &anchors.anchors, k);
    let hashes = nearest
        .into_iter()
        .enumerate()
        .map(|(entity, mut tokens)| {
            tokens.resize(k, AnchorToken::EMPTY);
            NodeHash {
                anchors: tokens,
                context: relational_context(kg, entity as EntityId, m, seed),
            }
        })
        .collect();
    Tokenization {
        anchors: anchors.clone(),
        k,
        m,
        seed,
        hashes,
    }
}

/// Level-synchronous multi-source BFS that keeps, per node, the best `k`
/// `(distance, anchor)` pairs.
///
/// Truncating each node to its best `k` is exact: any anchor ranked ahead of
/// `a` at a node on a shortest path to `a` is also ranked ahead of `a` one
/// hop further out.
fn nearest_anchors(kg: &KnowledgeGraph, anchors: &[EntityId], k: usize) -> Vec<Vec<AnchorToken>> {
    let n = kg.num_entities();
    let mut lists: Vec<Vec<AnchorToken>> = vec![Vec::new(); n];
    let mut last_added: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut changed: Vec<EntityId> = Vec::new();
    for (index, &a) in anchors.iter().enumerate() {
        lists[a as usize].push(AnchorToken {
            anchor: index as u32,
            distance: 0,
        });
        last_added[a as usize].push(index as u32);
        changed.push(a);
    }

    let mut distance = 0u32;
    while !changed.is_empty() {
        distance += 1;
        let mut pending: BTreeMap<EntityId, Vec<u32>> = BTreeMap::new();
        for &u in &changed {
            for edge in kg.adjacency(u) {
                let v = edge.neighbor;
                if lists[v as usize].len() < k {
                    pending.entry(v).or_default().extend_from_slice(&last_added[u as usize]);
                }
            }
        }
        for &u in &changed {
            last_added[u as usize].clear();
        }
        changed.clear();
        for (v, mut candidates) in pending {
            let list = &mut lists[v as usize];
            candidates.sort_unstable();
            candidates.dedup();
            let room = k - list.len();
            let fresh: Vec<u32> = candidates
                .into_iter()
                .filter(|&a| !list.iter().any(|t| t.anchor == a))
                .take(room)
                .collect();
            if fresh.is_empty() {
                continue;
            }
            list.extend(fresh.iter().map(|&anchor| AnchorToken { anchor, distance }));
            last_added[v as usize] = fresh;
            changed.push(v);
        }
    }
    lists
}

fn relational_context(kg: &KnowledgeGraph, entity: EntityId, m: usize, seed: u64) -> Vec<RelationId> {
    let mut relations: Vec<RelationId> = kg.adjacency(entity).iter().map(|e| e.relation).collect();
    relations.sort_unstable();
    relations.dedup();
    relations.sort_by_key(|&r| (rng::hash_words(&[seed, entity as u64, r as u64]), r));
    relations.truncate(m);
    relations.resize(m, NO_RELATION);
    relations
}
