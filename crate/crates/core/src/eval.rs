//! Link-prediction ranking: filtered full ranking and sampled-candidate
//! ranking, reported as MR, MRR and Hits@{1,3,10}.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KgeError, Result};
use crate::kgdata::{EntityId, FilterIndex, KnowledgeGraph, Side, Split, Triple};
use crate::models::{score_batch_corrupted, EntityTable, ModelSpec, RelationParams};
use crate::real::Real;
use crate::rng;
use crate::training::negatives::{sample_with, NegativeMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    /// Rank against every entity, masking other known-true completions.
    FilteredFull,
    /// Rank against every entity without masking.
    RawFull,
    /// Rank against `n_candidates` filtered random negatives.
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sides {
    Head,
    Tail,
    Both,
}

impl Sides {
    fn list(self) -> &'static [Side] {
        match self {
            Sides::Head => &[Side::Head],
            Sides::Tail => &[Side::Tail],
            Sides::Both => &Side::BOTH,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub kind: ProtocolKind,
    pub n_candidates: usize,
    pub sides: Sides,
    pub seed: u64,
}

impl EvalProtocol {
    pub fn filtered_full() -> Self {
        EvalProtocol {
            kind: ProtocolKind::FilteredFull,
            n_candidates: 500,
            sides: Sides::Both,
            seed: 0,
        }
    }

    pub fn raw_full() -> Self {
        EvalProtocol {
            kind: ProtocolKind::RawFull,
            ..Self::filtered_full()
        }
    }

    pub fn sampled(n_candidates: usize, seed: u64) -> Self {
        EvalProtocol {
            kind: ProtocolKind::Sampled,
            n_candidates,
            sides: Sides::Both,
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideMetrics {
    pub mr: f64,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub n_queries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mr: f64,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub n_queries: usize,
    pub head: Option<SideMetrics>,
    pub tail: Option<SideMetrics>,
}

impl EvalResult {
    /// Fixed-width table with columns MR, MRR, Hit@10, Hit@3, Hit@1.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<8} {:>10} {:>8} {:>8} {:>8} {:>8}\n",
            "side", "MR", "MRR", "Hit@10", "Hit@3", "Hit@1"
        );
        let mut row = |name: &str, m: &SideMetrics| {
            out.push_str(&format!(
                "{:<8} {:>10.2} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
                name, m.mr, m.mrr, m.hits10, m.hits3, m.hits1
            ));
        };
        if let Some(h) = &self.head {
            row("head", h);
        }
        if let Some(t) = &self.tail {
            row("tail", t);
        }
        row("both", &self.overall());
        out
    }

    pub fn overall(&self) -> SideMetrics {
        SideMetrics {
            mr: self.mr,
            mrr: self.mrr,
            hits1: self.hits1,
            hits3: self.hits3,
            hits10: self.hits10,
            n_queries: self.n_queries,
        }
    }
}

impl fmt::Display for EvalResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.table())
    }
}

/// Rank of `scores[true_index]` with ties resolved to the mean of the
/// optimistic and pessimistic rank.
pub fn rank<T: Real>(scores: &[T], true_index: usize) -> Result<f64> {
    if true_index >= scores.len() {
        return Err(KgeError::contract(format!(
            "true index {true_index} out of range for {} scores",
            scores.len()
        )));
    }
    if !scores.iter().all(|s| s.is_finite()) {
        return Err(KgeError::contract("non-finite score"));
    }
    Ok(rank_masked(scores, true_index, |_| false))
}

fn rank_masked<T: Real>(scores: &[T], true_index: usize, masked: impl Fn(usize) -> bool) -> f64 {
    let target = scores[true_index];
    let (mut greater, mut ties) = (0usize, 0usize);
    for (i, &s) in scores.iter().enumerate() {
        if i == true_index || masked(i) {
            continue;
        }
        if s > target {
            greater += 1;
        } else if s == target {
            ties += 1;
        }
    }
    1.0 + greater as f64 + ties as f64 / 2.0
}

pub fn metrics_from_ranks(ranks: &[f64]) -> SideMetrics {
    let n = ranks.len().max(1) as f64;
    let hits = |k: f64| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    SideMetrics {
        mr: ranks.iter().sum::<f64>() / n,
        mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
        hits1: hits(1.0),
        hits3: hits(3.0),
        hits10: hits(10.0),
        n_queries: ranks.len(),
    }
}

/// Ranks every triple of `split` under `protocol`.
///
/// Queries run in parallel; ranks are reduced in query order, so the
/// result does not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn evaluate<T: Real>(
    kg: &KnowledgeGraph,
    filter: &FilterIndex,
    spec: &ModelSpec,
    entities: &EntityTable<T>,
    relations: &RelationParams<T>,
    protocol: &EvalProtocol,
    split: Split,
) -> Result<EvalResult> {
    let triples = kg.split(split);
    if triples.is_empty() {
        return Err(KgeError::validation(format!("the {split:?} split is empty")));
    }
    if entities.len() != kg.num_entities() || relations.len() != kg.num_relations() {
        return Err(KgeError::contract(format!(
            "model has {} entities / {} relations, graph has {} / {}",
            entities.len(),
            relations.len(),
            kg.num_entities(),
            kg.num_relations()
        )));
    }
    if protocol.kind == ProtocolKind::Sampled && protocol.n_candidates == 0 {
        return Err(KgeError::validation("n_candidates must be at least 1"));
    }
    let all: Vec<EntityId> = (0..kg.num_entities() as EntityId).collect();
    let sides = protocol.sides.list();
    let queries: Vec<(usize, Side)> = (0..triples.len())
        .flat_map(|i| sides.iter().map(move |&s| (i, s)))
        .collect();

    let ranks: Vec<(Side, f64)> = queries
        .par_iter()
        .map(|&(i, side)| {
            let triple = &triples[i];
            let r = match protocol.kind {
                ProtocolKind::FilteredFull | ProtocolKind::RawFull => {
                    let scores = score_batch_corrupted(spec, entities, relations, triple, side, &all)?;
                    let truth = true_entity(triple, side) as usize;
                    check_finite(&scores)?;
                    if protocol.kind == ProtocolKind::FilteredFull {
                        rank_masked(&scores, truth, |c| filter.completes(triple, side, c as EntityId))
                    } else {
                        rank_masked(&scores, truth, |_| false)
                    }
                }
                ProtocolKind::Sampled => {
                    let index = (i * 2 + (side == Side::Tail) as usize) as u64;
                    let mut rng = rng::stream(protocol.seed, "eval", index);
                    sampled_rank(
                        &mut rng,
                        kg,
                        filter,
                        spec,
                        entities,
                        relations,
                        triple,
                        side,
                        protocol.n_candidates,
                    )?
                }
            };
            Ok((side, r))
        })
        .collect::<Result<_>>()?;

    let collect = |side: Side| -> Option<SideMetrics> {
        sides.contains(&side).then(|| {
            let rs: Vec<f64> = ranks.iter().filter(|(s, _)| *s == side).map(|&(_, r)| r).collect();
            metrics_from_ranks(&rs)
        })
    };
    let overall = metrics_from_ranks(&ranks.iter().map(|&(_, r)| r).collect::<Vec<_>>());
    Ok(EvalResult {
        mr: overall.mr,
        mrr: overall.mrr,
        hits1: overall.hits1,
        hits3: overall.hits3,
        hits10: overall.hits10,
        n_queries: overall.n_queries,
        head: collect(Side::Head),
        tail: collect(Side::Tail),
    })
}

fn true_entity(t: &Triple, side: Side) -> EntityId {
    match side {
        Side::Head => t.head,
        Side::Tail => t.tail,
    }
}

fn check_finite<T: Real>(scores: &[T]) -> Result<()> {
    if scores.iter().all(|s| s.is_finite()) {
        Ok(())
    } else {
        Err(KgeError::contract("non-finite score during evaluation"))
    }
}

#[allow(clippy::too_many_arguments)]
fn sampled_rank<T: Real>(
    rng: &mut impl Rng,
    kg: &KnowledgeGraph,
    filter: &FilterIndex,
    spec: &ModelSpec,
    entities: &EntityTable<T>,
    relations: &RelationParams<T>,
    triple: &Triple,
    side: Side,
    n: usize,
) -> Result<f64> {
    let negatives = sample_with(
        rng,
        kg.num_entities(),
        filter,
        std::slice::from_ref(triple),
        side,
        n,
        NegativeMode::Filtered,
    );
    let mut candidates = Vec::with_capacity(n + 1);
    candidates.push(true_entity(triple, side));
    candidates.extend_from_slice(&negatives.candidates[0]);
    let scores = score_batch_corrupted(spec, entities, relations, triple, side, &candidates)?;
    rank(&scores, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&[0.9f64, 0.5, 0.1], 0).unwrap(), 1.0);
        assert_eq!(rank(&[0.5f64, 0.5], 0).unwrap(), 1.5);
        assert_eq!(rank(&[0.1f32, 0.5, 0.9], 0).unwrap(), 3.0);
        assert!(rank(&[0.1f64, f64::NAN], 0).is_err());
        assert!(rank(&[0.1f64], 1).is_err());
    }

    #[test]
    fn metric_arithmetic() {
        let m = metrics_from_ranks(&[1.0, 2.0, 4.0]);
        assert!((m.mrr - 0.583_333_333_333).abs() < 1e-9);
        assert!((m.hits3 - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.mr - 7.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.hits1, 1.0 / 3.0);
        assert_eq!(m.hits10, 1.0);
    }

    #[test]
    fn rank_matches_sorted_position() {
        use rand::seq::SliceRandom;
        let mut rng = rng::stream(0, "test", 0);
        let mut scores: Vec<f64> = (0..1000).map(|i| i as f64 * 0.37 - 50.0).collect();
        scores.shuffle(&mut rng);
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for idx in [0usize, 17, 500, 999] {
            let pos = sorted.iter().position(|&s| s == scores[idx]).unwrap();
            assert_eq!(rank(&scores, idx).unwrap(), pos as f64 + 1.0);
        }
    }

    #[test]
    fn table_has_fixed_columns() {
        let m = metrics_from_ranks(&[1.0, 2.0]);
        let r = EvalResult {
            mr: m.mr,
            mrr: m.mrr,
            hits1: m.hits1,
            hits3: m.hits3,
            hits10: m.hits10,
            n_queries: 2,
            head: Some(m),
            tail: None,
        };
        let t = r.table();
        let header = t.lines().next().unwrap();
        let cols: Vec<&str> = header.split_whitespace().collect();
        assert_eq!(cols, ["side", "MR", "MRR", "Hit@10", "Hit@3", "Hit@1"]);
        assert_eq!(t.lines().count(), 3);
    }
}
