//! Seeded synthetic graphs with controllable relation patterns.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{KnowledgeGraph, NameTable, Triple, Vocabulary};
use crate::error::{KgeError, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    /// Distinct uniformly random triples without self loops.
    Random,
    /// Relation `2k+1` is the inverse of relation `2k`. Held-out triples are
    /// inverse facts whose forward fact is in train.
    InversePairs,
    /// Every relation is symmetric. Held-out triples are reversed train
    /// facts whose reverse is not itself in train.
    Symmetric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_triples: usize,
    pub pattern: Pattern,
    pub seed: u64,
    /// Fraction of held-out facts, split evenly between valid and test.
    /// For the pattern modes this is the fraction of pairs whose second
    /// direction is held out.
    pub holdout: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_entities: 200,
            n_relations: 8,
            n_triples: 2000,
            pattern: Pattern::Random,
            seed: 0,
            holdout: 0.2,
        }
    }
}

/// Generates a graph deterministically from `spec`.
///
/// In the pattern modes triples come in pairs, so an odd `n_triples` is
/// rounded down.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<KnowledgeGraph> {
    if spec.n_entities < 2 {
        return Err(KgeError::validation("n_entities must be at least 2"));
    }
    if spec.n_relations < 1 {
        return Err(KgeError::validation("n_relations must be at least 1"));
    }
    if spec.n_triples < 1 {
        return Err(KgeError::validation("n_triples must be at least 1"));
    }
    if !(0.0..=1.0).contains(&spec.holdout) {
        return Err(KgeError::validation("holdout must lie in [0, 1]"));
    }
    let n_e = spec.n_entities as u64;
    let n_r = spec.n_relations as u64;
    let mut rng = rng::stream(spec.seed, "synthetic", 0);

    let (train, held) = match spec.pattern {
        Pattern::Random => {
            let capacity = n_e * (n_e - 1) * n_r;
            check_capacity(spec.n_triples as u64, capacity)?;
            let mut triples: Vec<Triple> = index::sample(&mut rng, capacity as usize, spec.n_triples)
                .into_iter()
                .map(|i| ordered_pair_triple(i as u64, n_e))
                .collect();
            triples.shuffle(&mut rng);
            let n_held = held_count(triples.len(), spec.holdout);
            let held = triples.split_off(triples.len() - n_held);
            (triples, held)
        }
        Pattern::InversePairs => {
            if !n_r.is_multiple_of(2) {
                return Err(KgeError::validation("inverse-pairs needs an even number of relations"));
            }
            let pairs = spec.n_triples / 2;
            if pairs == 0 {
                return Err(KgeError::validation("inverse-pairs needs at least 2 triples"));
            }
            let capacity = n_e * (n_e - 1) * (n_r / 2);
            check_capacity(pairs as u64, capacity)?;
            let forward: Vec<Triple> = index::sample(&mut rng, capacity as usize, pairs)
                .into_iter()
                .map(|i| {
                    let t = ordered_pair_triple(i as u64, n_e);
                    Triple::new(t.head, 2 * t.relation, t.tail)
                })
                .collect();
            let inverse = forward
                .iter()
                .map(|t| Triple::new(t.tail, t.relation + 1, t.head))
                .collect();
            split_paired(&mut rng, forward, inverse, spec.holdout)
        }
        Pattern::Symmetric => {
            let pairs = spec.n_triples / 2;
            if pairs == 0 {
                return Err(KgeError::validation("symmetric needs at least 2 triples"));
            }
            let per_relation = n_e * (n_e - 1) / 2;
            check_capacity(pairs as u64, per_relation * n_r)?;
            let mut forward = Vec::with_capacity(pairs);
            let mut backward = Vec::with_capacity(pairs);
            for i in index::sample(&mut rng, (per_relation * n_r) as usize, pairs) {
                let i = i as u64;
                let (a, b) = unordered_pair(i % per_relation, n_e);
                let r = (i / per_relation) as u32;
                let (a, b) = if rng.gen::<bool>() { (a, b) } else { (b, a) };
                forward.push(Triple::new(a, r, b));
                backward.push(Triple::new(b, r, a));
            }
            split_paired(&mut rng, forward, backward, spec.holdout)
        }
    };

    let n_valid = held.len() / 2;
    let valid = held[..n_valid].to_vec();
    let test = held[n_valid..].to_vec();
    let vocab = Vocabulary {
        entities: NameTable::from_names((0..n_e).map(|i| format!("e{i}")).collect())?,
        relations: NameTable::from_names((0..n_r).map(|i| format!("r{i}")).collect())?,
    };
    KnowledgeGraph::new(vocab, train, valid, test)
}

fn check_capacity(requested: u64, capacity: u64) -> Result<()> {
    if requested > capacity {
        return Err(KgeError::validation(format!(
            "requested {requested} distinct facts but only {capacity} are possible"
        )));
    }
    Ok(())
}

fn held_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).min(n.saturating_sub(1))
}

/// Decodes an index into a triple with head != tail.
fn ordered_pair_triple(i: u64, n_e: u64) -> Triple {
    let per_relation = n_e * (n_e - 1);
    let r = i / per_relation;
    let rem = i % per_relation;
    let head = rem / (n_e - 1);
    let mut tail = rem % (n_e - 1);
    if tail >= head {
        tail += 1;
    }
    Triple::new(head as u32, r as u32, tail as u32)
}

/// Decodes an index in `[0, n(n-1)/2)` into a pair `a < b`.
fn unordered_pair(mut i: u64, n_e: u64) -> (u32, u32) {
    let mut a = 0;
    while i >= n_e - 1 - a {
        i -= n_e - 1 - a;
        a += 1;
    }
    (a as u32, (a + 1 + i) as u32)
}

/// First halves always go to train; a `holdout` fraction of the second
/// halves is held out and the rest also trains.
fn split_paired(
    rng: &mut impl Rng,
    first: Vec<Triple>,
    second: Vec<Triple>,
    holdout: f64,
) -> (Vec<Triple>, Vec<Triple>) {
    let mut order: Vec<usize> = (0..second.len()).collect();
    order.shuffle(rng);
    let n_held = held_count(order.len() + 1, holdout).min(order.len());
    let held: Vec<Triple> = order[..n_held].iter().map(|&i| second[i]).collect();
    let mut train = first;
    train.extend(order[n_held..].iter().map(|&i| second[i]));
    (train, held)
}
