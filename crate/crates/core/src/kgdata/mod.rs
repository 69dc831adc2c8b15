//! Triples, vocabularies, splits, adjacency and the filter index.

mod filter;
mod io;
mod synthetic;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{KgeError, Result};

pub use filter::FilterIndex;
pub use io::{load_triples, save_graph, TripleFormat};
pub use synthetic::{generate_synthetic, Pattern, SyntheticSpec};

pub type EntityId = u32;
pub type RelationId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub const fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple { head, relation, tail }
    }
}

/// Which end of a triple gets replaced when corrupting or ranking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Head,
    Tail,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Head, Side::Tail];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.tsv",
            Split::Valid => "valid.tsv",
            Split::Test => "test.tsv",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "valid" | "validation" | "dev" => Some(Split::Valid),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// A bijection between names and dense ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NameTable {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl NameTable {
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if ids.insert(name.clone(), i as u32).is_some() {
                return Err(KgeError::validation(format!("duplicate name {name:?}")));
            }
        }
        Ok(NameTable { names, ids })
    }

    /// Returns the id of `name`, assigning the next dense id on first sight.
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub entities: NameTable,
    pub relations: NameTable,
}

impl Vocabulary {
    /// Vocabulary whose names are the decimal ids themselves.
    pub fn numeric(n_entities: usize, n_relations: usize) -> Self {
        let entities = (0..n_entities).map(|i| i.to_string()).collect();
        let relations = (0..n_relations).map(|i| i.to_string()).collect();
        Vocabulary {
            entities: NameTable::from_names(entities).expect("distinct"),
            relations: NameTable::from_names(relations).expect("distinct"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Out,
    In,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AdjEntry {
    pub relation: RelationId,
    pub direction: Direction,
    pub neighbor: EntityId,
}

/// An integer-encoded knowledge graph with its splits.
///
/// Immutable after construction. Adjacency is built from the train split
/// only.
#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    vocab: Vocabulary,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    adjacency: Vec<Vec<AdjEntry>>,
}

impl KnowledgeGraph {
    /// Validates ids and splits, deduplicates within each split and builds
    /// the train adjacency.
    ///
    /// Duplicates inside one split are dropped with a warning. A triple that
    /// appears in two different splits is an error.
    pub fn new(vocab: Vocabulary, train: Vec<Triple>, valid: Vec<Triple>, test: Vec<Triple>) -> Result<Self> {
        let n_e = vocab.entities.len() as u64;
        let n_r = vocab.relations.len() as u64;
        let mut seen: HashMap<Triple, Split> = HashMap::new();
        let mut splits = [train, valid, test];
        for (split, triples) in Split::ALL.into_iter().zip(splits.iter_mut()) {
            let mut local = HashSet::with_capacity(triples.len());
            let mut dropped = 0usize;
            let mut kept = Vec::with_capacity(triples.len());
            for &t in triples.iter() {
                if t.head as u64 >= n_e || t.tail as u64 >= n_e || t.relation as u64 >= n_r {
                    return Err(KgeError::Range(format!(
                        "{t:?} in {split:?} split with |E|={n_e}, |R|={n_r}"
                    )));
                }
                if !local.insert(t) {
                    dropped += 1;
                    continue;
                }
                if let Some(other) = seen.insert(t, split) {
                    return Err(KgeError::validation(format!(
                        "triple {t:?} appears in both the {other:?} and {split:?} splits"
                    )));
                }
                kept.push(t);
            }
            if dropped > 0 {
                log::warn!("dropped {dropped} duplicate triples from the {split:?} split");
            }
            *triples = kept;
        }
        let [train, valid, test] = splits;
        if train.is_empty() {
            return Err(KgeError::validation("train split is empty"));
        }

        let mut adjacency = vec![Vec::new(); n_e as usize];
        for t in &train {
            adjacency[t.head as usize].push(AdjEntry {
                relation: t.relation,
                direction: Direction::Out,
                neighbor: t.tail,
            });
            adjacency[t.tail as usize].push(AdjEntry {
                relation: t.relation,
                direction: Direction::In,
                neighbor: t.head,
            });
        }

        Ok(KnowledgeGraph {
            vocab,
            train,
            valid,
            test,
            adjacency,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn num_entities(&self) -> usize {
        self.vocab.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.vocab.relations.len()
    }

    pub fn train(&self) -> &[Triple] {
        &self.train
    }

    pub fn valid(&self) -> &[Triple] {
        &self.valid
    }

    pub fn test(&self) -> &[Triple] {
        &self.test
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    /// Train-split adjacency of `entity` (one entry per incident triple end).
    pub fn adjacency(&self, entity: EntityId) -> &[AdjEntry] {
        &self.adjacency[entity as usize]
    }

    /// Undirected degree in the train graph.
    pub fn degree(&self, entity: EntityId) -> usize {
        self.adjacency[entity as usize].len()
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        self.vocab.entities.name(id).unwrap_or("<unknown>")
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        self.vocab.relations.name(id).unwrap_or("<unknown>")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(n_e: usize, n_r: usize) -> Vocabulary {
        Vocabulary::numeric(n_e, n_r)
    }

    #[test]
    fn adjacency_has_one_entry_per_triple_end() {
        let train = vec![Triple::new(0, 0, 1), Triple::new(1, 0, 2), Triple::new(2, 0, 2)];
        let kg = KnowledgeGraph::new(vocab(3, 1), train, vec![], vec![]).unwrap();
        let outs: usize = (0..3)
            .map(|e| kg.adjacency(e).iter().filter(|a| a.direction == Direction::Out).count())
            .sum();
        let ins: usize = (0..3)
            .map(|e| kg.adjacency(e).iter().filter(|a| a.direction == Direction::In).count())
            .sum();
        assert_eq!(outs, 3);
        assert_eq!(ins, 3);
        assert_eq!(kg.degree(1), 2);
        // self loop contributes both ends to the same node
        assert_eq!(kg.degree(2), 3);
    }

    #[test]
    fn duplicates_within_split_are_dropped() {
        let train = vec![Triple::new(0, 0, 1), Triple::new(0, 0, 1)];
        let kg = KnowledgeGraph::new(vocab(2, 1), train, vec![], vec![]).unwrap();
        assert_eq!(kg.train().len(), 1);
    }

    #[test]
    fn duplicates_across_splits_are_rejected() {
        let t = Triple::new(0, 0, 1);
        let err = KnowledgeGraph::new(vocab(2, 1), vec![t], vec![], vec![t]).unwrap_err();
        assert!(matches!(err, KgeError::Validation(_)), "{err}");
    }

    #[test]
    fn out_of_range_ids_are_rejected() {
        let err = KnowledgeGraph::new(vocab(2, 1), vec![Triple::new(0, 1, 1)], vec![], vec![]).unwrap_err();
        assert!(matches!(err, KgeError::Range(_)));
    }

    #[test]
    fn empty_train_is_rejected() {
        let err = KnowledgeGraph::new(vocab(2, 1), vec![], vec![Triple::new(0, 0, 1)], vec![]).unwrap_err();
        assert!(matches!(err, KgeError::Validation(_)));
    }

    #[test]
    fn adjacency_ignores_held_out_edges() {
        let kg = KnowledgeGraph::new(
            vocab(3, 1),
            vec![Triple::new(0, 0, 1)],
            vec![Triple::new(1, 0, 2)],
            vec![Triple::new(0, 0, 2)],
        )
        .unwrap();
        assert_eq!(kg.degree(2), 0);
    }

    #[test]
    fn name_table_rejects_duplicates() {
        assert!(NameTable::from_names(vec!["a".into(), "a".into()]).is_err());
        let mut t = NameTable::default();
        assert_eq!(t.intern("x"), 0);
        assert_eq!(t.intern("y"), 1);
        assert_eq!(t.intern("x"), 0);
        assert_eq!(t.name(1), Some("y"));
    }
}
