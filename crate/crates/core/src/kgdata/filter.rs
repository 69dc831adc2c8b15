use std::collections::{HashMap, HashSet};

use super::{EntityId, KnowledgeGraph, RelationId, Side, Triple};

/// Known true completions over train ∪ valid ∪ test, used to filter
/// rankings and negative samples.
#[derive(Clone, Debug, Default)]
pub struct FilterIndex {
    known_tails: HashMap<(EntityId, RelationId), HashSet<EntityId>>,
    known_heads: HashMap<(RelationId, EntityId), HashSet<EntityId>>,
}

impl FilterIndex {
    pub fn build(kg: &KnowledgeGraph) -> Self {
        Self::from_triples(kg.all_triples().copied())
    }

    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut index = FilterIndex::default();
        for t in triples {
            index
                .known_tails
                .entry((t.head, t.relation))
                .or_default()
                .insert(t.tail);
            index
                .known_heads
                .entry((t.relation, t.tail))
                .or_default()
                .insert(t.head);
        }
        index
    }

    pub fn known_tails(&self, head: EntityId, relation: RelationId) -> Option<&HashSet<EntityId>> {
        self.known_tails.get(&(head, relation))
    }

    pub fn known_heads(&self, relation: RelationId, tail: EntityId) -> Option<&HashSet<EntityId>> {
        self.known_heads.get(&(relation, tail))
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.known_tails(t.head, t.relation)
            .is_some_and(|s| s.contains(&t.tail))
    }

    /// True when putting `candidate` on `side` of `triple` yields a known fact.
    pub fn completes(&self, triple: &Triple, side: Side, candidate: EntityId) -> bool {
        match side {
            Side::Tail => self
                .known_tails(triple.head, triple.relation)
                .is_some_and(|s| s.contains(&candidate)),
            Side::Head => self
                .known_heads(triple.relation, triple.tail)
                .is_some_and(|s| s.contains(&candidate)),
        }
    }
}
