//! Typed, publication-weighted knowledge graph with masked views.
//!
//! Triples keep the direction they were loaded with, but every lookup and
//! traversal treats them as undirected edges. A graph is built once through
//! [`GraphBuilder`] (or [`load_kg`]) and is immutable afterwards; masking
//! produces a [`GraphView`] overlay that borrows the frozen graph.

mod load;
mod view;

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use load::{load_kg, load_kg_with_aliases, parse_kg};
pub use view::GraphView;

use crate::agents::Label;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KgError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("entity not found: {0}")]
    NotFound(EntityId),
    #[error("triple not found: ({0}, {1}, {2})")]
    TripleNotFound(EntityId, RelationType, EntityId),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(raw: impl Into<String>) -> Result<Self, KgError> {
        let raw = raw.into();
        if raw.trim().is_empty() {
            return Err(KgError::InvalidArgument("empty entity id".into()));
        }
        Ok(Self(raw))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntityId {
    /// Panics on an empty string; intended for literals and fixtures.
    fn from(s: &str) -> Self {
        Self::new(s).expect("non-empty entity id")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationType(String);

impl RelationType {
    pub fn new(label: impl Into<String>) -> Self {
        Self(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The hypothesis label this relation corresponds to, if any.
    /// `positive_correlate`/`negative_correlate` are the graph-side names of
    /// `stimulate`/`inhibit`.
    pub fn hypothesis_label(&self) -> Option<Label> {
        match self.0.as_str() {
            "stimulate" | "positive_correlate" => Some(Label::Stimulate),
            "inhibit" | "negative_correlate" => Some(Label::Inhibit),
            _ => None,
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RelationType {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub name: String,
    pub etype: String,
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationType,
    pub tail: EntityId,
    pub n_pubs: u64,
}

impl Triple {
    pub fn new(head: impl Into<EntityId>, relation: impl Into<RelationType>, tail: impl Into<EntityId>, n_pubs: u64) -> Self {
        Self { head: head.into(), relation: relation.into(), tail: tail.into(), n_pubs }
    }

    pub fn touches(&self, e: &EntityId) -> bool {
        &self.head == e || &self.tail == e
    }

    /// The endpoint opposite to `e`, if `e` is an endpoint.
    pub fn other_end(&self, e: &EntityId) -> Option<&EntityId> {
        if &self.head == e {
            Some(&self.tail)
        } else if &self.tail == e {
            Some(&self.head)
        } else {
            None
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}({})", self.head, self.relation, self.tail, self.n_pubs)
    }
}

/// Canonical deterministic order: publications descending, then lexical.
pub fn canonical_cmp(a: &Triple, b: &Triple) -> Ordering {
    b.n_pubs
        .cmp(&a.n_pubs)
        .then_with(|| a.head.cmp(&b.head))
        .then_with(|| a.relation.cmp(&b.relation))
        .then_with(|| a.tail.cmp(&b.tail))
}

/// Closed vocabularies for entity categories and relation labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pub entity_types: BTreeSet<String>,
    pub relations: BTreeSet<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let entity_types = ["GENE", "CHEMICAL", "DISEASE", "SPECIES", "VARIANT", "MUTATION", "CELLLINE"];
        let relations = [
            "associate",
            "bind",
            "cause",
            "compare",
            "cotreat",
            "drug_interact",
            "inhibit",
            "interact",
            "negative_correlate",
            "positive_correlate",
            "prevent",
            "stimulate",
            "treat",
        ];
        Self {
            entity_types: entity_types.iter().map(|s| s.to_string()).collect(),
            relations: relations.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    Edge,
    Pair,
}

/// Which edges a masked view hides.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskSpec {
    pub mode: MaskMode,
    pub head: EntityId,
    pub tail: EntityId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<RelationType>,
}

impl MaskSpec {
    pub fn edge(head: impl Into<EntityId>, relation: impl Into<RelationType>, tail: impl Into<EntityId>) -> Self {
        Self { mode: MaskMode::Edge, head: head.into(), tail: tail.into(), relation: Some(relation.into()) }
    }

    pub fn pair(head: impl Into<EntityId>, tail: impl Into<EntityId>) -> Self {
        Self { mode: MaskMode::Pair, head: head.into(), tail: tail.into(), relation: None }
    }

    pub fn validate(&self) -> Result<(), KgError> {
        match (self.mode, &self.relation) {
            (MaskMode::Edge, None) => Err(KgError::InvalidArgument("edge mask requires a relation".into())),
            (MaskMode::Pair, Some(_)) => Err(KgError::InvalidArgument("pair mask must not carry a relation".into())),
            _ => Ok(()),
        }
    }
}

/// Frozen knowledge graph.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vec<Entity>,
    index: HashMap<EntityId, usize>,
    triples: Vec<Triple>,
    ends: Vec<(usize, usize)>,
    incidence: Vec<Vec<usize>>,
    pairs: HashMap<(usize, usize), Vec<usize>>,
}

fn pair_key(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl KnowledgeGraph {
    pub fn empty() -> Self {
        GraphBuilder::default().build().expect("empty graph is valid")
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    /// Entities in ascending id order.
    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    /// Triples in canonical order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity(&self, id: &EntityId) -> Result<&Entity, KgError> {
        self.index.get(id).map(|&ix| &self.entities[ix]).ok_or_else(|| KgError::NotFound(id.clone()))
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.index.contains_key(id)
    }

    pub fn name_of(&self, id: &EntityId) -> Result<&str, KgError> {
        self.entity(id).map(|e| e.name.as_str())
    }

    pub(crate) fn node(&self, id: &EntityId) -> Result<usize, KgError> {
        self.index.get(id).copied().ok_or_else(|| KgError::NotFound(id.clone()))
    }

    pub(crate) fn node_entity(&self, node: usize) -> &Entity {
        &self.entities[node]
    }

    pub(crate) fn triple_at(&self, ix: usize) -> &Triple {
        &self.triples[ix]
    }

    pub(crate) fn triple_ends(&self, ix: usize) -> (usize, usize) {
        self.ends[ix]
    }

    pub(crate) fn incident(&self, node: usize) -> &[usize] {
        &self.incidence[node]
    }

    pub(crate) fn between(&self, a: usize, b: usize) -> &[usize] {
        self.pairs.get(&pair_key(a, b)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Unmasked view over the whole graph.
    pub fn view(&self) -> GraphView<'_> {
        GraphView::new(self, BTreeSet::new())
    }

    /// Overlay hiding the edges named by `spec`.
    pub fn mask(&self, spec: &MaskSpec) -> Result<GraphView<'_>, KgError> {
        spec.validate()?;
        let a = self.node(&spec.head)?;
        let b = self.node(&spec.tail)?;
        let between = self.between(a, b);
        let hidden: BTreeSet<usize> = match &spec.relation {
            None => between.iter().copied().collect(),
            Some(rel) => between.iter().copied().filter(|&ix| &self.triples[ix].relation == rel).collect(),
        };
        if spec.mode == MaskMode::Edge && hidden.is_empty() {
            return Err(KgError::TripleNotFound(
                spec.head.clone(),
                spec.relation.clone().unwrap_or_else(|| RelationType::new("")),
                spec.tail.clone(),
            ));
        }
        Ok(GraphView::new(self, hidden))
    }

    pub fn neighbors(&self, e: &EntityId) -> Result<Vec<&Triple>, KgError> {
        self.view().neighbors(e)
    }

    pub fn direct_relations(&self, a: &EntityId, b: &EntityId) -> Result<Vec<&Triple>, KgError> {
        self.view().direct_relations(a, b)
    }

    /// Deterministic text serialization used to compare loads.
    pub fn canonical_form(&self) -> String {
        let mut out = String::new();
        for e in &self.entities {
            out.push_str(&format!("E\t{}\t{}\t{}\t{}\n", e.id, e.name, e.etype, e.aliases.join("|")));
        }
        for t in &self.triples {
            out.push_str(&format!("T\t{}\t{}\t{}\t{}\n", t.head, t.relation, t.tail, t.n_pubs));
        }
        out
    }
}

/// Mutable staging area for a [`KnowledgeGraph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    vocab: Option<Vocabulary>,
    entities: HashMap<EntityId, Entity>,
    triples: HashMap<(EntityId, RelationType, EntityId), u64>,
}

impl GraphBuilder {
    pub fn with_vocabulary(vocab: Vocabulary) -> Self {
        Self { vocab: Some(vocab), ..Self::default() }
    }

    /// Registers an entity. Re-registering with the same name and type is a no-op.
    pub fn add_entity(&mut self, id: EntityId, name: &str, etype: &str) -> Result<(), KgError> {
        if name.trim().is_empty() {
            return Err(KgError::InvalidArgument(format!("entity {id} has an empty name")));
        }
        if let Some(vocab) = &self.vocab {
            if !vocab.entity_types.contains(etype) {
                return Err(KgError::InvalidArgument(format!("unknown entity type {etype:?}")));
            }
        }
        match self.entities.get(&id) {
            Some(existing) if existing.name != name || existing.etype != etype => Err(KgError::Integrity(format!(
                "entity {id} declared as ({}, {}) and ({name}, {etype})",
                existing.name, existing.etype
            ))),
            Some(_) => Ok(()),
            None => {
                self.entities.insert(id.clone(), Entity { id, name: name.to_string(), etype: etype.to_string(), aliases: Vec::new() });
                Ok(())
            }
        }
    }

    pub fn add_alias(&mut self, id: &EntityId, alias: &str) -> Result<(), KgError> {
        let entity = self.entities.get_mut(id).ok_or_else(|| KgError::NotFound(id.clone()))?;
        let alias = alias.trim();
        if alias.is_empty() {
            return Ok(());
        }
        let lower = alias.to_lowercase();
        if !entity.aliases.iter().any(|a| a.to_lowercase() == lower) {
            entity.aliases.push(alias.to_string());
        }
        Ok(())
    }

    pub fn add_triple(&mut self, head: EntityId, relation: RelationType, tail: EntityId, n_pubs: u64) -> Result<(), KgError> {
        if head == tail {
            return Err(KgError::InvalidArgument(format!("self-loop on {head}")));
        }
        if let Some(vocab) = &self.vocab {
            if !vocab.relations.contains(relation.as_str()) {
                return Err(KgError::InvalidArgument(format!("unknown relation {:?}", relation.as_str())));
            }
        }
        for end in [&head, &tail] {
            if !self.entities.contains_key(end) {
                return Err(KgError::NotFound(end.clone()));
            }
        }
        let key = (head, relation, tail);
        match self.triples.get(&key) {
            Some(&existing) if existing != n_pubs => Err(KgError::Integrity(format!(
                "duplicate triple ({}, {}, {}) with n_pubs {existing} and {n_pubs}",
                key.0, key.1, key.2
            ))),
            Some(_) => Ok(()),
            None => {
                self.triples.insert(key, n_pubs);
                Ok(())
            }
        }
    }

    pub fn build(self) -> Result<KnowledgeGraph, KgError> {
        let mut entities: Vec<Entity> = self.entities.into_values().collect();
        entities.sort_by(|a, b| a.id.cmp(&b.id));
        let index: HashMap<EntityId, usize> = entities.iter().enumerate().map(|(i, e)| (e.id.clone(), i)).collect();

        let mut triples: Vec<Triple> =
            self.triples.into_iter().map(|((head, relation, tail), n_pubs)| Triple { head, relation, tail, n_pubs }).collect();
        triples.sort_by(canonical_cmp);

        let mut ends = Vec::with_capacity(triples.len());
        let mut incidence = vec![Vec::new(); entities.len()];
        let mut pairs: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (ix, t) in triples.iter().enumerate() {
            let h = *index.get(&t.head).ok_or_else(|| KgError::Integrity(format!("dangling head {}", t.head)))?;
            let tl = *index.get(&t.tail).ok_or_else(|| KgError::Integrity(format!("dangling tail {}", t.tail)))?;
            ends.push((h, tl));
            incidence[h].push(ix);
            incidence[tl].push(ix);
            pairs.entry(pair_key(h, tl)).or_default().push(ix);
        }
        // Triple indices are already in canonical order, so each list is too.
        Ok(KnowledgeGraph { entities, index, triples, ends, incidence, pairs })
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::toy;
    use super::*;

    fn ids(ts: &[&Triple]) -> Vec<String> {
        ts.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn toy_counts() {
        let g = toy();
        assert_eq!(g.entity_count(), 4);
        assert_eq!(g.triple_count(), 4);
    }

    #[test]
    fn neighbors_sorted_by_pubs() {
        let g = toy();
        assert_eq!(ids(&g.neighbors(&"A".into()).unwrap()), ["A-cause-B(10)", "A-stimulate-C(8)"]);
        assert_eq!(ids(&g.neighbors(&"D".into()).unwrap()), ["C-inhibit-D(3)"]);
        assert_eq!(g.neighbors(&"Z".into()).unwrap_err(), KgError::NotFound("Z".into()));
    }

    #[test]
    fn direct_relations_cases() {
        let g = toy();
        assert_eq!(ids(&g.direct_relations(&"A".into(), &"C".into()).unwrap()), ["A-stimulate-C(8)"]);
        assert_eq!(ids(&g.direct_relations(&"C".into(), &"A".into()).unwrap()), ["A-stimulate-C(8)"]);
        assert!(g.direct_relations(&"A".into(), &"D".into()).unwrap().is_empty());
        assert!(matches!(g.direct_relations(&"A".into(), &"A".into()), Err(KgError::InvalidArgument(_))));
    }

    #[test]
    fn edge_mask_hides_only_that_edge() {
        let g = toy();
        let v = g.mask(&MaskSpec::edge("A", "stimulate", "C")).unwrap();
        assert!(v.direct_relations(&"A".into(), &"C".into()).unwrap().is_empty());
        assert_eq!(v.neighbors(&"B".into()).unwrap(), g.neighbors(&"B".into()).unwrap());
        // the underlying graph is untouched
        assert_eq!(g.direct_relations(&"A".into(), &"C".into()).unwrap().len(), 1);
    }

    #[test]
    fn edge_mask_matches_reverse_orientation() {
        let g = toy();
        let v = g.mask(&MaskSpec::edge("C", "stimulate", "A")).unwrap();
        assert!(v.direct_relations(&"A".into(), &"C".into()).unwrap().is_empty());
    }

    #[test]
    fn pair_mask_hides_all_between() {
        let g = toy();
        let v = g.mask(&MaskSpec::pair("A", "B")).unwrap();
        assert_eq!(ids(&v.neighbors(&"A".into()).unwrap()), ["A-stimulate-C(8)"]);
    }

    #[test]
    fn edge_mask_on_absent_triple_fails() {
        let g = toy();
        assert!(matches!(g.mask(&MaskSpec::edge("A", "inhibit", "C")), Err(KgError::TripleNotFound(..))));
        assert!(matches!(g.mask(&MaskSpec::edge("A", "cause", "Z")), Err(KgError::NotFound(_))));
    }

    #[test]
    fn mask_spec_shape_is_validated() {
        let mut bad = MaskSpec::pair("A", "B");
        bad.relation = Some("cause".into());
        assert!(bad.validate().is_err());
        let mut bad = MaskSpec::edge("A", "cause", "B");
        bad.relation = None;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn aliases_dedup_case_insensitive() {
        let mut b = GraphBuilder::default();
        let id = EntityId::from("X");
        b.add_entity(id.clone(), "Carbon Tetrachloride", "CHEMICAL").unwrap();
        b.add_alias(&id, "CCl4").unwrap();
        b.add_alias(&id, "ccl4").unwrap();
        let g = b.build().unwrap();
        assert_eq!(g.entity(&id).unwrap().aliases, ["CCl4"]);
    }

    #[test]
    fn hypothesis_labels_from_graph_relations() {
        assert_eq!(RelationType::from("positive_correlate").hypothesis_label(), Some(Label::Stimulate));
        assert_eq!(RelationType::from("negative_correlate").hypothesis_label(), Some(Label::Inhibit));
        assert_eq!(RelationType::from("cause").hypothesis_label(), None);
    }
}
