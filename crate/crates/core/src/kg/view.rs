use std::collections::BTreeSet;

use super::{EntityId, KgError, KnowledgeGraph, Triple};

/// Read-only overlay over a frozen graph that hides a set of triples.
///
/// An unmasked view hides nothing. All queries behave as on the graph with
/// the hidden triples removed.
#[derive(Debug, Clone)]
pub struct GraphView<'g> {
    graph: &'g KnowledgeGraph,
    hidden: BTreeSet<usize>,
}

impl<'g> GraphView<'g> {
    pub(super) fn new(graph: &'g KnowledgeGraph, hidden: BTreeSet<usize>) -> Self {
        Self { graph, hidden }
    }

    pub fn graph(&self) -> &'g KnowledgeGraph {
        self.graph
    }

    pub fn hidden_triples(&self) -> impl Iterator<Item = &'g Triple> + '_ {
        self.hidden.iter().map(|&ix| self.graph.triple_at(ix))
    }

    pub fn is_hidden(&self, t: &Triple) -> bool {
        self.hidden.iter().any(|&ix| self.graph.triple_at(ix) == t)
    }

    /// Visible triple indices incident to `node`, canonical order.
    pub(crate) fn incident_ixs(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.graph.incident(node).iter().copied().filter(move |ix| !self.hidden.contains(ix))
    }

    pub(crate) fn between_ixs(&self, a: usize, b: usize) -> impl Iterator<Item = usize> + '_ {
        self.graph.between(a, b).iter().copied().filter(move |ix| !self.hidden.contains(ix))
    }

    /// Triples incident to `e` in either position, canonical order.
    pub fn neighbors(&self, e: &EntityId) -> Result<Vec<&'g Triple>, KgError> {
        let node = self.graph.node(e)?;
        let g = self.graph;
        Ok(self.incident_ixs(node).map(|ix| g.triple_at(ix)).collect())
    }

    /// Triples linking `a` and `b` in either orientation, canonical order.
    pub fn direct_relations(&self, a: &EntityId, b: &EntityId) -> Result<Vec<&'g Triple>, KgError> {
        let na = self.graph.node(a)?;
        let nb = self.graph.node(b)?;
        if na == nb {
            return Err(KgError::InvalidArgument(format!("direct relations of {a} with itself")));
        }
        let g = self.graph;
        Ok(self.between_ixs(na, nb).map(|ix| g.triple_at(ix)).collect())
    }
}
