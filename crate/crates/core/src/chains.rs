//! k-step relation chain retrieval between two entities.
//!
//! Chains are simple paths over the undirected view of the graph. Search is a
//! layered breadth-first expansion of partial paths, pruned by the hop
//! distance to the target so that no partial path is kept that cannot reach
//! the tail within the remaining budget.

use std::cmp::Ordering;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::kg::{EntityId, GraphView, KgError, KnowledgeGraph, RelationType};

pub const DEFAULT_MAX_HOPS: usize = 2;
pub const DEFAULT_CHAIN_LIMIT: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hop {
    pub relation: RelationType,
    /// True when the stored triple points from `entities[i]` to `entities[i + 1]`.
    pub forward: bool,
    pub n_pubs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationChain {
    pub entities: Vec<EntityId>,
    pub hops: Vec<Hop>,
    pub total_pubs: u64,
}

impl RelationChain {
    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    /// Stored-direction `(head, relation, tail)` of every hop.
    pub fn stored_triples(&self) -> impl Iterator<Item = (&EntityId, &RelationType, &EntityId)> {
        self.hops.iter().enumerate().map(|(i, hop)| {
            let (a, b) = (&self.entities[i], &self.entities[i + 1]);
            if hop.forward {
                (a, &hop.relation, b)
            } else {
                (b, &hop.relation, a)
            }
        })
    }

    fn lexical_key(&self) -> (&[EntityId], Vec<(&RelationType, bool)>) {
        (&self.entities, self.hops.iter().map(|h| (&h.relation, h.forward)).collect())
    }
}

/// Shorter first, then more publications, then lexical.
pub fn chain_order(a: &RelationChain, b: &RelationChain) -> Ordering {
    a.len()
        .cmp(&b.len())
        .then_with(|| b.total_pubs.cmp(&a.total_pubs))
        .then_with(|| a.lexical_key().cmp(&b.lexical_key()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainQuery {
    pub head: EntityId,
    pub tail: EntityId,
    pub max_hops: usize,
    /// `None` returns every chain.
    pub limit: Option<usize>,
}

impl ChainQuery {
    pub fn new(head: impl Into<EntityId>, tail: impl Into<EntityId>) -> Self {
        Self { head: head.into(), tail: tail.into(), max_hops: DEFAULT_MAX_HOPS, limit: Some(DEFAULT_CHAIN_LIMIT) }
    }

    pub fn max_hops(mut self, k: usize) -> Self {
        self.max_hops = k;
        self
    }

    pub fn limit(mut self, limit: Option<usize>) -> Self {
        self.limit = limit;
        self
    }

    pub fn unlimited(self) -> Self {
        self.limit(None)
    }
}

struct Partial {
    nodes: Vec<usize>,
    edges: Vec<usize>,
}

/// Hop distance from `target` to every node, capped at `max`.
fn distances_to(view: &GraphView<'_>, target: usize, max: usize) -> Vec<usize> {
    let n = view.graph().entity_count();
    let mut dist = vec![usize::MAX; n];
    dist[target] = 0;
    let mut queue = VecDeque::from([target]);
    while let Some(node) = queue.pop_front() {
        if dist[node] >= max {
            continue;
        }
        for ix in view.incident_ixs(node) {
            let (a, b) = view.graph().triple_ends(ix);
            let next = if a == node { b } else { a };
            if dist[next] == usize::MAX {
                dist[next] = dist[node] + 1;
                queue.push_back(next);
            }
        }
    }
    dist
}

fn materialize(g: &KnowledgeGraph, p: &Partial) -> RelationChain {
    let entities = p.nodes.iter().map(|&n| g.node_entity(n).id.clone()).collect();
    let hops: Vec<Hop> = p
        .edges
        .iter()
        .zip(&p.nodes)
        .map(|(&ix, &from)| {
            let t = g.triple_at(ix);
            Hop { relation: t.relation.clone(), forward: g.triple_ends(ix).0 == from, n_pubs: t.n_pubs }
        })
        .collect();
    let total_pubs = hops.iter().map(|h| h.n_pubs).sum();
    RelationChain { entities, hops, total_pubs }
}

/// All simple paths of at most `max_hops` relations between the query
/// endpoints, ordered by [`chain_order`] and truncated to the limit.
pub fn find_chains(view: &GraphView<'_>, q: &ChainQuery) -> Result<Vec<RelationChain>, KgError> {
    let g = view.graph();
    let head = g.node(&q.head)?;
    let tail = g.node(&q.tail)?;
    if head == tail {
        return Err(KgError::InvalidArgument(format!("chain query from {} to itself", q.head)));
    }
    if q.max_hops == 0 || q.limit == Some(0) {
        return Err(KgError::InvalidArgument("max_hops and limit must be at least 1".into()));
    }
    let dist = distances_to(view, tail, q.max_hops);
    let mut found = Vec::new();
    let mut layer = vec![Partial { nodes: vec![head], edges: Vec::new() }];

    for depth in 0..q.max_hops {
        let remaining = q.max_hops - depth - 1;
        let mut next_layer = Vec::new();
        for p in &layer {
            let last = *p.nodes.last().expect("partial path is never empty");
            for ix in view.incident_ixs(last) {
                let (a, b) = g.triple_ends(ix);
                let next = if a == last { b } else { a };
                if dist[next] > remaining || p.nodes.contains(&next) {
                    continue;
                }
                let mut nodes = p.nodes.clone();
                nodes.push(next);
                let mut edges = p.edges.clone();
                edges.push(ix);
                let extended = Partial { nodes, edges };
                if next == tail {
                    found.push(materialize(g, &extended));
                } else if remaining > 0 {
                    next_layer.push(extended);
                }
            }
        }
        // Longer chains always sort after shorter ones.
        if q.limit.is_some_and(|limit| found.len() >= limit) {
            break;
        }
        layer = next_layer;
    }

    found.sort_by(chain_order);
    if let Some(limit) = q.limit {
        found.truncate(limit);
    }
    Ok(found)
}

/// One line per chain, each hop as `(head_name, relation, tail_name)` in
/// traversal order.
pub fn render_chains(chains: &[RelationChain], g: &KnowledgeGraph) -> Result<String, KgError> {
    let mut lines = Vec::with_capacity(chains.len());
    for chain in chains {
        let mut hops = Vec::with_capacity(chain.len());
        for (i, hop) in chain.hops.iter().enumerate() {
            let from = g.name_of(&chain.entities[i]).map_err(dangling)?;
            let to = g.name_of(&chain.entities[i + 1]).map_err(dangling)?;
            hops.push(format!("({from}, {}, {to})", hop.relation));
        }
        lines.push(hops.join(", "));
    }
    Ok(lines.join("\n"))
}

fn dangling(e: KgError) -> KgError {
    match e {
        KgError::NotFound(id) => KgError::Integrity(format!("chain references unknown entity {id}")),
        other => other,
    }
}
