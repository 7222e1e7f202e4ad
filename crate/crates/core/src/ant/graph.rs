use std::collections::BTreeSet;

use crate::error::TreeError;
use crate::topology::{Adjacency, NodeId, Position};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub to: NodeId,
    pub cost: f64,
    /// seconds
    pub delay: f64,
}

/// Directed graph with per-edge cost and delay. Out-edge lists are kept
/// sorted by target id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightedGraph {
    out: Vec<Vec<Edge>>,
}

impl WeightedGraph {
    pub fn new(n: usize) -> Self {
        Self { out: vec![Vec::new(); n] }
    }

    pub fn node_count(&self) -> usize {
        self.out.len()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.index() < self.out.len()
    }

    /// Inserts or replaces the edge `from -> to`. Self-loops and
    /// negative or non-finite weights are ignored.
    pub fn add_edge(&mut self, from: NodeId, to: NodeId, cost: f64, delay: f64) {
        if from == to || !(cost.is_finite() && cost >= 0.0) || !(delay.is_finite() && delay >= 0.0) {
            return;
        }
        let list = &mut self.out[from.index()];
        let edge = Edge { to, cost, delay };
        match list.binary_search_by(|e| e.to.cmp(&to)) {
            Ok(i) => list[i] = edge,
            Err(i) => list.insert(i, edge),
        }
    }

    pub fn add_undirected(&mut self, a: NodeId, b: NodeId, cost: f64, delay: f64) {
        self.add_edge(a, b, cost, delay);
        self.add_edge(b, a, cost, delay);
    }

    pub fn edges(&self, from: NodeId) -> &[Edge] {
        &self.out[from.index()]
    }

    pub fn edge(&self, from: NodeId, to: NodeId) -> Option<&Edge> {
        let list = self.out.get(from.index())?;
        list.binary_search_by(|e| e.to.cmp(&to)).ok().map(|i| &list[i])
    }

    pub fn all_edges(&self) -> impl Iterator<Item = (NodeId, &Edge)> {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(i, es)| es.iter().map(move |e| (NodeId(i), e)))
    }

    /// Hop-count graph over a connectivity snapshot: every link costs 1.
    pub fn from_adjacency(adj: &Adjacency, per_hop_delay: f64) -> Self {
        let mut g = Self::new(adj.len());
        for i in 0..adj.len() {
            for &j in adj.neighbors(NodeId(i)) {
                g.add_edge(NodeId(i), j, 1.0, per_hop_delay);
            }
        }
        g
    }

    /// Euclidean-distance costs over a connectivity snapshot.
    pub fn from_adjacency_euclidean(adj: &Adjacency, positions: &[Position], per_hop_delay: f64) -> Self {
        let mut g = Self::new(adj.len());
        for i in 0..adj.len() {
            for &j in adj.neighbors(NodeId(i)) {
                let d = positions[i].distance(&positions[j.index()]).max(1e-3);
                g.add_edge(NodeId(i), j, d, per_hop_delay);
            }
        }
        g
    }

    /// Total (cost, delay) along `nodes`, summed edge by edge from the source.
    pub fn path_weight(&self, nodes: &[NodeId]) -> Result<(f64, f64), TreeError> {
        let mut cost = 0.0;
        let mut delay = 0.0;
        for w in nodes.windows(2) {
            let e = self.edge(w[0], w[1]).ok_or(TreeError::UnknownNode(w[1]))?;
            cost += e.cost;
            delay += e.delay;
        }
        Ok((cost, delay))
    }

    pub fn path(&self, nodes: Vec<NodeId>) -> Result<Path, TreeError> {
        let (cost, delay) = self.path_weight(&nodes)?;
        Ok(Path { nodes, cost, delay })
    }
}

/// A loop-free path with its summed cost and delay.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub cost: f64,
    pub delay: f64,
}

impl Path {
    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn target(&self) -> NodeId {
        *self.nodes.last().expect("path has at least one node")
    }

    pub fn hops(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn is_simple(&self) -> bool {
        let set: BTreeSet<_> = self.nodes.iter().collect();
        set.len() == self.nodes.len()
    }
}
