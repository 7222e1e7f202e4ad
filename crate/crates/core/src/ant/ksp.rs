//! Yen's K loop-free shortest paths.
//!
//! Paths are produced in (cost, node sequence) order. Each spur search
//! returns the lexicographically smallest of the cheapest spur paths, which
//! makes ties resolve the same way a full sort of all simple paths would.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use super::graph::{Path, WeightedGraph};
use crate::error::TreeError;
use crate::topology::NodeId;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
struct Candidate {
    cost: f64,
    nodes: Vec<NodeId>,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost.total_cmp(&other.cost).then_with(|| self.nodes.cmp(&other.nodes))
    }
}

/// Up to `k` cheapest loop-free paths from `s` to `m`, sorted by cost with
/// ties broken by node sequence.
pub fn k_shortest_paths(
    g: &WeightedGraph,
    s: NodeId,
    m: NodeId,
    k: usize,
) -> Result<Vec<Path>, TreeError> {
    for id in [s, m] {
        if !g.contains(id) {
            return Err(TreeError::UnknownNode(id));
        }
    }
    if s == m {
        return Ok(vec![Path { nodes: vec![s], cost: 0.0, delay: 0.0 }]);
    }
    let reverse = reverse_lists(g);
    let n = g.node_count();
    let no_nodes = vec![false; n];
    let first = lex_shortest(g, &reverse, s, m, &no_nodes, &HashSet::new())
        .ok_or(TreeError::DestinationUnreachable(m))?;

    let mut accepted: Vec<Vec<NodeId>> = vec![first];
    let mut seen: BTreeSet<Vec<NodeId>> = accepted.iter().cloned().collect();
    let mut pool: BTreeSet<Candidate> = BTreeSet::new();

    while accepted.len() < k {
        let prev = accepted.last().expect("non-empty").clone();
        for i in 0..prev.len() - 1 {
            let spur = prev[i];
            let root = &prev[..=i];
            let mut banned_edges = HashSet::new();
            for p in &accepted {
                if p.len() > i + 1 && &p[..=i] == root {
                    banned_edges.insert((p[i], p[i + 1]));
                }
            }
            let mut banned_nodes = vec![false; n];
            for &r in &root[..i] {
                banned_nodes[r.index()] = true;
            }
            if let Some(spur_path) = lex_shortest(g, &reverse, spur, m, &banned_nodes, &banned_edges) {
                let mut nodes = root[..i].to_vec();
                nodes.extend(spur_path);
                if !seen.contains(&nodes) {
                    let (cost, _) = g.path_weight(&nodes)?;
                    pool.insert(Candidate { cost, nodes });
                }
            }
        }
        let Some(next) = pool.pop_first() else { break };
        seen.insert(next.nodes.clone());
        accepted.push(next.nodes);
    }

    accepted.into_iter().map(|nodes| g.path(nodes)).collect()
}

fn reverse_lists(g: &WeightedGraph) -> Vec<Vec<(NodeId, f64)>> {
    let mut rev = vec![Vec::new(); g.node_count()];
    for (from, e) in g.all_edges() {
        rev[e.to.index()].push((from, e.cost));
    }
    rev
}

#[derive(PartialEq)]
struct HeapItem(f64, NodeId);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Lexicographically smallest among the cheapest `from -> to` paths that avoid
/// `banned_nodes` and `banned_edges`.
fn lex_shortest(
    g: &WeightedGraph,
    reverse: &[Vec<(NodeId, f64)>],
    from: NodeId,
    to: NodeId,
    banned_nodes: &[bool],
    banned_edges: &HashSet<(NodeId, NodeId)>,
) -> Option<Vec<NodeId>> {
    if banned_nodes[from.index()] || banned_nodes[to.index()] {
        return None;
    }
    // distance-to-target over the restricted graph
    let n = g.node_count();
    let mut dist = vec![f64::INFINITY; n];
    dist[to.index()] = 0.0;
    let mut heap = BinaryHeap::from([HeapItem(0.0, to)]);
    while let Some(HeapItem(d, v)) = heap.pop() {
        if d > dist[v.index()] {
            continue;
        }
        for &(u, c) in &reverse[v.index()] {
            if banned_nodes[u.index()] || banned_edges.contains(&(u, v)) {
                continue;
            }
            let nd = d + c;
            if nd < dist[u.index()] {
                dist[u.index()] = nd;
                heap.push(HeapItem(nd, u));
            }
        }
    }
    if !dist[from.index()].is_finite() {
        return None;
    }

    // walk forward, always taking the smallest id that stays on a cheapest path
    let mut path = vec![from];
    let mut on_path = vec![false; n];
    on_path[from.index()] = true;
    let mut cur = from;
    while cur != to {
        let dc = dist[cur.index()];
        let tol = EPS * dc.abs().max(1.0);
        let next = g.edges(cur).iter().find(|e| {
            !banned_nodes[e.to.index()]
                && !on_path[e.to.index()]
                && !banned_edges.contains(&(cur, e.to))
                && (dc - (e.cost + dist[e.to.index()])).abs() <= tol
        })?;
        cur = next.to;
        on_path[cur.index()] = true;
        path.push(cur);
    }
    Some(path)
}
