//! Brute-force reference implementations used to cross-check the
//! production algorithms, plus the randomized checks built on them.
//!
//! Nothing here shares code with the algorithms under test: graphs are held
//! in a dense weight matrix, paths are enumerated exhaustively, and tree
//! costs are recomputed from scratch.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ant::{construct_tree_with, k_shortest_paths, AntDecision, AntParams, PheromoneTable, WeightedGraph};
use crate::topology::{Adjacency, NodeId};

/// Dense directed graph: `w[i][j] = Some((cost, delay))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGraph {
    pub w: Vec<Vec<Option<(f64, f64)>>>,
}

impl DenseGraph {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn to_weighted(&self) -> WeightedGraph {
        let mut g = WeightedGraph::new(self.n());
        for (i, row) in self.w.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                if let Some((c, d)) = *e {
                    g.add_edge(NodeId(i), NodeId(j), c, d);
                }
            }
        }
        g
    }

    /// (cost, delay) of a node sequence, or `None` if an edge is missing.
    pub fn weigh(&self, nodes: &[usize]) -> Option<(f64, f64)> {
        let mut cost = 0.0;
        let mut delay = 0.0;
        for w in nodes.windows(2) {
            let (c, d) = self.w[w[0]][w[1]]?;
            cost += c;
            delay += d;
        }
        Some((cost, delay))
    }
}

/// Random symmetric graph with integer costs in `1..=4` and delays in
/// multiples of 0.125 s up to 0.375 s, so that path sums are exact in binary
/// floating point and ties are common. Two-hop paths can exceed the default
/// 0.5 s delay bound.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, edge_prob: f64) -> DenseGraph {
    let mut w = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(edge_prob) {
                let e = (rng.gen_range(1..=4) as f64, rng.gen_range(1..=3) as f64 * 0.125);
                w[i][j] = Some(e);
                w[j][i] = Some(e);
            }
        }
    }
    DenseGraph { w }
}

/// Every simple path from `s` to `t`, in no particular order.
pub fn all_simple_paths(g: &DenseGraph, s: usize, t: usize) -> Vec<Vec<usize>> {
    fn dfs(g: &DenseGraph, t: usize, path: &mut Vec<usize>, on: &mut [bool], out: &mut Vec<Vec<usize>>) {
        let u = *path.last().expect("non-empty");
        if u == t {
            out.push(path.clone());
            return;
        }
        for v in 0..g.n() {
            if g.w[u][v].is_some() && !on[v] {
                on[v] = true;
                path.push(v);
                dfs(g, t, path, on, out);
                path.pop();
                on[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    let mut on = vec![false; g.n()];
    on[s] = true;
    dfs(g, t, &mut vec![s], &mut on, &mut out);
    out
}

/// The `k` cheapest simple paths, ties broken by node sequence.
pub fn brute_k_shortest(g: &DenseGraph, s: usize, t: usize, k: usize) -> Vec<(f64, Vec<usize>)> {
    let mut all: Vec<(f64, Vec<usize>)> = all_simple_paths(g, s, t)
        .into_iter()
        .map(|p| (g.weigh(&p).expect("enumerated paths exist").0, p))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    all.truncate(k);
    all
}

/// Union edge cost plus `(penalty - 1) * cost` for every path whose delay
/// exceeds the bound.
pub fn penalized_cost(g: &DenseGraph, paths: &[Vec<usize>], delay_bound: f64, penalty: f64) -> f64 {
    let mut edges = BTreeSet::new();
    let mut extra = 0.0;
    for p in paths {
        for w in p.windows(2) {
            edges.insert((w[0], w[1]));
        }
        let (c, d) = g.weigh(p).expect("path exists");
        if d > delay_bound {
            extra += (penalty - 1.0) * c;
        }
    }
    edges.iter().map(|&(a, b)| g.w[a][b].expect("edge exists").0).sum::<f64>() + extra
}

/// Cheapest combination of one backup path per destination, over the
/// brute-force K-shortest sets. `None` if a destination is unreachable.
pub fn exhaustive_tree_optimum(g: &DenseGraph, s: usize, dests: &[usize], params: &AntParams) -> Option<f64> {
    let sets: Vec<Vec<Vec<usize>>> = dests
        .iter()
        .map(|&m| brute_k_shortest(g, s, m, params.k_paths).into_iter().map(|(_, p)| p).collect())
        .collect();
    if sets.iter().any(Vec::is_empty) {
        return None;
    }
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; sets.len()];
    loop {
        let chosen: Vec<Vec<usize>> = sets.iter().zip(&idx).map(|(set, &i)| set[i].clone()).collect();
        best = best.min(penalized_cost(g, &chosen, params.delay_bound, params.delay_penalty));
        // odometer increment
        let mut d = 0;
        loop {
            if d == idx.len() {
                return Some(best);
            }
            idx[d] += 1;
            if idx[d] < sets[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// `r[i][j]` is true iff `j` is within `k` hops of `i`, by boolean powers of
/// `(I + A)`.
pub fn reachability_within(adj: &Adjacency, k: u32) -> Vec<Vec<bool>> {
    let n = adj.len();
    let mut step = vec![vec![false; n]; n];
    for (i, row) in step.iter_mut().enumerate() {
        row[i] = true;
        for j in adj.neighbors(NodeId(i)) {
            row[j.index()] = true;
        }
    }
    let mut r: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect();
    for _ in 0..k {
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for m in 0..n {
                if r[i][m] {
                    for j in 0..n {
                        next[i][j] |= step[m][j];
                    }
                }
            }
        }
        r = next;
    }
    r
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KspReport {
    pub trials: usize,
    pub comparisons: usize,
    pub mismatches: Vec<String>,
}

/// Compares `k_shortest_paths` with exhaustive enumeration on random graphs
/// of at most 8 nodes, for every K in 1..=3 and every reachable target.
pub fn check_ksp(trials: usize, seed: u64) -> KspReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = KspReport { trials, ..Default::default() };
    for t in 0..trials {
        let n = rng.gen_range(2..=8);
        let p = rng.gen_range(0.25..0.9);
        let g = random_graph(&mut rng, n, p);
        let wg = g.to_weighted();
        for target in 1..n {
            for k in 1..=3 {
                let want = brute_k_shortest(&g, 0, target, k);
                let got = k_shortest_paths(&wg, NodeId(0), NodeId(target), k);
                rep.comparisons += 1;
                let got: Vec<(f64, Vec<usize>)> = match got {
                    Ok(ps) => ps.into_iter().map(|p| (p.cost, p.nodes.iter().map(|v| v.index()).collect())).collect(),
                    Err(_) => Vec::new(),
                };
                if got != want {
                    rep.mismatches.push(format!("trial {t} target {target} k {k}: got {got:?}, want {want:?}"));
                }
            }
        }
    }
    rep
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AntReport {
    pub trials: usize,
    /// Instances whose tree cost is within 5% of the optimum.
    pub within_5pct: usize,
    pub worst_ratio: f64,
    /// Tree cost disagreed with the independent recomputation.
    pub cost_mismatches: usize,
    pub decisions: usize,
    /// Decisions whose probabilities do not sum to one or put mass outside
    /// the allowed next hops.
    pub bad_decisions: usize,
    pub max_sum_error: f64,
}

/// Ant tree against the exhaustive optimum on random instances with at most
/// 8 nodes, 3 destinations and K <= 3, otherwise default parameters.
pub fn check_ant(trials: usize, seed: u64, iterations: usize) -> AntReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = AntReport { trials, worst_ratio: 1.0, ..Default::default() };
    let mut done = 0;
    while done < trials {
        let n = rng.gen_range(4..=8);
        let p = rng.gen_range(0.35..0.9);
        let g = random_graph(&mut rng, n, p);
        let reach: Vec<usize> = (1..n).filter(|&m| !all_simple_paths(&g, 0, m).is_empty()).collect();
        if reach.is_empty() {
            continue;
        }
        let n_dest = rng.gen_range(1..=3.min(reach.len()));
        let mut dests: Vec<usize> = rand::seq::index::sample(&mut rng, reach.len(), n_dest)
            .into_iter()
            .map(|i| reach[i])
            .collect();
        dests.sort_unstable();
        let params = AntParams {
            k_paths: rng.gen_range(1..=3),
            max_iterations: iterations,
            time_limit: None,
            ..AntParams::default()
        };
        let optimum = exhaustive_tree_optimum(&g, 0, &dests, &params).expect("destinations reachable");

        let wg = g.to_weighted();
        let mut tau = PheromoneTable::new(&wg, params.tau0, params.tau_min);
        let ids: Vec<NodeId> = dests.iter().map(|&d| NodeId(d)).collect();
        let mut obs = |d: &AntDecision| {
            rep.decisions += 1;
            let sum: f64 = d.probabilities.iter().sum();
            let err = (sum - 1.0).abs();
            rep.max_sum_error = rep.max_sum_error.max(err);
            let outside = d
                .probabilities
                .iter()
                .enumerate()
                .any(|(j, &p)| p != 0.0 && (!d.allowed.contains(&NodeId(j)) || g.w[d.at.index()][j].is_none()));
            if err > 1e-9 || outside {
                rep.bad_decisions += 1;
            }
        };
        let built = construct_tree_with(&wg, NodeId(0), &ids, &params, &mut rng, &mut tau, Some(&mut obs))
            .expect("valid instance");
        let tree = built.tree;
        let chosen: Vec<Vec<usize>> =
            tree.paths.iter().map(|p| p.nodes.iter().map(|v| v.index()).collect()).collect();
        let recomputed = penalized_cost(&g, &chosen, params.delay_bound, params.delay_penalty);
        if (recomputed - tree.total_cost).abs() > 1e-9 {
            rep.cost_mismatches += 1;
        }
        let ratio = recomputed / optimum;
        rep.worst_ratio = rep.worst_ratio.max(ratio);
        if ratio <= 1.05 + 1e-12 {
            rep.within_5pct += 1;
        }
        done += 1;
    }
    rep
}
