//! Ant colony search over backup-path sets.
//!
//! Each destination gets a set of up to K cheapest paths. An ant builds a
//! tree by walking, for every destination, from the source along the
//! prefixes of that destination's backup paths, choosing each next hop with
//! probability proportional to `tau^alpha * eta^beta`. After every
//! iteration pheromone evaporates and the iteration-best ant (or every ant)
//! deposits `Q / ((C_j - C_i)^2 + 1)` on each edge it walked, where `C` is
//! the cost accumulated from the source.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::Rng;

use super::graph::{Path, WeightedGraph};
use super::ksp::k_shortest_paths;
use crate::error::{ConfigError, TreeError};
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepositPolicy {
    IterationBest,
    AllAnts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AntParams {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub q: f64,
    pub n_ants: usize,
    pub max_iterations: usize,
    /// Wall-clock budget per tree construction. Hitting it makes the result
    /// depend on machine speed.
    pub time_limit: Option<Duration>,
    /// Backup paths per destination.
    pub k_paths: usize,
    /// seconds
    pub delay_bound: f64,
    pub delay_penalty: f64,
    pub tau0: f64,
    pub tau_min: f64,
    pub deposit: DepositPolicy,
}

impl Default for AntParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            rho: 0.1,
            q: 1.0,
            n_ants: 10,
            max_iterations: 50,
            time_limit: Some(Duration::from_secs(10)),
            k_paths: 3,
            delay_bound: 0.5,
            delay_penalty: 10.0,
            tau0: 1.0,
            tau_min: 0.01,
            deposit: DepositPolicy::IterationBest,
        }
    }
}

impl AntParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(ConfigError::invalid("ants.alpha", "must be >= 0"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(ConfigError::invalid("ants.beta", "must be >= 0"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(ConfigError::invalid("ants.rho", "must lie in the open interval (0, 1)"));
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(ConfigError::invalid("ants.q", "must be > 0"));
        }
        if self.n_ants < 1 {
            return Err(ConfigError::invalid("ants.n_ants", "must be >= 1"));
        }
        if self.max_iterations < 1 {
            return Err(ConfigError::invalid("ants.max_iterations", "must be >= 1"));
        }
        if self.k_paths < 1 {
            return Err(ConfigError::invalid("ants.k_paths", "must be >= 1"));
        }
        if !(self.delay_bound > 0.0) {
            return Err(ConfigError::invalid("ants.delay_bound", "must be > 0"));
        }
        if !(self.delay_penalty > 1.0 && self.delay_penalty.is_finite()) {
            return Err(ConfigError::invalid("ants.delay_penalty", "must be > 1"));
        }
        if !(self.tau_min > 0.0) {
            return Err(ConfigError::invalid("ants.tau_min", "must be > 0"));
        }
        if !(self.tau0 >= self.tau_min && self.tau0.is_finite()) {
            return Err(ConfigError::invalid("ants.tau0", "must be >= ants.tau_min"));
        }
        Ok(())
    }
}

/// Per directed edge pheromone, floored at `tau_min`.
#[derive(Debug, Clone, PartialEq)]
pub struct PheromoneTable {
    tau: BTreeMap<(NodeId, NodeId), f64>,
    tau0: f64,
    tau_min: f64,
}

impl PheromoneTable {
    /// Every edge of `g` starts at `tau0`.
    pub fn new(g: &WeightedGraph, tau0: f64, tau_min: f64) -> Self {
        let tau = g.all_edges().map(|(from, e)| ((from, e.to), tau0.max(tau_min))).collect();
        Self { tau, tau0, tau_min }
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> f64 {
        self.tau.get(&(i, j)).copied().unwrap_or(self.tau0.max(self.tau_min))
    }

    pub fn set(&mut self, i: NodeId, j: NodeId, value: f64) {
        self.tau.insert((i, j), value.max(self.tau_min));
    }

    pub fn tau_min(&self) -> f64 {
        self.tau_min
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.tau.values().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &f64)> {
        self.tau.iter()
    }

    /// Adds edges of `g` that the table does not know yet, at `tau0`.
    pub fn extend_to(&mut self, g: &WeightedGraph) {
        let init = self.tau0.max(self.tau_min);
        for (from, e) in g.all_edges() {
            self.tau.entry((from, e.to)).or_insert(init);
        }
    }
}

/// `tau <- max(tau_min, (1 - rho) * tau)` on every edge.
pub fn evaporate(tau: &mut PheromoneTable, rho: f64) {
    let floor = tau.tau_min;
    for v in tau.tau.values_mut() {
        *v = ((1.0 - rho) * *v).max(floor);
    }
}

/// Pheromone deposited on an edge between sub-tree costs `c_i` and `c_j`.
pub fn deposit_amount(c_i: f64, c_j: f64, q: f64) -> f64 {
    let d = c_j - c_i;
    q / (d * d + 1.0)
}

/// Deposits along `path` using the cost accumulated from its first node.
pub fn deposit(tau: &mut PheromoneTable, g: &WeightedGraph, path: &Path, q: f64) {
    let mut c_i = 0.0;
    for (i, j) in path.edges() {
        let c_j = c_i + g.edge(i, j).map_or(0.0, |e| e.cost);
        let v = tau.get(i, j) + deposit_amount(c_i, c_j, q);
        tau.set(i, j, v);
        c_i = c_j;
    }
}

/// Effective cost of a path after the soft delay constraint.
pub fn apply_delay_penalty(path: &Path, delay_bound: f64, penalty: f64) -> f64 {
    if path.delay > delay_bound {
        path.cost * penalty
    } else {
        path.cost
    }
}

/// Heuristic desirability of edge `i -> j`: inverse edge cost.
pub fn eta(g: &WeightedGraph, i: NodeId, j: NodeId) -> f64 {
    g.edge(i, j).map_or(0.0, |e| 1.0 / e.cost.max(1e-9))
}

fn weight(tau: &PheromoneTable, g: &WeightedGraph, params: &AntParams, i: NodeId, j: NodeId) -> f64 {
    tau.get(i, j).powf(params.alpha) * eta(g, i, j).powf(params.beta)
}

/// Probability that an ant at `i` moves to `j` given the allowed set.
pub fn next_node_probability(
    i: NodeId,
    j: NodeId,
    tau: &PheromoneTable,
    g: &WeightedGraph,
    params: &AntParams,
    allowed: &[NodeId],
) -> Result<f64, TreeError> {
    if !allowed.contains(&j) {
        return Ok(0.0);
    }
    let total: f64 = allowed.iter().map(|&u| weight(tau, g, params, i, u)).sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(TreeError::DegenerateDecision(i));
    }
    Ok(weight(tau, g, params, i, j) / total)
}

/// One next-hop choice, reported to an observer.
#[derive(Debug, Clone)]
pub struct AntDecision {
    pub at: NodeId,
    pub allowed: Vec<NodeId>,
    /// Probability of every graph node, indexed by node id.
    pub probabilities: Vec<f64>,
}

/// Backup paths for one destination, cheapest (penalized) first.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub destination: NodeId,
    pub paths: Vec<Path>,
}

/// One chosen path per reachable destination.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticastTree {
    pub source: NodeId,
    pub paths: Vec<Path>,
    pub unreachable: Vec<NodeId>,
    /// Penalized cost of the union edge set.
    pub total_cost: f64,
}

impl MulticastTree {
    pub fn edges(&self) -> BTreeSet<(NodeId, NodeId)> {
        self.paths.iter().flat_map(|p| p.edges()).collect()
    }

    pub fn destinations(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.paths.iter().map(Path::target)
    }

    pub fn delay_to(&self, m: NodeId) -> Option<f64> {
        self.paths.iter().find(|p| p.target() == m).map(|p| p.delay)
    }

    /// Parent of every non-source tree node, following the chosen paths.
    /// Where paths disagree the first path listed wins.
    pub fn parents(&self) -> BTreeMap<NodeId, NodeId> {
        let mut out = BTreeMap::new();
        for p in &self.paths {
            for (a, b) in p.edges() {
                out.entry(b).or_insert(a);
            }
        }
        out
    }
}

/// Penalized cost of a set of paths: union edge cost plus the extra cost of
/// each delay-violating path.
pub fn tree_cost(g: &WeightedGraph, paths: &[&Path], params: &AntParams) -> f64 {
    let edges: BTreeSet<(NodeId, NodeId)> = paths.iter().flat_map(|p| p.edges()).collect();
    let base: f64 = edges.iter().map(|&(a, b)| g.edge(a, b).map_or(0.0, |e| e.cost)).sum();
    let extra: f64 = paths
        .iter()
        .map(|p| apply_delay_penalty(p, params.delay_bound, params.delay_penalty) - p.cost)
        .sum();
    base + extra
}

#[derive(Debug, Clone, PartialEq)]
pub struct Construction {
    pub tree: MulticastTree,
    /// Best-so-far penalized cost after each iteration.
    pub convergence: Vec<(usize, f64)>,
    pub iterations: usize,
}

/// Builds the backup path set of every destination. Unreachable
/// destinations are returned separately.
pub fn build_path_sets(
    g: &WeightedGraph,
    s: NodeId,
    destinations: &[NodeId],
    params: &AntParams,
) -> Result<(Vec<PathSet>, Vec<NodeId>), TreeError> {
    let mut dests: Vec<NodeId> = destinations.to_vec();
    dests.sort_unstable();
    dests.dedup();
    let mut sets = Vec::new();
    let mut unreachable = Vec::new();
    for m in dests {
        match k_shortest_paths(g, s, m, params.k_paths) {
            Ok(paths) => sets.push(PathSet { destination: m, paths }),
            Err(TreeError::DestinationUnreachable(m)) => {
                log::debug!("destination {m} unreachable from {s}, left out of this tree");
                unreachable.push(m);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((sets, unreachable))
}

pub fn construct_tree<R: Rng + ?Sized>(
    g: &WeightedGraph,
    s: NodeId,
    destinations: &[NodeId],
    params: &AntParams,
    rng: &mut R,
) -> Result<Construction, TreeError> {
    let mut tau = PheromoneTable::new(g, params.tau0, params.tau_min);
    construct_tree_with(g, s, destinations, params, rng, &mut tau, None)
}

/// Full colony run against a caller-owned pheromone table, with an optional
/// observer called on every next-hop decision.
pub fn construct_tree_with<R: Rng + ?Sized>(
    g: &WeightedGraph,
    s: NodeId,
    destinations: &[NodeId],
    params: &AntParams,
    rng: &mut R,
    tau: &mut PheromoneTable,
    mut observer: Option<&mut dyn FnMut(&AntDecision)>,
) -> Result<Construction, TreeError> {
    if destinations.is_empty() {
        return Err(TreeError::EmptyDestinationSet);
    }
    if !g.contains(s) {
        return Err(TreeError::UnknownNode(s));
    }
    let (sets, unreachable) = build_path_sets(g, s, destinations, params)?;
    let started = Instant::now();

    let finish = |choice: &[usize], cost: f64| MulticastTree {
        source: s,
        paths: sets.iter().zip(choice).map(|(set, &c)| set.paths[c].clone()).collect(),
        unreachable: unreachable.clone(),
        total_cost: cost,
    };

    if sets.is_empty() {
        return Ok(Construction { tree: finish(&[], 0.0), convergence: Vec::new(), iterations: 0 });
    }

    let no_choice = sets.iter().all(|set| set.paths.len() == 1);
    let iterations = if no_choice { 1 } else { params.max_iterations };

    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut convergence = Vec::with_capacity(iterations);
    let mut done = 0;
    for it in 0..iterations {
        if let Some(limit) = params.time_limit {
            if it > 0 && started.elapsed() >= limit {
                break;
            }
        }
        let mut iter_best: Option<(Vec<usize>, f64)> = None;
        let mut all: Vec<Vec<usize>> = Vec::new();
        for _ in 0..params.n_ants {
            let mut choice = Vec::with_capacity(sets.len());
            for set in &sets {
                choice.push(walk(g, s, set, tau, params, rng, observer.as_deref_mut())?);
            }
            let chosen: Vec<&Path> = sets.iter().zip(&choice).map(|(set, &c)| &set.paths[c]).collect();
            let cost = tree_cost(g, &chosen, params);
            if iter_best.as_ref().map_or(true, |(_, c)| cost < *c) {
                iter_best = Some((choice.clone(), cost));
            }
            if params.deposit == DepositPolicy::AllAnts {
                all.push(choice);
            }
        }
        let (ib_choice, ib_cost) = iter_best.expect("n_ants >= 1");
        if best.as_ref().map_or(true, |(_, c)| ib_cost < *c) {
            best = Some((ib_choice.clone(), ib_cost));
        }

        evaporate(tau, params.rho);
        let depositors = match params.deposit {
            DepositPolicy::IterationBest => vec![ib_choice],
            DepositPolicy::AllAnts => all,
        };
        for choice in &depositors {
            for (set, &c) in sets.iter().zip(choice) {
                deposit(tau, g, &set.paths[c], params.q);
            }
        }
        done = it + 1;
        convergence.push((done, best.as_ref().map_or(f64::INFINITY, |b| b.1)));
    }

    let (choice, cost) = best.expect("at least one iteration ran");
    Ok(Construction { tree: finish(&choice, cost), convergence, iterations: done })
}

/// One ant's walk toward `set.destination`; returns the index of the backup
/// path it ends up following.
fn walk<R: Rng + ?Sized>(
    g: &WeightedGraph,
    s: NodeId,
    set: &PathSet,
    tau: &PheromoneTable,
    params: &AntParams,
    rng: &mut R,
    mut observer: Option<&mut (dyn FnMut(&AntDecision) + '_)>,
) -> Result<usize, TreeError> {
    let mut live: Vec<usize> = (0..set.paths.len()).collect();
    let mut depth = 0;
    let mut cur = s;
    while cur != set.destination {
        // distinct next hops among paths still consistent with the prefix
        let mut allowed: Vec<NodeId> = live.iter().map(|&p| set.paths[p].nodes[depth + 1]).collect();
        allowed.sort_unstable();
        allowed.dedup();
        let next = if allowed.len() == 1 {
            allowed[0]
        } else {
            let weights: Vec<f64> = allowed.iter().map(|&j| weight(tau, g, params, cur, j)).collect();
            let total: f64 = weights.iter().sum();
            if !(total > 0.0 && total.is_finite()) {
                return Err(TreeError::DegenerateDecision(cur));
            }
            let mut r = rng.gen::<f64>() * total;
            let mut pick = *allowed.last().expect("non-empty");
            for (&j, &w) in allowed.iter().zip(&weights) {
                if r < w {
                    pick = j;
                    break;
                }
                r -= w;
            }
            pick
        };
        if let Some(obs) = observer.as_deref_mut() {
            let probabilities = (0..g.node_count())
                .map(|j| next_node_probability(cur, NodeId(j), tau, g, params, &allowed))
                .collect::<Result<Vec<_>, _>>()?;
            obs(&AntDecision { at: cur, allowed: allowed.clone(), probabilities });
        }
        live.retain(|&p| set.paths[p].nodes[depth + 1] == next);
        depth += 1;
        cur = next;
    }
    Ok(live.into_iter().find(|&p| set.paths[p].nodes.len() == depth + 1).expect("a path ends here"))
}
