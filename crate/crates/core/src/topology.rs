//! Node placement, random-waypoint mobility and graph queries over the
//! radio connectivity graph.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;

use crate::error::ConfigError;

/// Dense node identifier, `0..n` for an `n`-node scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Random-waypoint state of a single node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityState {
    pub current: Position,
    pub waypoint: Position,
    /// meters per second
    pub speed: f64,
    /// seconds
    pub pause_remaining: f64,
}

impl MobilityState {
    /// A node that never moves.
    pub fn stationary(at: Position) -> Self {
        Self { current: at, waypoint: at, speed: 0.0, pause_remaining: 0.0 }
    }

    /// Initial state: uniform position, paused for one pause period before the
    /// first leg.
    pub fn initial<R: Rng + ?Sized>(config: &WorldConfig, rng: &mut R) -> Self {
        let at = random_position(config, rng);
        Self { current: at, waypoint: at, speed: 0.0, pause_remaining: config.pause_time }
    }

    fn at_waypoint(&self) -> bool {
        self.current == self.waypoint
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub area_width: f64,
    pub area_height: f64,
    pub radio_range: f64,
    pub n_nodes: usize,
    pub k_hops: u32,
    pub min_speed: f64,
    pub max_speed: f64,
    pub pause_time: f64,
    pub sim_time: f64,
    /// Mobility sampling interval in seconds.
    pub tick: f64,
    pub rng_seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            area_width: 600.0,
            area_height: 600.0,
            radio_range: 250.0,
            n_nodes: 25,
            k_hops: 2,
            min_speed: 1.0,
            max_speed: 10.0,
            pause_time: 5.0,
            sim_time: 50.0,
            tick: 0.1,
            rng_seed: 1,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("world.area_width", self.area_width),
            ("world.area_height", self.area_height),
            ("world.radio_range", self.radio_range),
            ("world.sim_time", self.sim_time),
            ("world.tick", self.tick),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::invalid(field, "must be > 0"));
            }
        }
        if self.k_hops < 1 {
            return Err(ConfigError::invalid("protocol.k_hops", "must be >= 1"));
        }
        if self.n_nodes == 0 {
            return Err(ConfigError::invalid("world.n_nodes", "must be >= 1"));
        }
        if !(self.min_speed >= 0.0 && self.max_speed >= self.min_speed) {
            return Err(ConfigError::invalid(
                "world.max_speed",
                "must satisfy 0 <= min_speed <= max_speed",
            ));
        }
        if !(self.pause_time >= 0.0) {
            return Err(ConfigError::invalid("world.pause_time", "must be >= 0"));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Position) -> bool {
        (0.0..=self.area_width).contains(&p.x) && (0.0..=self.area_height).contains(&p.y)
    }
}

pub fn random_position<R: Rng + ?Sized>(config: &WorldConfig, rng: &mut R) -> Position {
    Position::new(rng.gen_range(0.0..=config.area_width), rng.gen_range(0.0..=config.area_height))
}

/// Advances one node by `dt` seconds under the random-waypoint model.
///
/// A moving node travels at most `speed * dt` toward its waypoint and snaps
/// onto it when the remaining distance is shorter. Arrival starts a pause of
/// `pause_time`; when the pause runs out a new uniform waypoint and a uniform
/// speed in `[min_speed, max_speed]` are drawn. With `max_speed == 0` the node
/// is static.
pub fn advance_mobility<R: Rng + ?Sized>(
    state: MobilityState,
    config: &WorldConfig,
    dt: f64,
    rng: &mut R,
) -> MobilityState {
    debug_assert!(dt > 0.0);
    let mut next = state;
    if config.max_speed <= 0.0 {
        next.pause_remaining = (next.pause_remaining - dt).max(0.0);
        return next;
    }

    if next.at_waypoint() {
        if next.pause_remaining > 0.0 {
            next.pause_remaining = (next.pause_remaining - dt).max(0.0);
            return next;
        }
        next.waypoint = random_position(config, rng);
        next.speed = if config.max_speed > config.min_speed {
            rng.gen_range(config.min_speed..=config.max_speed)
        } else {
            config.max_speed
        };
        // the leg starts on the next tick
        return next;
    }

    let remaining = next.current.distance(&next.waypoint);
    let step = next.speed * dt;
    if remaining <= step {
        next.current = next.waypoint;
        next.pause_remaining = config.pause_time;
    } else {
        let f = step / remaining;
        next.current.x += (next.waypoint.x - next.current.x) * f;
        next.current.y += (next.waypoint.y - next.current.y) * f;
        next.current.x = next.current.x.clamp(0.0, config.area_width);
        next.current.y = next.current.y.clamp(0.0, config.area_height);
    }
    next
}

/// All nodes within `range` of `id` (boundary inclusive), sorted by id.
pub fn neighbors(id: NodeId, positions: &[Position], range: f64) -> Vec<NodeId> {
    let me = positions[id.index()];
    positions
        .iter()
        .enumerate()
        .filter(|&(j, p)| j != id.index() && me.distance(p) <= range)
        .map(|(j, _)| NodeId(j))
        .collect()
}

/// Undirected adjacency lists, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Adjacency {
    lists: Vec<Vec<NodeId>>,
}

impl Adjacency {
    pub fn from_positions(positions: &[Position], range: f64) -> Self {
        let n = positions.len();
        let mut lists = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                if positions[i].distance(&positions[j]) <= range {
                    lists[i].push(NodeId(j));
                    lists[j].push(NodeId(i));
                }
            }
        }
        for l in &mut lists {
            l.sort_unstable();
        }
        Self { lists }
    }

    /// Builds from an undirected edge list; duplicate and self edges are ignored.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut lists = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a == b {
                continue;
            }
            lists[a].push(NodeId(b));
            lists[b].push(NodeId(a));
        }
        for l in &mut lists {
            l.sort_unstable();
            l.dedup();
        }
        Self { lists }
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.lists[id.index()]
    }

    pub fn are_linked(&self, a: NodeId, b: NodeId) -> bool {
        self.lists[a.index()].binary_search(&b).is_ok()
    }

    /// BFS hop distances from `from`, `None` where unreachable.
    pub fn hop_distances(&self, from: NodeId) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.lists.len()];
        dist[from.index()] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u.index()].unwrap_or(0);
            for &v in &self.lists[u.index()] {
                if dist[v.index()].is_none() {
                    dist[v.index()] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn hop_distance(&self, a: NodeId, b: NodeId) -> Option<u32> {
        self.hop_distances(a)[b.index()]
    }
}

/// Nodes reachable from `id` in at most `k` hops, excluding `id`, sorted.
pub fn k_hop_set(id: NodeId, adjacency: &Adjacency, k: u32) -> Vec<NodeId> {
    let mut dist: Vec<Option<u32>> = vec![None; adjacency.len()];
    dist[id.index()] = Some(0);
    let mut queue = VecDeque::from([id]);
    let mut out = Vec::new();
    while let Some(u) = queue.pop_front() {
        let du = dist[u.index()].unwrap_or(0);
        if du == k {
            continue;
        }
        for &v in adjacency.neighbors(u) {
            if dist[v.index()].is_none() {
                dist[v.index()] = Some(du + 1);
                out.push(v);
                queue.push_back(v);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Size of the k-hop neighborhood, used as the node's inter-connectivity.
pub fn connectivity(id: NodeId, adjacency: &Adjacency, k: u32) -> u32 {
    k_hop_set(id, adjacency, k).len() as u32
}

/// Whether every node can reach every other node.
pub fn is_connected(adjacency: &Adjacency) -> bool {
    adjacency.is_empty() || adjacency.hop_distances(NodeId(0)).iter().all(Option::is_some)
}
