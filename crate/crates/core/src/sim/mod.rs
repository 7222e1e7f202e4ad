//! Deterministic discrete-event simulation of one scenario run.

mod engine;
pub mod event;
pub mod trace;
pub mod transport;

use crate::ant::AntParams;
use crate::cluster::{ClusterConfig, GroupId};
use crate::error::ConfigError;
use crate::topology::{NodeId, Position, WorldConfig};

pub use engine::{ConvergenceRow, RunOutcome, Simulation};
pub use event::{EventQueue, SimTime};
pub use trace::{TraceKind, TraceRecord};
pub use transport::{ChannelModel, TransportModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    Aamrp,
    Flooding,
    SharedTree,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Aamrp, Protocol::Flooding, Protocol::SharedTree];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Aamrp => "aamrp",
            Protocol::Flooding => "flooding",
            Protocol::SharedTree => "shared_tree",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Edge weight used for the ant tree's snapshot graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMetric {
    Hop,
    Euclidean,
}

impl CostMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            CostMetric::Hop => "hop",
            CostMetric::Euclidean => "euclidean",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hop" => Some(CostMetric::Hop),
            "euclidean" => Some(CostMetric::Euclidean),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeConfig {
    /// Seconds between MCAST-REQ floods (and tree rebuilds).
    pub refresh_period: f64,
    pub first_refresh: f64,
    /// Upper bound of the uniform delay before a member starts joining.
    pub join_jitter: f64,
    pub cost: CostMetric,
    /// Keep each source's pheromone table across refresh rounds.
    pub persist_pheromone: bool,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            refresh_period: 5.0,
            first_refresh: 3.0,
            join_jitter: 0.25,
            cost: CostMetric::Hop,
            persist_pheromone: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficConfig {
    /// Sources per group.
    pub sources: usize,
    /// Packets per second per source.
    pub rate: f64,
    pub payload_bytes: usize,
    pub start: f64,
    /// Share of the nodes that join each group as receivers (at least one).
    pub member_fraction: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self { sources: 1, rate: 4.0, payload_bytes: 512, start: 4.0, member_fraction: 0.2 }
    }
}

impl TrafficConfig {
    pub fn members_per_group(&self, n_nodes: usize) -> usize {
        let available = n_nodes.saturating_sub(self.sources);
        ((self.member_fraction * n_nodes as f64).round() as usize).max(1).min(available)
    }
}

/// Explicit sources and receivers of one group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSpec {
    pub id: GroupId,
    pub sources: Vec<NodeId>,
    pub members: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub world: WorldConfig,
    pub protocol: Protocol,
    pub cluster: ClusterConfig,
    pub ants: AntParams,
    pub tree: TreeConfig,
    pub traffic: TrafficConfig,
    pub transport: TransportModel,
    /// Concurrent multicast groups.
    pub n_groups: usize,
    /// Fixed node placement; nodes then never move.
    pub positions: Option<Vec<Position>>,
    /// Fixed membership; otherwise drawn from the seed.
    pub groups: Option<Vec<GroupSpec>>,
    pub trace: bool,
    pub convergence: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            protocol: Protocol::Aamrp,
            cluster: ClusterConfig::default(),
            ants: AntParams::default(),
            tree: TreeConfig::default(),
            traffic: TrafficConfig::default(),
            transport: TransportModel::default(),
            n_groups: 1,
            positions: None,
            groups: None,
            trace: false,
            convergence: false,
        }
    }
}

impl RunConfig {
    /// All violations, in field order.
    pub fn validate(&self) -> Result<(), Vec<ConfigError>> {
        let mut errs = Vec::new();
        let mut push = |r: Result<(), ConfigError>| {
            if let Err(e) = r {
                errs.push(e);
            }
        };
        push(self.world.validate());
        push(self.cluster.validate());
        push(self.ants.validate());
        push(self.transport.validate());
        if self.cluster.k_hops != self.world.k_hops {
            push(Err(ConfigError::invalid("protocol.k_hops", "world and protocol k_hops differ")));
        }
        let t = &self.tree;
        for (field, v) in [("protocol.refresh_period", t.refresh_period), ("protocol.first_refresh", t.first_refresh)] {
            if !(v.is_finite() && v > 0.0) {
                push(Err(ConfigError::invalid(field, "must be > 0")));
            }
        }
        if !(t.join_jitter >= 0.0 && t.join_jitter.is_finite()) {
            push(Err(ConfigError::invalid("protocol.join_jitter", "must be >= 0")));
        }
        let tr = &self.traffic;
        if !(tr.rate.is_finite() && tr.rate > 0.0) {
            push(Err(ConfigError::invalid("traffic.rate", "must be > 0")));
        }
        if tr.payload_bytes == 0 {
            push(Err(ConfigError::invalid("traffic.payload", "must be >= 1")));
        }
        if !(tr.start >= 0.0 && tr.start.is_finite()) {
            push(Err(ConfigError::invalid("traffic.start", "must be >= 0")));
        }
        if !(tr.member_fraction > 0.0 && tr.member_fraction <= 1.0) {
            push(Err(ConfigError::invalid("traffic.member_fraction", "must lie in (0, 1]")));
        }
        if self.groups.is_none() && tr.sources >= self.world.n_nodes {
            push(Err(ConfigError::invalid("traffic.sources", "must be < world.n_nodes")));
        }
        if self.n_groups < 1 && self.groups.is_none() {
            push(Err(ConfigError::invalid("sweep.group_sizes", "must be >= 1")));
        }
        let n = self.world.n_nodes;
        if let Some(p) = &self.positions {
            if p.len() != n {
                push(Err(ConfigError::invalid("world.positions", format!("expected {n} positions, got {}", p.len()))));
            } else if p.iter().any(|q| !self.world.contains(q)) {
                push(Err(ConfigError::invalid("world.positions", "position outside the area")));
            }
        }
        if let Some(groups) = &self.groups {
            for g in groups {
                if g.sources.iter().chain(&g.members).any(|id| id.index() >= n) {
                    push(Err(ConfigError::invalid("groups", format!("group {} names an unknown node", g.id))));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

/// Runs one scenario to completion.
pub fn run(cfg: &RunConfig, seed: u64) -> Result<RunOutcome, Vec<ConfigError>> {
    Ok(Simulation::new(cfg, seed)?.run())
}
