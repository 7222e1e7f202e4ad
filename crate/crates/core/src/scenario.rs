//! Scenario files: flat `section.key = value` lines, `#` starts a comment.
//!
//! ```text
//! world.n_nodes = 50
//! ants.rho = 0.2
//! sweep.node_counts = 25, 50
//! sweep.seeds = 1..10
//! ```
//!
//! Unset keys keep their defaults; `Scenario::resolved` prints every key.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::ant::DepositPolicy;
use crate::error::{ConfigError, ScenarioError};
use crate::sim::{ChannelModel, CostMetric, Protocol, RunConfig};
use crate::topology::Position;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub node_counts: Vec<usize>,
    pub group_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub protocols: Vec<Protocol>,
    /// Node count held fixed while group size varies.
    pub base_node_count: usize,
    /// Group size held fixed while node count varies.
    pub base_group_size: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            node_counts: vec![25, 50, 75, 100],
            group_sizes: vec![1, 2, 3, 4],
            seeds: (1..=10).collect(),
            protocols: Protocol::ALL.to_vec(),
            base_node_count: 50,
            base_group_size: 1,
        }
    }
}

impl SweepConfig {
    /// Every (n_nodes, group_size) point: the node sweep at the base group
    /// size united with the group sweep at the base node count, sorted.
    pub fn points(&self) -> Vec<(usize, usize)> {
        let mut pts: Vec<(usize, usize)> = self
            .node_counts
            .iter()
            .map(|&n| (n, self.base_group_size))
            .chain(self.group_sizes.iter().map(|&g| (self.base_node_count, g)))
            .collect();
        pts.sort_unstable();
        pts.dedup();
        pts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    /// Metrics CSV file name, relative to the output directory.
    pub csv: String,
    pub trace: bool,
    pub convergence: bool,
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { csv: "metrics.csv".to_string(), trace: false, convergence: false, plots: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    /// Template run; the sweep overrides node count, group count, protocol
    /// and seed.
    pub base: RunConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

fn parse_num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse {v:?} as a number"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| parse_num(x.trim())).collect()
}

/// Seeds as a comma list whose items may be inclusive ranges `a..b`.
fn parse_seeds(v: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once("..") {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (parse_num(a.trim())?, parse_num(b.trim())?);
                if a > b {
                    return Err(format!("empty seed range {item}"));
                }
                out.extend(a..=b);
            }
            None => out.push(parse_num(item)?),
        }
    }
    Ok(out)
}

fn parse_positions(v: &str) -> Result<Vec<Position>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|p| {
            let (x, y) = p.split_once(':').ok_or_else(|| format!("position {p:?} is not x:y"))?;
            Ok(Position::new(parse_num(x.trim())?, parse_num(y.trim())?))
        })
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut s = Scenario::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ScenarioError::Parse { line: i + 1, message: format!("expected key = value, got {line:?}") })?;
            let key = key.trim();
            s.set(key, value.trim())
                .map_err(|m| ScenarioError::Parse { line: i + 1, message: format!("{key}: {m}") })?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses and validates.
    pub fn load_valid(path: &Path) -> Result<Self, ScenarioError> {
        let s = Self::load(path)?;
        s.validate().map_err(ScenarioError::Invalid)?;
        Ok(s)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let b = &mut self.base;
        match key {
            "world.area_width" => b.world.area_width = parse_num(v)?,
            "world.area_height" => b.world.area_height = parse_num(v)?,
            "world.radio_range" => b.world.radio_range = parse_num(v)?,
            "world.n_nodes" => b.world.n_nodes = parse_num(v)?,
            "world.min_speed" => b.world.min_speed = parse_num(v)?,
            "world.max_speed" => b.world.max_speed = parse_num(v)?,
            "world.pause_time" => b.world.pause_time = parse_num(v)?,
            "world.sim_time" => b.world.sim_time = parse_num(v)?,
            "world.tick" => {
                b.world.tick = parse_num(v)?;
                b.cluster.min_period = b.world.tick;
            }
            "world.positions" => {
                let p = parse_positions(v)?;
                b.positions = (!p.is_empty()).then_some(p);
            }
            "protocol.k_hops" => {
                b.cluster.k_hops = parse_num(v)?;
                b.world.k_hops = b.cluster.k_hops;
            }
            "protocol.threshold_t" => b.cluster.range.threshold_t = parse_num(v)?,
            "protocol.member_base_period" => b.cluster.range.member_base_period = parse_num(v)?,
            "protocol.leader_beacon_period" => b.cluster.range.leader_beacon_period = parse_num(v)?,
            "protocol.join_timeout" => b.cluster.range.join_timeout = parse_num(v)?,
            "protocol.missed_beacons" => b.cluster.missed_beacons = parse_num(v)?,
            "protocol.refresh_period" => b.tree.refresh_period = parse_num(v)?,
            "protocol.first_refresh" => b.tree.first_refresh = parse_num(v)?,
            "protocol.join_jitter" => b.tree.join_jitter = parse_num(v)?,
            "protocol.cost" => {
                b.tree.cost = CostMetric::parse(v).ok_or_else(|| "expected hop or euclidean".to_string())?
            }
            "protocol.persist_pheromone" => b.tree.persist_pheromone = parse_bool(v)?,
            "ants.alpha" => b.ants.alpha = parse_num(v)?,
            "ants.beta" => b.ants.beta = parse_num(v)?,
            "ants.rho" => b.ants.rho = parse_num(v)?,
            "ants.q" => b.ants.q = parse_num(v)?,
            "ants.n_ants" => b.ants.n_ants = parse_num(v)?,
            "ants.max_iterations" => b.ants.max_iterations = parse_num(v)?,
            "ants.k_paths" => b.ants.k_paths = parse_num(v)?,
            "ants.delay_bound" => b.ants.delay_bound = parse_num(v)?,
            "ants.delay_penalty" => b.ants.delay_penalty = parse_num(v)?,
            "ants.tau0" => b.ants.tau0 = parse_num(v)?,
            "ants.tau_min" => b.ants.tau_min = parse_num(v)?,
            "ants.deposit" => {
                b.ants.deposit = match v {
                    "iteration_best" => DepositPolicy::IterationBest,
                    "all_ants" => DepositPolicy::AllAnts,
                    _ => return Err("expected iteration_best or all_ants".to_string()),
                }
            }
            "traffic.sources" => b.traffic.sources = parse_num(v)?,
            "traffic.rate" => b.traffic.rate = parse_num(v)?,
            "traffic.payload" => b.traffic.payload_bytes = parse_num(v)?,
            "traffic.start" => b.traffic.start = parse_num(v)?,
            "traffic.member_fraction" => b.traffic.member_fraction = parse_num(v)?,
            "transport.per_hop_latency" => b.transport.per_hop_latency = parse_num(v)?,
            "transport.loss_probability" => b.transport.loss_probability = parse_num(v)?,
            "transport.channel" => {
                b.transport.channel =
                    ChannelModel::parse(v).ok_or_else(|| "expected ideal or shared".to_string())?
            }
            "transport.bitrate" => b.transport.bitrate_bps = parse_num(v)?,
            "transport.phy_overhead" => b.transport.phy_overhead = parse_num(v)?,
            "transport.relay_jitter" => b.transport.relay_jitter = parse_num(v)?,
            "sweep.node_counts" => self.sweep.node_counts = parse_list(v)?,
            "sweep.group_sizes" => self.sweep.group_sizes = parse_list(v)?,
            "sweep.seeds" => self.sweep.seeds = parse_seeds(v)?,
            "sweep.protocols" => {
                self.sweep.protocols = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|p| Protocol::parse(p).ok_or_else(|| format!("unknown protocol {p:?}")))
                    .collect::<Result<_, _>>()?
            }
            "sweep.base_node_count" => self.sweep.base_node_count = parse_num(v)?,
            "sweep.base_group_size" => self.sweep.base_group_size = parse_num(v)?,
            "output.csv" => self.output.csv = v.to_string(),
            "output.trace" => self.output.trace = parse_bool(v)?,
            "output.convergence" => self.output.convergence = parse_bool(v)?,
            "output.plots" => self.output.plots = parse_bool(v)?,
            _ => return Err("unknown key".to_string()),
        }
        Ok(())
    }

    /// Every violation with its field path; duplicates reported once.
    pub fn validate(&self) -> Result<(), Vec<ConfigError>> {
        let mut errs: Vec<ConfigError> = Vec::new();
        let mut push = |e: ConfigError| {
            if !errs.contains(&e) {
                errs.push(e);
            }
        };
        let sw = &self.sweep;
        for (field, empty) in [
            ("sweep.node_counts", sw.node_counts.is_empty()),
            ("sweep.group_sizes", sw.group_sizes.is_empty()),
            ("sweep.seeds", sw.seeds.is_empty()),
            ("sweep.protocols", sw.protocols.is_empty()),
        ] {
            if empty {
                push(ConfigError::invalid(field, "must not be empty"));
            }
        }
        if sw.group_sizes.iter().chain([&sw.base_group_size]).any(|&g| g < 1) {
            push(ConfigError::invalid("sweep.group_sizes", "every group size must be >= 1"));
        }
        if self.base.positions.is_some() {
            if sw.points().iter().any(|&(n, _)| n != self.base.world.n_nodes) {
                push(ConfigError::invalid("world.positions", "fixed positions need every swept node count to equal world.n_nodes"));
            }
        }
        for (n, g) in sw.points() {
            let cfg = self.run_config(Protocol::Aamrp, n, g);
            if let Err(es) = cfg.validate() {
                es.into_iter().for_each(&mut push);
            }
        }
        if self.output.csv.trim().is_empty() {
            push(ConfigError::invalid("output.csv", "must not be empty"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// The run configuration of one sweep point.
    pub fn run_config(&self, protocol: Protocol, n_nodes: usize, group_size: usize) -> RunConfig {
        let mut cfg = self.base.clone();
        cfg.protocol = protocol;
        cfg.world.n_nodes = n_nodes;
        cfg.n_groups = group_size;
        cfg.trace = self.output.trace;
        cfg.convergence = self.output.convergence;
        cfg
    }

    /// Fully resolved configuration in scenario-file syntax.
    pub fn resolved(&self) -> String {
        let b = &self.base;
        let mut o = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(o, "{k} = {v}");
        };
        kv("world.area_width", b.world.area_width.to_string());
        kv("world.area_height", b.world.area_height.to_string());
        kv("world.radio_range", b.world.radio_range.to_string());
        kv("world.n_nodes", b.world.n_nodes.to_string());
        kv("world.min_speed", b.world.min_speed.to_string());
        kv("world.max_speed", b.world.max_speed.to_string());
        kv("world.pause_time", b.world.pause_time.to_string());
        kv("world.sim_time", b.world.sim_time.to_string());
        kv("world.tick", b.world.tick.to_string());
        kv(
            "world.positions",
            b.positions.as_ref().map_or(String::new(), |p| {
                p.iter().map(|q| format!("{}:{}", q.x, q.y)).collect::<Vec<_>>().join(", ")
            }),
        );
        kv("protocol.k_hops", b.cluster.k_hops.to_string());
        kv("protocol.threshold_t", b.cluster.range.threshold_t.to_string());
        kv("protocol.member_base_period", b.cluster.range.member_base_period.to_string());
        kv("protocol.leader_beacon_period", b.cluster.range.leader_beacon_period.to_string());
        kv("protocol.join_timeout", b.cluster.range.join_timeout.to_string());
        kv("protocol.missed_beacons", b.cluster.missed_beacons.to_string());
        kv("protocol.refresh_period", b.tree.refresh_period.to_string());
        kv("protocol.first_refresh", b.tree.first_refresh.to_string());
        kv("protocol.join_jitter", b.tree.join_jitter.to_string());
        kv("protocol.cost", b.tree.cost.as_str().to_string());
        kv("protocol.persist_pheromone", b.tree.persist_pheromone.to_string());
        kv("ants.alpha", b.ants.alpha.to_string());
        kv("ants.beta", b.ants.beta.to_string());
        kv("ants.rho", b.ants.rho.to_string());
        kv("ants.q", b.ants.q.to_string());
        kv("ants.n_ants", b.ants.n_ants.to_string());
        kv("ants.max_iterations", b.ants.max_iterations.to_string());
        kv("ants.k_paths", b.ants.k_paths.to_string());
        kv("ants.delay_bound", b.ants.delay_bound.to_string());
        kv("ants.delay_penalty", b.ants.delay_penalty.to_string());
        kv("ants.tau0", b.ants.tau0.to_string());
        kv("ants.tau_min", b.ants.tau_min.to_string());
        kv(
            "ants.deposit",
            match b.ants.deposit {
                DepositPolicy::IterationBest => "iteration_best",
                DepositPolicy::AllAnts => "all_ants",
            }
            .to_string(),
        );
        kv("traffic.sources", b.traffic.sources.to_string());
        kv("traffic.rate", b.traffic.rate.to_string());
        kv("traffic.payload", b.traffic.payload_bytes.to_string());
        kv("traffic.start", b.traffic.start.to_string());
        kv("traffic.member_fraction", b.traffic.member_fraction.to_string());
        kv("transport.per_hop_latency", b.transport.per_hop_latency.to_string());
        kv("transport.loss_probability", b.transport.loss_probability.to_string());
        kv("transport.channel", b.transport.channel.as_str().to_string());
        kv("transport.bitrate", b.transport.bitrate_bps.to_string());
        kv("transport.phy_overhead", b.transport.phy_overhead.to_string());
        kv("transport.relay_jitter", b.transport.relay_jitter.to_string());
        kv("sweep.node_counts", join(&self.sweep.node_counts));
        kv("sweep.group_sizes", join(&self.sweep.group_sizes));
        kv("sweep.seeds", join(&self.sweep.seeds));
        kv("sweep.protocols", join(&self.sweep.protocols));
        kv("sweep.base_node_count", self.sweep.base_node_count.to_string());
        kv("sweep.base_group_size", self.sweep.base_group_size.to_string());
        kv("output.csv", self.output.csv.clone());
        kv("output.trace", self.output.trace.to_string());
        kv("output.convergence", self.output.convergence.to_string());
        kv("output.plots", self.output.plots.to_string());
        o
    }
}
