use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ant::{construct_tree_with, AntParams, PheromoneTable, WeightedGraph};
use crate::cluster::{Action, ClusterAgent, GroupId, MessageKind, ProtocolMessage, Role, TimerKind};
use crate::error::ConfigError;
use crate::metrics::{RunCounters, RunMetrics};
use crate::topology::{advance_mobility, connectivity, Adjacency, MobilityState, NodeId, Position};

use super::event::{EventQueue, SimTime};
use super::trace::{TraceKind, TraceRecord};
use super::transport::{Channel, ChannelModel};
use super::{CostMetric, GroupSpec, Protocol, RunConfig};

const STREAM_MOBILITY: u64 = 1;
const STREAM_ANTS: u64 = 2;
const STREAM_TRAFFIC: u64 = 3;
const STREAM_LOSS: u64 = 4;
const STREAM_JITTER: u64 = 5;

/// Tree state of the previous round stays usable this long after a new
/// MCAST-REQ, so data keeps flowing while the new replies travel back.
const ROUND_GRACE: f64 = 1.0;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct DataPacket {
    source: NodeId,
    group: GroupId,
    seq: u64,
    created_at: SimTime,
}

impl DataPacket {
    fn key(&self) -> (NodeId, GroupId, u64) {
        (self.source, self.group, self.seq)
    }
}

#[derive(Debug, Clone)]
enum DataMode {
    /// Tree hop; `children` are the sender's downstream forwarders.
    Tree { children: Vec<NodeId> },
    /// Leader's local broadcast with remaining hop budget.
    Scoped { ttl: u32 },
    /// Leader-to-member unicast.
    Unicast { dest: NodeId },
    /// Network-wide flood; `relay` is false for the source's own transmission.
    Flood { relay: bool },
}

#[derive(Debug, Clone)]
enum Payload {
    Control(ProtocolMessage),
    Req { msg: ProtocolMessage, hint: Arc<BTreeMap<NodeId, NodeId>> },
    Data { pkt: DataPacket, mode: DataMode },
}

#[derive(Debug, Clone)]
struct Frame {
    sender: NodeId,
    link_dest: Option<NodeId>,
    payload: Payload,
}

#[derive(Debug)]
struct InFlight {
    id: u64,
    frame: Frame,
    receivers: Vec<NodeId>,
    start: SimTime,
    end: SimTime,
}

enum Ev {
    Mobility,
    Join { node: NodeId, group: GroupId },
    Timer { node: NodeId, group: GroupId, kind: TimerKind, token: u64 },
    Refresh { source: usize },
    Traffic { source: usize },
    Transmit(Box<Frame>),
    Deliver(Box<InFlight>),
}

#[derive(Debug, Clone, Copy)]
struct ReverseEntry {
    upstream: NodeId,
    round: u64,
}

#[derive(Debug, Clone)]
struct ForwardEntry {
    children: BTreeSet<NodeId>,
    round: u64,
    /// Children of the round this entry replaced, kept for the grace period.
    previous: BTreeSet<NodeId>,
}

type FlowKey = (NodeId, GroupId);
type PacketKey = (NodeId, GroupId, u64);

#[derive(Debug, Default)]
struct NodeState {
    agents: BTreeMap<GroupId, ClusterAgent>,
    /// Groups this node has joined as a receiver (baseline protocols).
    joined: BTreeSet<GroupId>,
    seen_ctrl: HashSet<(usize, NodeId, GroupId, u64)>,
    /// Latest MCAST-REQ round per flow and when it arrived.
    req_round: BTreeMap<FlowKey, (u64, SimTime)>,
    reverse: BTreeMap<FlowKey, ReverseEntry>,
    forwarding: BTreeMap<FlowKey, ForwardEntry>,
    rep_sent: BTreeMap<FlowKey, u64>,
    toward_leader: BTreeMap<(GroupId, NodeId), NodeId>,
    toward_member: BTreeMap<(GroupId, NodeId), NodeId>,
    accepted: HashSet<PacketKey>,
    handled: HashSet<PacketKey>,
    relayed: HashSet<PacketKey>,
}

struct SourceState {
    node: NodeId,
    group: GroupId,
    round: u64,
    next_seq: u64,
    /// Tree destinations that replied during the current round.
    replied: BTreeSet<NodeId>,
    pheromone: Option<PheromoneTable>,
}

/// One row of an ant-colony convergence dump.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub refresh: u64,
    pub source: NodeId,
    pub group: GroupId,
    pub iteration: usize,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub counters: RunCounters,
    pub metrics: RunMetrics,
    pub trace: Option<Vec<TraceRecord>>,
    pub convergence: Vec<ConvergenceRow>,
}

pub struct Simulation {
    cfg: RunConfig,
    ants: AntParams,
    end: SimTime,
    queue: EventQueue<Ev>,
    mobility: Vec<MobilityState>,
    positions: Vec<Position>,
    adj: Adjacency,
    channel: Channel,
    nodes: Vec<NodeState>,
    groups: Vec<GroupSpec>,
    members: BTreeSet<(GroupId, NodeId)>,
    sources: Vec<SourceState>,
    source_index: BTreeMap<FlowKey, usize>,
    counters: RunCounters,
    trace: Option<Vec<TraceRecord>>,
    convergence: Vec<ConvergenceRow>,
    next_frame: u64,
    rng_mobility: ChaCha8Rng,
    rng_ants: ChaCha8Rng,
    rng_loss: ChaCha8Rng,
    rng_jitter: ChaCha8Rng,
}

impl Simulation {
    pub fn new(cfg: &RunConfig, seed: u64) -> Result<Self, Vec<ConfigError>> {
        cfg.validate()?;
        let n = cfg.world.n_nodes;
        let mut rng_mobility = rng(seed, STREAM_MOBILITY);
        let mut rng_traffic = rng(seed, STREAM_TRAFFIC);

        let mobility: Vec<MobilityState> = match &cfg.positions {
            Some(p) => p.iter().map(|&q| MobilityState::stationary(q)).collect(),
            None => (0..n).map(|_| MobilityState::initial(&cfg.world, &mut rng_mobility)).collect(),
        };
        let positions: Vec<Position> = mobility.iter().map(|m| m.current).collect();
        let adj = Adjacency::from_positions(&positions, cfg.world.radio_range);

        let groups = match &cfg.groups {
            Some(g) => g.clone(),
            None => draw_groups(cfg, &mut rng_traffic),
        };
        let members: BTreeSet<(GroupId, NodeId)> =
            groups.iter().flat_map(|g| g.members.iter().map(move |&m| (g.id, m))).collect();

        // A run is reproducible from its seed alone, so the wall-clock limit is off.
        let ants = AntParams { time_limit: None, ..cfg.ants.clone() };

        let mut sim = Self {
            cfg: cfg.clone(),
            ants,
            end: SimTime::from_secs(cfg.world.sim_time),
            queue: EventQueue::new(),
            mobility,
            positions,
            adj,
            channel: Channel::new(n),
            nodes: (0..n).map(|_| NodeState::default()).collect(),
            groups,
            members,
            sources: Vec::new(),
            source_index: BTreeMap::new(),
            counters: RunCounters::default(),
            trace: cfg.trace.then(Vec::new),
            convergence: Vec::new(),
            next_frame: 0,
            rng_mobility,
            rng_ants: rng(seed, STREAM_ANTS),
            rng_loss: rng(seed, STREAM_LOSS),
            rng_jitter: rng(seed, STREAM_JITTER),
        };
        sim.schedule_initial(&mut rng_traffic);
        Ok(sim)
    }

    fn schedule_initial(&mut self, rng_traffic: &mut ChaCha8Rng) {
        let moving = self.cfg.positions.is_none() && self.cfg.world.max_speed > 0.0;
        if moving {
            self.queue.schedule(SimTime::from_secs(self.cfg.world.tick), Ev::Mobility);
        }
        for (group, member) in self.members.clone() {
            let jitter = self.cfg.tree.join_jitter;
            let at = if jitter > 0.0 { rng_traffic.gen_range(0.0..jitter) } else { 0.0 };
            if self.cfg.protocol == Protocol::Aamrp {
                self.nodes[member.index()]
                    .agents
                    .insert(group, ClusterAgent::new(member, group, self.cfg.cluster.clone()));
            }
            self.queue.schedule(SimTime::from_secs(at), Ev::Join { node: member, group });
        }
        let period = 1.0 / self.cfg.traffic.rate;
        for g in self.groups.clone() {
            for s in g.sources {
                let idx = self.sources.len();
                self.sources.push(SourceState {
                    node: s,
                    group: g.id,
                    round: 0,
                    next_seq: 0,
                    replied: BTreeSet::new(),
                    pheromone: None,
                });
                self.source_index.insert((s, g.id), idx);
                let offset = rng_traffic.gen_range(0.0..period);
                self.queue
                    .schedule(SimTime::from_secs(self.cfg.traffic.start + offset), Ev::Traffic { source: idx });
                if self.cfg.protocol != Protocol::Flooding {
                    self.queue
                        .schedule(SimTime::from_secs(self.cfg.tree.first_refresh), Ev::Refresh { source: idx });
                }
            }
        }
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adj
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn groups(&self) -> &[GroupSpec] {
        &self.groups
    }

    pub fn counters(&self) -> &RunCounters {
        &self.counters
    }

    pub fn agent(&self, node: NodeId, group: GroupId) -> Option<&ClusterAgent> {
        self.nodes[node.index()].agents.get(&group)
    }

    /// Upstream neighbor toward `source` recorded by the last MCAST-REQ.
    pub fn reverse_hop(&self, node: NodeId, source: NodeId, group: GroupId) -> Option<NodeId> {
        self.nodes[node.index()].reverse.get(&(source, group)).map(|e| e.upstream)
    }

    /// Number of (node, flow) reverse-path entries.
    pub fn reverse_entries(&self, source: NodeId, group: GroupId) -> usize {
        self.nodes.iter().filter(|s| s.reverse.contains_key(&(source, group))).count()
    }

    pub fn forwarding_children(&self, node: NodeId, source: NodeId, group: GroupId) -> Option<&BTreeSet<NodeId>> {
        self.nodes[node.index()].forwarding.get(&(source, group)).map(|f| &f.children)
    }

    /// Executes every event scheduled at or before `until` (capped at the
    /// configured end of the run).
    pub fn run_until(&mut self, until: SimTime) {
        let until = until.min(self.end);
        while let Some(t) = self.queue.peek_time() {
            if t > until {
                break;
            }
            let (now, ev) = self.queue.pop().expect("peeked");
            self.handle(now, ev);
        }
    }

    pub fn run(mut self) -> RunOutcome {
        self.run_until(self.end);
        self.finish()
    }

    pub fn finish(self) -> RunOutcome {
        RunOutcome {
            metrics: RunMetrics::from_counters(&self.counters),
            counters: self.counters,
            trace: self.trace,
            convergence: self.convergence,
        }
    }

    /// Cluster-structure problems for group `g`; empty once the group has
    /// settled.
    pub fn cluster_violations(&self, group: GroupId) -> Vec<String> {
        let mut out = Vec::new();
        let k = self.cfg.cluster.k_hops;
        let mut leaders = Vec::new();
        for &(g, m) in &self.members {
            if g != group {
                continue;
            }
            let Some(agent) = self.agent(m, g) else { continue };
            match agent.role() {
                Role::Leader => leaders.push(m),
                Role::Member => match agent.current_leader() {
                    Some(l) if self.agent(l.id, g).map(|a| a.role()) == Some(Role::Leader) => {}
                    Some(l) => out.push(format!("member {m} follows {} which is not a leader", l.id)),
                    None => out.push(format!("member {m} has no leader")),
                },
                r => out.push(format!("node {m} is still {r:?}")),
            }
        }
        for (i, &a) in leaders.iter().enumerate() {
            for &b in &leaders[i + 1..] {
                if self.adj.hop_distance(a, b).is_some_and(|d| d <= k) {
                    out.push(format!("leaders {a} and {b} are within {k} hops"));
                }
            }
        }
        out
    }

    fn record(&mut self, r: TraceRecord) {
        if let Some(t) = &mut self.trace {
            t.push(r);
        }
    }

    fn is_live_member(&self, node: NodeId, group: GroupId) -> bool {
        let st = &self.nodes[node.index()];
        match self.cfg.protocol {
            Protocol::Aamrp => st.agents.get(&group).is_some_and(|a| a.role().is_participant()),
            _ => st.joined.contains(&group),
        }
    }

    fn is_leader(&self, node: NodeId, group: GroupId) -> bool {
        self.cfg.protocol == Protocol::Aamrp
            && self.nodes[node.index()].agents.get(&group).is_some_and(|a| a.role() == Role::Leader)
    }

    fn conn(&self, node: NodeId) -> u32 {
        connectivity(node, &self.adj, self.cfg.cluster.k_hops)
    }

    fn handle(&mut self, now: SimTime, ev: Ev) {
        match ev {
            Ev::Mobility => self.on_mobility(now),
            Ev::Join { node, group } => self.on_join(now, node, group),
            Ev::Timer { node, group, kind, token } => {
                let conn = self.conn(node);
                let t = now.as_secs();
                self.with_agent(now, node, group, |a| a.on_timer(kind, token, t, conn));
            }
            Ev::Refresh { source } => self.on_refresh(now, source),
            Ev::Traffic { source } => self.on_traffic(now, source),
            Ev::Transmit(frame) => self.transmit(now, *frame),
            Ev::Deliver(f) => self.deliver(now, *f),
        }
    }

    fn on_mobility(&mut self, now: SimTime) {
        let dt = self.cfg.world.tick;
        for m in &mut self.mobility {
            *m = advance_mobility(*m, &self.cfg.world, dt, &mut self.rng_mobility);
        }
        self.positions = self.mobility.iter().map(|m| m.current).collect();
        self.adj = Adjacency::from_positions(&self.positions, self.cfg.world.radio_range);
        self.queue.schedule(now + SimTime::from_secs(dt), Ev::Mobility);
    }

    fn on_join(&mut self, now: SimTime, node: NodeId, group: GroupId) {
        if self.cfg.protocol == Protocol::Aamrp {
            let conn = self.conn(node);
            let t = now.as_secs();
            self.with_agent(now, node, group, |a| a.start_join(t, conn));
        } else {
            self.nodes[node.index()].joined.insert(group);
        }
    }

    /// Runs `f` on the agent and carries out the resulting actions.
    fn with_agent(
        &mut self,
        now: SimTime,
        node: NodeId,
        group: GroupId,
        f: impl FnOnce(&mut ClusterAgent) -> Vec<Action>,
    ) {
        let Some(agent) = self.nodes[node.index()].agents.get_mut(&group) else { return };
        let before = agent.role();
        let actions = f(agent);
        let after = agent.role();
        for a in actions {
            match a {
                Action::Broadcast(msg) => {
                    self.nodes[node.index()].seen_ctrl.insert(ctrl_key(&msg));
                    self.send(now, Frame { sender: node, link_dest: None, payload: Payload::Control(msg) }, false);
                }
                Action::Unicast(msg) => self.route_member(now, node, msg),
                Action::ArmTimer { kind, delay, token } => {
                    self.queue
                        .schedule(now + SimTime::from_secs(delay), Ev::Timer { node, group, kind, token });
                }
            }
        }
        if before != Role::Leader && after == Role::Leader {
            // A fresh leader joins the tree of every flow it already has a reverse path for.
            let flows: Vec<FlowKey> =
                self.nodes[node.index()].reverse.keys().filter(|(_, g)| *g == group).copied().collect();
            for (s, g) in flows {
                self.send_rep(now, node, s, g);
            }
        }
    }

    fn on_refresh(&mut self, now: SimTime, idx: usize) {
        let n = self.cfg.world.n_nodes;
        let (s, g) = (self.sources[idx].node, self.sources[idx].group);
        let dests: Vec<NodeId> = std::mem::take(&mut self.sources[idx].replied).into_iter().collect();
        self.sources[idx].round += 1;
        let round = self.sources[idx].round;
        let hint = if dests.is_empty() { BTreeMap::new() } else { self.ant_hint(idx, &dests) };

        let st = &mut self.nodes[s.index()];
        st.req_round.insert((s, g), (round, now));
        if st.forwarding.get(&(s, g)).is_some_and(|f| f.round + 1 < round) {
            st.forwarding.remove(&(s, g));
        }
        let msg = ProtocolMessage {
            kind: MessageKind::McastReq,
            origin: s,
            dest: None,
            group: g,
            hop_count: 0,
            connectivity: 0,
            ttl_hops: n as u32,
            seq: round,
        };
        st.seen_ctrl.insert(ctrl_key(&msg));
        self.send(now, Frame { sender: s, link_dest: None, payload: Payload::Req { msg, hint: Arc::new(hint) } }, false);

        let next = now + SimTime::from_secs(self.cfg.tree.refresh_period);
        if next <= self.end {
            self.queue.schedule(next, Ev::Refresh { source: idx });
        }
    }

    /// Parents of the ant-built tree from the source to `dests` over the
    /// current snapshot.
    fn ant_hint(&mut self, idx: usize, dests: &[NodeId]) -> BTreeMap<NodeId, NodeId> {
        let latency = self.cfg.transport.per_hop_latency;
        let g = match self.cfg.tree.cost {
            CostMetric::Hop => WeightedGraph::from_adjacency(&self.adj, latency),
            CostMetric::Euclidean => WeightedGraph::from_adjacency_euclidean(&self.adj, &self.positions, latency),
        };
        let src = &mut self.sources[idx];
        let mut tau = match (self.cfg.tree.persist_pheromone, src.pheromone.take()) {
            (true, Some(mut t)) => {
                t.extend_to(&g);
                t
            }
            _ => PheromoneTable::new(&g, self.ants.tau0, self.ants.tau_min),
        };
        let built = construct_tree_with(&g, src.node, dests, &self.ants, &mut self.rng_ants, &mut tau, None);
        if self.cfg.tree.persist_pheromone {
            src.pheromone = Some(tau);
        }
        match built {
            Ok(c) => {
                if self.cfg.convergence {
                    let (round, node, group) = (src.round, src.node, src.group);
                    self.convergence.extend(c.convergence.iter().map(|&(iteration, cost)| ConvergenceRow {
                        refresh: round,
                        source: node,
                        group,
                        iteration,
                        cost,
                    }));
                }
                c.tree.parents()
            }
            Err(e) => {
                log::debug!("tree construction at {} failed: {e}", src.node);
                BTreeMap::new()
            }
        }
    }

    fn on_traffic(&mut self, now: SimTime, idx: usize) {
        let (s, g) = (self.sources[idx].node, self.sources[idx].group);
        self.sources[idx].next_seq += 1;
        let seq = self.sources[idx].next_seq;
        let expected = self
            .members
            .range((g, NodeId(0))..=(g, NodeId(usize::MAX)))
            .filter(|&&(_, m)| m != s && self.is_live_member(m, g))
            .count() as u64;
        self.counters.data_packets_sent_by_sources += 1;
        self.counters.expected_receipts += expected;
        self.record(TraceRecord::Send { time: now, source: s, expected, group: g, seq });

        let pkt = DataPacket { source: s, group: g, seq, created_at: now };
        if self.cfg.protocol == Protocol::Flooding {
            self.nodes[s.index()].relayed.insert(pkt.key());
            let mode = DataMode::Flood { relay: false };
            self.send(now, Frame { sender: s, link_dest: None, payload: Payload::Data { pkt, mode } }, false);
        } else {
            self.handle_first(now, s, pkt);
        }

        let next = now + SimTime::from_secs(1.0 / self.cfg.traffic.rate);
        if next <= self.end {
            self.queue.schedule(next, Ev::Traffic { source: idx });
        }
    }

    // ---- transport ----

    fn send(&mut self, now: SimTime, frame: Frame, relay: bool) {
        let jitter = self.cfg.transport.relay_jitter;
        if relay && jitter > 0.0 {
            let d = self.rng_jitter.gen_range(0.0..jitter);
            self.queue.schedule(now + SimTime::from_secs(d), Ev::Transmit(Box::new(frame)));
        } else {
            self.transmit(now, frame);
        }
    }

    fn frame_bytes(&self, p: &Payload) -> usize {
        let t = &self.cfg.transport;
        match p {
            Payload::Control(_) => t.control_bytes,
            Payload::Req { hint, .. } => t.control_bytes + 8 * hint.len(),
            Payload::Data { mode, .. } => {
                let extra = match mode {
                    DataMode::Tree { children } => 4 * children.len(),
                    _ => 0,
                };
                t.data_header_bytes + self.cfg.traffic.payload_bytes + extra
            }
        }
    }

    fn transmit(&mut self, now: SimTime, frame: Frame) {
        let tx = match &frame.payload {
            Payload::Control(m) | Payload::Req { msg: m, .. } => Some(TraceRecord::Tx {
                time: now,
                kind: TraceKind::Control(m.kind),
                origin: m.origin,
                dest: m.dest,
                group: m.group,
                hop_count: m.hop_count,
                ttl: m.ttl_hops,
                seq: m.seq,
            }),
            Payload::Data { pkt, mode: DataMode::Flood { relay: true } } => Some(TraceRecord::Tx {
                time: now,
                kind: TraceKind::Flood,
                origin: pkt.source,
                dest: None,
                group: pkt.group,
                hop_count: 0,
                ttl: 0,
                seq: pkt.seq,
            }),
            Payload::Data { .. } => None,
        };
        if let Some(r) = tx {
            self.counters.routing_packets_sent += 1;
            self.record(r);
        }
        let id = self.next_frame;
        self.next_frame += 1;
        let receivers = self.adj.neighbors(frame.sender).to_vec();
        let (start, end) = match self.cfg.transport.channel {
            ChannelModel::Ideal => (now, now + SimTime::from_secs(self.cfg.transport.per_hop_latency)),
            ChannelModel::Shared => {
                let air = self.cfg.transport.airtime(self.frame_bytes(&frame.payload));
                self.channel.reserve(id, frame.sender, now, air, &self.adj)
            }
        };
        self.queue.schedule(end, Ev::Deliver(Box::new(InFlight { id, frame, receivers, start, end })));
    }

    fn deliver(&mut self, now: SimTime, f: InFlight) {
        let shared = self.cfg.transport.channel == ChannelModel::Shared;
        if shared {
            self.channel.prune(now);
        }
        let loss = self.cfg.transport.loss_probability;
        for &r in &f.receivers {
            if f.frame.link_dest.is_some_and(|d| d != r) {
                continue;
            }
            if shared && !self.channel.clean_reception(f.id, f.frame.sender, f.start, f.end, r, &self.adj) {
                continue;
            }
            if loss > 0.0 && self.rng_loss.gen::<f64>() < loss {
                continue;
            }
            self.receive(now, r, f.frame.sender, &f.frame.payload);
        }
    }

    fn receive(&mut self, now: SimTime, at: NodeId, from: NodeId, payload: &Payload) {
        match payload {
            Payload::Control(msg) => {
                self.count_control(now, at, msg);
                match msg.kind {
                    MessageKind::Join | MessageKind::Leader => self.on_flood(now, at, from, msg),
                    MessageKind::Member => self.on_member(now, at, from, msg),
                    MessageKind::McastRep => self.on_rep(now, at, from, msg),
                    MessageKind::McastReq => {}
                }
            }
            Payload::Req { msg, hint } => {
                self.count_control(now, at, msg);
                self.on_req(now, at, from, msg, hint);
            }
            Payload::Data { pkt, mode } => self.on_data(now, at, *pkt, mode),
        }
    }

    fn count_control(&mut self, now: SimTime, at: NodeId, msg: &ProtocolMessage) {
        self.counters.control_received(msg.kind);
        self.record(TraceRecord::Rx {
            time: now,
            receiver: at,
            kind: TraceKind::Control(msg.kind),
            origin: msg.origin,
            group: msg.group,
            seq: msg.seq,
        });
    }

    // ---- cluster control plane ----

    fn on_flood(&mut self, now: SimTime, at: NodeId, from: NodeId, msg: &ProtocolMessage) {
        let st = &mut self.nodes[at.index()];
        if !st.seen_ctrl.insert(ctrl_key(msg)) {
            return;
        }
        if msg.kind == MessageKind::Leader {
            st.toward_leader.insert((msg.group, msg.origin), from);
        }
        let t = now.as_secs();
        self.with_agent(now, at, msg.group, |a| a.on_message(msg, t));
        if let Some(next) = msg.relayed() {
            self.send(now, Frame { sender: at, link_dest: None, payload: Payload::Control(next) }, true);
        }
    }

    fn next_hop(&self, at: NodeId, table_hop: Option<NodeId>, dest: NodeId) -> Option<NodeId> {
        if self.adj.are_linked(at, dest) {
            return Some(dest);
        }
        table_hop.filter(|&h| self.adj.are_linked(at, h))
    }

    /// Sends or relays a MEMBER unicast one hop toward its leader.
    fn route_member(&mut self, now: SimTime, at: NodeId, msg: ProtocolMessage) {
        let Some(leader) = msg.dest else { return };
        let table = self.nodes[at.index()].toward_leader.get(&(msg.group, leader)).copied();
        if let Some(hop) = self.next_hop(at, table, leader) {
            self.send(now, Frame { sender: at, link_dest: Some(hop), payload: Payload::Control(msg) }, false);
        }
    }

    fn on_member(&mut self, now: SimTime, at: NodeId, from: NodeId, msg: &ProtocolMessage) {
        self.nodes[at.index()].toward_member.insert((msg.group, msg.origin), from);
        if msg.dest == Some(at) {
            let t = now.as_secs();
            self.with_agent(now, at, msg.group, |a| a.on_message(msg, t));
        } else if let Some(next) = msg.relayed() {
            self.route_member(now, at, next);
        }
    }

    // ---- tree control plane ----

    fn is_destination(&self, node: NodeId, group: GroupId) -> bool {
        match self.cfg.protocol {
            Protocol::Aamrp => self.is_leader(node, group),
            Protocol::SharedTree => self.is_live_member(node, group),
            Protocol::Flooding => false,
        }
    }

    fn on_req(
        &mut self,
        now: SimTime,
        at: NodeId,
        from: NodeId,
        msg: &ProtocolMessage,
        hint: &Arc<BTreeMap<NodeId, NodeId>>,
    ) {
        let flow = (msg.origin, msg.group);
        let round = msg.seq;
        let hinted = hint.get(&at).copied().filter(|&p| self.adj.are_linked(at, p));
        let st = &mut self.nodes[at.index()];
        if !st.seen_ctrl.insert(ctrl_key(msg)) {
            return;
        }
        st.req_round.insert(flow, (round, now));
        st.reverse.insert(flow, ReverseEntry { upstream: hinted.unwrap_or(from), round });
        if st.forwarding.get(&flow).is_some_and(|f| f.round + 1 < round) {
            st.forwarding.remove(&flow);
        }
        if let Some(next) = msg.relayed() {
            let payload = Payload::Req { msg: next, hint: Arc::clone(hint) };
            self.send(now, Frame { sender: at, link_dest: None, payload }, true);
        }
        if self.is_destination(at, msg.group) {
            self.send_rep(now, at, msg.origin, msg.group);
        }
    }

    /// Starts an MCAST-REP from tree destination `at` toward `source`.
    fn send_rep(&mut self, now: SimTime, at: NodeId, source: NodeId, group: GroupId) {
        let st = &self.nodes[at.index()];
        let Some(rev) = st.reverse.get(&(source, group)).copied() else { return };
        if st.rep_sent.get(&(source, group)) == Some(&rev.round) {
            return;
        }
        self.nodes[at.index()].rep_sent.insert((source, group), rev.round);
        let msg = ProtocolMessage {
            kind: MessageKind::McastRep,
            origin: at,
            dest: Some(source),
            group,
            hop_count: 0,
            connectivity: 0,
            ttl_hops: self.cfg.world.n_nodes as u32,
            seq: rev.round,
        };
        self.forward_rep(now, at, rev, msg);
    }

    fn forward_rep(&mut self, now: SimTime, at: NodeId, rev: ReverseEntry, msg: ProtocolMessage) {
        if rev.round != msg.seq || !self.adj.are_linked(at, rev.upstream) {
            log::trace!("MCAST_REP from {} dropped at {at}", msg.origin);
            return;
        }
        self.send(now, Frame { sender: at, link_dest: Some(rev.upstream), payload: Payload::Control(msg) }, false);
    }

    fn on_rep(&mut self, now: SimTime, at: NodeId, from: NodeId, msg: &ProtocolMessage) {
        let Some(source) = msg.dest else { return };
        let flow = (source, msg.group);
        let round = msg.seq;
        let st = &mut self.nodes[at.index()];
        match st.forwarding.get_mut(&flow) {
            Some(f) if f.round == round => {
                f.children.insert(from);
            }
            Some(f) if f.round > round => return,
            old => {
                let previous = old.filter(|f| f.round + 1 == round).map(|f| std::mem::take(&mut f.children));
                let entry = ForwardEntry { children: BTreeSet::from([from]), round, previous: previous.unwrap_or_default() };
                st.forwarding.insert(flow, entry);
            }
        }
        if at == source {
            if let Some(&idx) = self.source_index.get(&flow) {
                if self.sources[idx].round == round {
                    self.sources[idx].replied.insert(msg.origin);
                }
            }
            return;
        }
        let Some(rev) = st.reverse.get(&flow).copied() else { return };
        if let Some(next) = msg.relayed() {
            self.forward_rep(now, at, rev, next);
        }
    }

    // ---- data plane ----

    /// Children this node should currently forward `flow` to.
    fn usable_children(&self, now: SimTime, at: NodeId, flow: FlowKey) -> Option<Vec<NodeId>> {
        let st = &self.nodes[at.index()];
        let f = st.forwarding.get(&flow)?;
        let (round, seen_at) = st.req_round.get(&flow).copied().unwrap_or((f.round, now));
        let in_grace = (now - seen_at).as_secs() <= ROUND_GRACE;
        let mut children = if f.round >= round || (f.round + 1 == round && in_grace) {
            f.children.clone()
        } else {
            BTreeSet::new()
        };
        if f.round == round && in_grace {
            children.extend(&f.previous);
        }
        (!children.is_empty()).then(|| children.into_iter().collect())
    }

    fn on_data(&mut self, now: SimTime, at: NodeId, pkt: DataPacket, mode: &DataMode) {
        let key = pkt.key();
        if let DataMode::Flood { relay: true } = mode {
            self.counters.control_packets_received += 1;
            self.counters.flood_relays_received += 1;
            self.record(TraceRecord::Rx {
                time: now,
                receiver: at,
                kind: TraceKind::Flood,
                origin: pkt.source,
                group: pkt.group,
                seq: pkt.seq,
            });
        }
        if at != pkt.source && self.is_live_member(at, pkt.group) {
            self.counters.data_packets_received_total += 1;
            self.record(TraceRecord::Data { time: now, source: pkt.source, holder: at, group: pkt.group, seq: pkt.seq });
            if self.nodes[at.index()].accepted.insert(key) {
                self.counters.unique_receipt((now - pkt.created_at).as_secs());
            }
        }
        match mode {
            DataMode::Tree { children } => {
                if children.contains(&at) || self.is_leader(at, pkt.group) {
                    self.handle_first(now, at, pkt);
                }
            }
            DataMode::Scoped { ttl } => {
                if self.is_leader(at, pkt.group) {
                    self.handle_first(now, at, pkt);
                }
                if *ttl > 1 && self.nodes[at.index()].relayed.insert(key) {
                    let mode = DataMode::Scoped { ttl: ttl - 1 };
                    self.send(now, Frame { sender: at, link_dest: None, payload: Payload::Data { pkt, mode } }, true);
                }
            }
            DataMode::Unicast { dest } => {
                if *dest != at {
                    self.unicast_data(now, at, *dest, pkt);
                }
            }
            DataMode::Flood { .. } => {
                if self.nodes[at.index()].relayed.insert(key) {
                    let mode = DataMode::Flood { relay: true };
                    self.send(now, Frame { sender: at, link_dest: None, payload: Payload::Data { pkt, mode } }, true);
                }
            }
        }
    }

    /// Tree forwarding and leader-local delivery, once per packet and node.
    fn handle_first(&mut self, now: SimTime, at: NodeId, pkt: DataPacket) {
        if !self.nodes[at.index()].handled.insert(pkt.key()) {
            return;
        }
        if let Some(children) = self.usable_children(now, at, (pkt.source, pkt.group)) {
            let relay = at != pkt.source;
            let mode = DataMode::Tree { children };
            self.send(now, Frame { sender: at, link_dest: None, payload: Payload::Data { pkt, mode } }, relay);
        }
        if self.is_leader(at, pkt.group) {
            self.local_delivery(now, at, pkt);
        }
    }

    fn local_delivery(&mut self, now: SimTime, leader: NodeId, pkt: DataPacket) {
        let agent = &self.nodes[leader.index()].agents[&pkt.group];
        match local_scope(agent.broadcast_range(), agent.furthest_member_hops()) {
            LocalScope::None => {}
            LocalScope::Broadcast { ttl } => {
                self.nodes[leader.index()].relayed.insert(pkt.key());
                let mode = DataMode::Scoped { ttl };
                self.send(now, Frame { sender: leader, link_dest: None, payload: Payload::Data { pkt, mode } }, false);
            }
            LocalScope::Unicast => {
                let members: Vec<NodeId> = agent.cmt().map(|e| e.member).collect();
                for m in members {
                    self.unicast_data(now, leader, m, pkt);
                }
            }
        }
    }

    fn unicast_data(&mut self, now: SimTime, at: NodeId, dest: NodeId, pkt: DataPacket) {
        let table = self.nodes[at.index()].toward_member.get(&(pkt.group, dest)).copied();
        if let Some(hop) = self.next_hop(at, table, dest) {
            let mode = DataMode::Unicast { dest };
            self.send(now, Frame { sender: at, link_dest: Some(hop), payload: Payload::Data { pkt, mode } }, false);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LocalScope {
    None,
    Broadcast { ttl: u32 },
    Unicast,
}

/// How a leader hands a packet to its cluster: nothing without members, a
/// scoped broadcast no deeper than the furthest member for range 2, and
/// per-member unicast for range 1.
fn local_scope(range: u32, furthest: u32) -> LocalScope {
    if furthest == 0 {
        LocalScope::None
    } else if range >= 2 {
        LocalScope::Broadcast { ttl: range.min(furthest) }
    } else {
        LocalScope::Unicast
    }
}

fn ctrl_key(m: &ProtocolMessage) -> (usize, NodeId, GroupId, u64) {
    (m.kind.index(), m.origin, m.group, m.seq)
}

/// Random sources and receivers for every group; sources never receive.
fn draw_groups(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Vec<GroupSpec> {
    let n = cfg.world.n_nodes;
    let n_src = cfg.traffic.sources;
    let n_mem = cfg.traffic.members_per_group(n);
    (0..cfg.n_groups)
        .map(|g| {
            let mut ids: Vec<NodeId> = (0..n).map(NodeId).collect();
            ids.shuffle(rng);
            let mut sources = ids[..n_src].to_vec();
            let mut members = ids[n_src..n_src + n_mem].to_vec();
            sources.sort();
            members.sort();
            GroupSpec { id: GroupId(g as u32), sources, members }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_ttl_clamps_to_furthest_member() {
        assert_eq!(local_scope(2, 1), LocalScope::Broadcast { ttl: 1 });
        assert_eq!(local_scope(2, 3), LocalScope::Broadcast { ttl: 2 });
        assert_eq!(local_scope(1, 2), LocalScope::Unicast);
        assert_eq!(local_scope(2, 0), LocalScope::None);
    }
}
