//! Per-node cluster membership state machine: discovery, leader election,
//! membership reports, adaptive broadcast range and leader loss handling.
//!
//! The agent is I/O free. Every input returns a list of [`Action`]s that the
//! caller turns into transmissions and timers. One agent exists per
//! (node, group) pair for nodes that participate in the group.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{ClusterError, ConfigError};
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupId(pub u32);

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Joining,
    Leader,
    Member,
    NonMember,
}

impl Role {
    pub fn is_participant(self) -> bool {
        !matches!(self, Role::NonMember)
    }
}

/// Whether `from -> to` is an edge of the role transition graph.
pub fn is_allowed_transition(from: Role, to: Role) -> bool {
    use Role::*;
    matches!(
        (from, to),
        (NonMember, Joining)
            | (Joining, Leader)
            | (Joining, Member)
            | (Member, Joining)
            | (Member, Member)
            | (Member, NonMember)
            | (Leader, NonMember)
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    Join,
    Leader,
    Member,
    McastReq,
    McastRep,
}

impl MessageKind {
    pub const ALL: [MessageKind; 5] = [
        MessageKind::Join,
        MessageKind::Leader,
        MessageKind::Member,
        MessageKind::McastReq,
        MessageKind::McastRep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Join => "JOIN",
            MessageKind::Leader => "LEADER",
            MessageKind::Member => "MEMBER",
            MessageKind::McastReq => "MCAST_REQ",
            MessageKind::McastRep => "MCAST_REP",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A control message as it appears on the air.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub kind: MessageKind,
    pub origin: NodeId,
    /// Final destination of a unicast message; `None` for broadcasts.
    pub dest: Option<NodeId>,
    pub group: GroupId,
    /// Hops travelled so far; the originator sends 0.
    pub hop_count: u32,
    /// Sender connectivity, carried by JOIN and LEADER.
    pub connectivity: u32,
    pub ttl_hops: u32,
    pub seq: u64,
}

impl ProtocolMessage {
    /// Copy for the next relay hop, or `None` once the TTL is spent.
    pub fn relayed(&self) -> Option<ProtocolMessage> {
        let ttl = self.ttl_hops.checked_sub(1).filter(|&t| t > 0)?;
        Some(ProtocolMessage { ttl_hops: ttl, hop_count: self.hop_count + 1, ..self.clone() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmtEntry {
    pub member: NodeId,
    pub group: GroupId,
    pub hop_count: u32,
    pub role_seen: Role,
    pub connectivity: u32,
    pub last_heard: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmtEntry {
    pub member: NodeId,
    pub group: GroupId,
    pub distance_hops: u32,
    pub joined_at: f64,
    pub last_heard: f64,
    /// Joined since the previous LEADER beacon.
    pub is_new: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeConfig {
    pub threshold_t: u32,
    pub member_base_period: f64,
    pub leader_beacon_period: f64,
    pub join_timeout: f64,
}

impl Default for RangeConfig {
    fn default() -> Self {
        Self {
            threshold_t: 5,
            member_base_period: 4.0,
            leader_beacon_period: 2.0,
            join_timeout: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub k_hops: u32,
    pub range: RangeConfig,
    /// Consecutive missed periods before a leader or member is presumed gone.
    pub missed_beacons: u32,
    /// Lower bound for any periodic timer (the mobility tick).
    pub min_period: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { k_hops: 2, range: RangeConfig::default(), missed_beacons: 3, min_period: 0.1 }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k_hops < 1 {
            return Err(ConfigError::invalid("protocol.k_hops", "must be >= 1"));
        }
        if self.range.threshold_t < 1 {
            return Err(ConfigError::invalid("protocol.threshold_t", "must be > 0"));
        }
        for (field, v) in [
            ("protocol.member_base_period", self.range.member_base_period),
            ("protocol.leader_beacon_period", self.range.leader_beacon_period),
            ("protocol.join_timeout", self.range.join_timeout),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::invalid(field, "must be > 0"));
            }
        }
        if self.missed_beacons < 1 {
            return Err(ConfigError::invalid("protocol.missed_beacons", "must be >= 1"));
        }
        Ok(())
    }
}

/// Adaptive local broadcast radius from old/new member counts.
pub fn broadcast_range_counts(n_old: usize, n_new: usize, threshold_t: u32) -> u32 {
    if n_old + n_new > threshold_t as usize {
        2
    } else {
        1
    }
}

pub fn broadcast_range<'a>(cmt: impl IntoIterator<Item = &'a CmtEntry>, threshold_t: u32) -> u32 {
    let (mut old, mut new) = (0, 0);
    for e in cmt {
        if e.is_new {
            new += 1;
        } else {
            old += 1;
        }
    }
    broadcast_range_counts(old, new, threshold_t)
}

/// MEMBER report interval: `base / distance`, floored at `min_period`.
pub fn member_update_period(distance_hops: u32, base_period: f64, min_period: f64) -> f64 {
    let d = distance_hops.max(1) as f64;
    (base_period / d).max(min_period)
}

/// Best leader: fewest hops, then highest connectivity, then highest id.
pub fn select_best_leader(candidates: &[GmtEntry]) -> Result<NodeId, ClusterError> {
    candidates
        .iter()
        .min_by(|a, b| {
            a.hop_count
                .cmp(&b.hop_count)
                .then(b.connectivity.cmp(&a.connectivity))
                .then(b.member.cmp(&a.member))
        })
        .map(|e| e.member)
        .ok_or(ClusterError::NoLeaderAvailable)
}

/// A joining node wins the election when its (connectivity, id) pair beats
/// that of every joining competitor.
pub fn wins_election<'a>(
    me: NodeId,
    my_connectivity: u32,
    competitors: impl IntoIterator<Item = &'a GmtEntry>,
) -> bool {
    competitors
        .into_iter()
        .filter(|e| e.member != me)
        .all(|e| (my_connectivity, me) > (e.connectivity, e.member))
}

/// Whether a member should move to an overheard leader.
pub fn should_switch(current_leader_hops: u32, overheard_hops: u32) -> bool {
    overheard_hops < current_leader_hops
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimerKind {
    JoinTimeout,
    LeaderBeacon,
    MemberReport,
}

impl TimerKind {
    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Flood `msg` within `msg.ttl_hops`.
    Broadcast(ProtocolMessage),
    /// Unicast `msg` toward `msg.dest`.
    Unicast(ProtocolMessage),
    ArmTimer { kind: TimerKind, delay: f64, token: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentLeader {
    pub id: NodeId,
    pub hops: u32,
    pub last_beacon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoleChange {
    pub at: f64,
    pub from: Role,
    pub to: Role,
}

#[derive(Debug, Clone)]
pub struct ClusterAgent {
    id: NodeId,
    group: GroupId,
    cfg: ClusterConfig,
    role: Role,
    gmt: BTreeMap<NodeId, GmtEntry>,
    cmt: BTreeMap<NodeId, CmtEntry>,
    leader: Option<CurrentLeader>,
    connectivity: u32,
    /// Elections lost since entering discovery.
    lost_elections: u32,
    next_seq: u64,
    tokens: [u64; 3],
    warnings: u32,
    history: Vec<RoleChange>,
}

impl ClusterAgent {
    pub fn new(id: NodeId, group: GroupId, cfg: ClusterConfig) -> Self {
        Self {
            id,
            group,
            cfg,
            role: Role::NonMember,
            gmt: BTreeMap::new(),
            cmt: BTreeMap::new(),
            leader: None,
            connectivity: 0,
            lost_elections: 0,
            next_seq: 0,
            tokens: [0; 3],
            warnings: 0,
            history: Vec::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn gmt(&self) -> impl Iterator<Item = &GmtEntry> {
        self.gmt.values()
    }

    pub fn cmt(&self) -> impl Iterator<Item = &CmtEntry> {
        self.cmt.values()
    }

    pub fn current_leader(&self) -> Option<CurrentLeader> {
        self.leader
    }

    pub fn warnings(&self) -> u32 {
        self.warnings
    }

    pub fn history(&self) -> &[RoleChange] {
        &self.history
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.cfg
    }

    /// Current local broadcast radius; meaningful for leaders only.
    pub fn broadcast_range(&self) -> u32 {
        broadcast_range(self.cmt.values(), self.cfg.range.threshold_t)
    }

    /// Hop distance of the furthest cluster member, 0 with an empty table.
    pub fn furthest_member_hops(&self) -> u32 {
        self.cmt.values().map(|e| e.distance_hops).max().unwrap_or(0)
    }

    fn set_role(&mut self, to: Role, now: f64) {
        debug_assert!(
            is_allowed_transition(self.role, to),
            "illegal transition {:?} -> {:?}",
            self.role,
            to
        );
        self.history.push(RoleChange { at: now, from: self.role, to });
        self.role = to;
    }

    fn next_seq(&mut self) -> u64 {
        self.next_seq += 1;
        self.next_seq
    }

    fn arm(&mut self, kind: TimerKind, delay: f64) -> Action {
        let slot = kind.slot();
        self.tokens[slot] += 1;
        Action::ArmTimer { kind, delay, token: self.tokens[slot] }
    }

    fn cancel_timers(&mut self) {
        for t in &mut self.tokens {
            *t += 1;
        }
    }

    fn flood(&mut self, kind: MessageKind) -> Action {
        let seq = self.next_seq();
        Action::Broadcast(ProtocolMessage {
            kind,
            origin: self.id,
            dest: None,
            group: self.group,
            hop_count: 0,
            connectivity: self.connectivity,
            ttl_hops: self.cfg.k_hops,
            seq,
        })
    }

    fn member_message(&mut self, leader: NodeId) -> Action {
        let seq = self.next_seq();
        Action::Unicast(ProtocolMessage {
            kind: MessageKind::Member,
            origin: self.id,
            dest: Some(leader),
            group: self.group,
            hop_count: 0,
            connectivity: self.connectivity,
            ttl_hops: self.cfg.k_hops.max(1) * 2,
            seq,
        })
    }

    fn report_period(&self, hops: u32) -> f64 {
        member_update_period(hops, self.cfg.range.member_base_period, self.cfg.min_period)
    }

    fn leader_timeout(&self) -> f64 {
        self.cfg.missed_beacons as f64 * self.cfg.range.leader_beacon_period
    }

    /// Enters discovery: floods JOIN within k hops and arms the join timer.
    pub fn start_join(&mut self, now: f64, connectivity: u32) -> Vec<Action> {
        if self.role != Role::NonMember {
            self.warnings += 1;
            return Vec::new();
        }
        self.enter_discovery(now, connectivity)
    }

    fn enter_discovery(&mut self, now: f64, connectivity: u32) -> Vec<Action> {
        self.set_role(Role::Joining, now);
        self.leader = None;
        self.cmt.clear();
        self.lost_elections = 0;
        self.connectivity = connectivity;
        let join = self.flood(MessageKind::Join);
        let timer = self.arm(TimerKind::JoinTimeout, self.cfg.range.join_timeout);
        vec![join, timer]
    }

    /// Handles a received control message. `now` is the reception time.
    pub fn on_message(&mut self, msg: &ProtocolMessage, now: f64) -> Vec<Action> {
        if msg.group != self.group || msg.origin == self.id || !self.role.is_participant() {
            return Vec::new();
        }
        let hops = msg.hop_count + 1;
        match msg.kind {
            MessageKind::Join => {
                self.learn(msg, hops, Role::Joining, now);
                Vec::new()
            }
            MessageKind::Leader => {
                self.learn(msg, hops, Role::Leader, now);
                // a node that already lost an election takes the first leader that invites it
                if self.role == Role::Joining && self.lost_elections > 0 && hops <= self.cfg.k_hops {
                    return self.join_leader(msg.origin, hops, now);
                }
                if self.role != Role::Member {
                    return Vec::new();
                }
                match self.leader {
                    Some(cur) if cur.id == msg.origin => {
                        self.leader = Some(CurrentLeader { hops, last_beacon: now, ..cur });
                        Vec::new()
                    }
                    _ => self.maybe_switch_leader(msg.origin, hops, now),
                }
            }
            MessageKind::Member => {
                if self.role == Role::Leader && msg.dest == Some(self.id) {
                    self.record_member(msg.origin, hops, now);
                }
                Vec::new()
            }
            MessageKind::McastReq | MessageKind::McastRep => Vec::new(),
        }
    }

    fn learn(&mut self, msg: &ProtocolMessage, hops: u32, role_seen: Role, now: f64) {
        if hops > self.cfg.k_hops {
            return;
        }
        self.gmt.insert(
            msg.origin,
            GmtEntry {
                member: msg.origin,
                group: self.group,
                hop_count: hops,
                role_seen,
                connectivity: msg.connectivity,
                last_heard: now,
            },
        );
    }

    fn record_member(&mut self, member: NodeId, hops: u32, now: f64) {
        let group = self.group;
        self.cmt
            .entry(member)
            .and_modify(|e| {
                e.distance_hops = hops;
                e.last_heard = now;
            })
            .or_insert(CmtEntry {
                member,
                group,
                distance_hops: hops,
                joined_at: now,
                last_heard: now,
                is_new: true,
            });
    }

    /// Re-homes to an overheard leader when it is strictly closer than the
    /// current one.
    pub fn maybe_switch_leader(&mut self, candidate: NodeId, hops: u32, now: f64) -> Vec<Action> {
        let Some(cur) = self.leader else { return Vec::new() };
        // a leader whose last beacon is overdue is taken to be out of k-hop reach
        let overdue = now - cur.last_beacon > 1.5 * self.cfg.range.leader_beacon_period;
        let cur_hops = if overdue { self.cfg.k_hops + 1 } else { cur.hops };
        if self.role != Role::Member || !should_switch(cur_hops, hops) {
            return Vec::new();
        }
        self.join_leader(candidate, hops, now)
    }

    fn join_leader(&mut self, leader: NodeId, hops: u32, now: f64) -> Vec<Action> {
        self.set_role(Role::Member, now);
        self.leader = Some(CurrentLeader { id: leader, hops, last_beacon: now });
        let report = self.member_message(leader);
        let timer = self.arm(TimerKind::MemberReport, self.report_period(hops));
        vec![report, timer]
    }

    fn fresh_leaders(&self, now: f64, exclude: Option<NodeId>) -> Vec<GmtEntry> {
        let horizon = self.leader_timeout();
        self.gmt
            .values()
            .filter(|e| e.role_seen == Role::Leader && Some(e.member) != exclude)
            .filter(|e| now - e.last_heard <= horizon)
            .cloned()
            .collect()
    }

    /// Timer expiry. Stale tokens are ignored. `connectivity` is the node's
    /// current k-hop neighborhood size.
    pub fn on_timer(&mut self, kind: TimerKind, token: u64, now: f64, connectivity: u32) -> Vec<Action> {
        if self.tokens[kind.slot()] != token {
            return Vec::new();
        }
        match (kind, self.role) {
            (TimerKind::JoinTimeout, Role::Joining) => self.decide(now, connectivity),
            (TimerKind::LeaderBeacon, Role::Leader) => {
                self.connectivity = connectivity;
                self.beacon(now)
            }
            (TimerKind::MemberReport, Role::Member) => {
                self.connectivity = connectivity;
                self.report(now)
            }
            _ => Vec::new(),
        }
    }

    fn decide(&mut self, now: f64, connectivity: u32) -> Vec<Action> {
        self.connectivity = connectivity;
        let leaders = self.fresh_leaders(now, None);
        if let Ok(best) = select_best_leader(&leaders) {
            let hops = self.gmt[&best].hop_count;
            return self.join_leader(best, hops, now);
        }
        let window = self.cfg.range.join_timeout;
        let competitors: Vec<&GmtEntry> = self
            .gmt
            .values()
            .filter(|e| e.role_seen == Role::Joining && now - e.last_heard <= window)
            .collect();
        if wins_election(self.id, connectivity, competitors) {
            self.set_role(Role::Leader, now);
            self.cmt.clear();
            let leader = self.flood(MessageKind::Leader);
            let timer = self.arm(TimerKind::LeaderBeacon, self.cfg.range.leader_beacon_period);
            vec![leader, timer]
        } else {
            // Stay in discovery and re-announce so competitors see fresh state.
            self.lost_elections += 1;
            let join = self.flood(MessageKind::Join);
            let timer = self.arm(TimerKind::JoinTimeout, self.cfg.range.join_timeout);
            vec![join, timer]
        }
    }

    fn beacon(&mut self, now: f64) -> Vec<Action> {
        let missed = self.cfg.missed_beacons as f64;
        let (base, min) = (self.cfg.range.member_base_period, self.cfg.min_period);
        self.cmt.retain(|_, e| {
            now - e.last_heard <= missed * member_update_period(e.distance_hops, base, min)
        });
        for e in self.cmt.values_mut() {
            e.is_new = false;
        }
        let leader = self.flood(MessageKind::Leader);
        let timer = self.arm(TimerKind::LeaderBeacon, self.cfg.range.leader_beacon_period);
        vec![leader, timer]
    }

    fn report(&mut self, now: f64) -> Vec<Action> {
        let Some(cur) = self.leader else { return Vec::new() };
        if now - cur.last_beacon > self.leader_timeout() {
            return self.leader_lost(cur.id, now);
        }
        let report = self.member_message(cur.id);
        let timer = self.arm(TimerKind::MemberReport, self.report_period(cur.hops));
        vec![report, timer]
    }

    fn leader_lost(&mut self, old: NodeId, now: f64) -> Vec<Action> {
        self.gmt.remove(&old);
        let leaders = self.fresh_leaders(now, Some(old));
        match select_best_leader(&leaders) {
            Ok(best) => {
                let hops = self.gmt[&best].hop_count;
                self.join_leader(best, hops, now)
            }
            Err(ClusterError::NoLeaderAvailable) => {
                let conn = self.connectivity;
                self.enter_discovery(now, conn)
            }
        }
    }

    /// Leaves the group silently; members stop reporting, leaders stop
    /// beaconing.
    pub fn leave_group(&mut self, now: f64) {
        match self.role {
            Role::Member | Role::Leader => {
                self.set_role(Role::NonMember, now);
                self.cancel_timers();
                self.gmt.clear();
                self.cmt.clear();
                self.leader = None;
            }
            _ => self.warnings += 1,
        }
    }
}
