use std::collections::BTreeSet;

use aamrp::cluster::GroupId;
use aamrp::metrics::RunMetrics;
use aamrp::sim::trace::{render, replay};
use aamrp::sim::{GroupSpec, SimTime};
use aamrp::{MessageKind, NodeId, Position, Protocol, Role, RunConfig, Simulation};

const G: GroupId = GroupId(0);

fn ids(v: &[usize]) -> Vec<NodeId> {
    v.iter().map(|&i| NodeId(i)).collect()
}

/// Static network with fixed placement and a single group.
fn fixed(points: &[(f64, f64)], source: usize, members: &[usize], protocol: Protocol) -> RunConfig {
    let mut cfg = RunConfig { protocol, ..RunConfig::default() };
    cfg.world.n_nodes = points.len();
    cfg.positions = Some(points.iter().map(|&(x, y)| Position::new(x, y)).collect());
    cfg.groups = Some(vec![GroupSpec { id: G, sources: ids(&[source]), members: ids(members) }]);
    cfg
}

fn chain(n: usize, spacing: f64) -> Vec<(f64, f64)> {
    (0..n).map(|i| (i as f64 * spacing, 300.0)).collect()
}

fn metrics(cfg: &RunConfig, seed: u64) -> RunMetrics {
    aamrp::run(cfg, seed).expect("valid config").metrics
}

#[test]
fn two_static_nodes_in_range_deliver_everything() {
    for p in Protocol::ALL {
        let m = metrics(&fixed(&[(0.0, 0.0), (100.0, 0.0)], 0, &[1], p), 1);
        assert_eq!(m.pdf, Some(100.0), "{p}");
        // one hop at 2 ms
        assert!((m.avg_delay.unwrap() - 0.002).abs() < 1e-12, "{p}");
    }
}

#[test]
fn three_hops_take_six_milliseconds() {
    let m = metrics(&fixed(&chain(4, 200.0), 0, &[3], Protocol::Aamrp), 1);
    assert_eq!(m.pdf, Some(100.0));
    assert!((m.avg_delay.unwrap() - 0.006).abs() < 1e-12);
}

#[test]
fn zero_sources_leave_pdf_undefined_but_control_flows() {
    let mut cfg = RunConfig::default();
    cfg.traffic.sources = 0;
    let m = metrics(&cfg, 3);
    assert_eq!(m.pdf, None);
    assert_eq!(m.avg_delay, None);
    assert!(m.overhead > 0.0);
}

#[test]
fn same_seed_gives_byte_identical_traces() {
    let cfg = RunConfig { trace: true, ..RunConfig::default() };
    let a = aamrp::run(&cfg, 7).unwrap();
    let b = aamrp::run(&cfg, 7).unwrap();
    assert_eq!(render(a.trace.as_ref().unwrap()), render(b.trace.as_ref().unwrap()));
    assert_eq!(a.metrics, b.metrics);
    let c = aamrp::run(&cfg, 8).unwrap();
    assert_ne!(render(a.trace.as_ref().unwrap()), render(c.trace.as_ref().unwrap()));
}

#[test]
fn trace_replay_reproduces_the_counters() {
    for p in Protocol::ALL {
        let cfg = RunConfig { protocol: p, trace: true, ..RunConfig::default() };
        let out = aamrp::run(&cfg, 4).unwrap();
        assert_eq!(replay(out.trace.as_ref().unwrap()), out.counters, "{p}");
    }
}

/// 10 nodes on a 5 x 2 grid with 140 m columns and 200 m rows: connected,
/// with several equal-length routes between far corners.
fn grid() -> Vec<(f64, f64)> {
    (0..10).map(|i| ((i % 5) as f64 * 140.0, 200.0 + (i / 5) as f64 * 200.0)).collect()
}

#[test]
fn request_flood_leaves_a_reverse_entry_on_every_other_node() {
    let cfg = fixed(&grid(), 0, &[9], Protocol::Aamrp);
    let mut sim = Simulation::new(&cfg, 1).unwrap();
    sim.run_until(SimTime::from_secs(3.5));
    assert_eq!(sim.reverse_entries(NodeId(0), G), 9);
    assert_eq!(sim.reverse_hop(NodeId(0), NodeId(0), G), None);
    let dist = sim.adjacency().hop_distances(NodeId(0));
    for v in 1..10 {
        let up = sim.reverse_hop(NodeId(v), NodeId(0), G).expect("entry present");
        assert!(sim.adjacency().are_linked(NodeId(v), up));
        // first arrival over equal per-hop latency is a shortest path
        assert_eq!(dist[up.index()].unwrap() + 1, dist[v].unwrap(), "node {v}");
    }
}

#[test]
fn partitioned_network_only_covers_the_source_side() {
    let pts = [(0.0, 0.0), (200.0, 0.0), (600.0, 600.0), (600.0, 400.0)];
    let cfg = fixed(&pts, 0, &[1, 3], Protocol::Aamrp);
    let mut sim = Simulation::new(&cfg, 1).unwrap();
    sim.run_until(SimTime::from_secs(3.5));
    assert_eq!(sim.reverse_entries(NodeId(0), G), 1);
    assert_eq!(sim.reverse_hop(NodeId(1), NodeId(0), G), Some(NodeId(0)));
    assert_eq!(sim.reverse_hop(NodeId(3), NodeId(0), G), None);
}

#[test]
fn reply_creates_one_forwarder_per_intermediate_hop() {
    let cfg = fixed(&chain(4, 200.0), 0, &[3], Protocol::Aamrp);
    let mut sim = Simulation::new(&cfg, 1).unwrap();
    sim.run_until(SimTime::from_secs(3.5));
    let set = |v: &[usize]| ids(v).into_iter().collect::<BTreeSet<_>>();
    assert_eq!(sim.forwarding_children(NodeId(0), NodeId(0), G), Some(&set(&[1])));
    assert_eq!(sim.forwarding_children(NodeId(1), NodeId(0), G), Some(&set(&[2])));
    assert_eq!(sim.forwarding_children(NodeId(2), NodeId(0), G), Some(&set(&[3])));
    assert_eq!(sim.forwarding_children(NodeId(3), NodeId(0), G), None);
}

#[test]
fn shared_prefix_forwarder_holds_both_branches() {
    // 0 - 1 - 2 fork to 3 and 4, which are two hops apart
    let pts = [(0.0, 300.0), (200.0, 300.0), (400.0, 300.0), (550.0, 150.0), (550.0, 450.0)];
    let mut cfg = fixed(&pts, 0, &[3, 4], Protocol::Aamrp);
    cfg.world.k_hops = 1;
    cfg.cluster.k_hops = 1;
    let mut sim = Simulation::new(&cfg, 1).unwrap();
    sim.run_until(SimTime::from_secs(3.5));
    for m in [3, 4] {
        assert_eq!(sim.agent(NodeId(m), G).unwrap().role(), Role::Leader);
    }
    let set = |v: &[usize]| ids(v).into_iter().collect::<BTreeSet<_>>();
    assert_eq!(sim.forwarding_children(NodeId(2), NodeId(0), G), Some(&set(&[3, 4])));
    assert_eq!(sim.forwarding_children(NodeId(1), NodeId(0), G), Some(&set(&[2])));
    let out = sim.run();
    assert_eq!(out.metrics.pdf, Some(100.0));
}

#[test]
fn duplicate_receipts_count_once() {
    // diamond: 0 reaches 3 through both 1 and 2
    let pts = [(0.0, 300.0), (200.0, 150.0), (200.0, 450.0), (400.0, 300.0)];
    let out = aamrp::run(&fixed(&pts, 0, &[3], Protocol::Flooding), 1).unwrap();
    assert!(out.counters.data_packets_received_total > out.counters.data_receipts_unique);
    assert_eq!(out.metrics.pdf, Some(100.0));
}

#[test]
fn source_leader_serves_its_cluster_directly() {
    let pts = [(300.0, 300.0), (450.0, 300.0), (150.0, 300.0)];
    let cfg = fixed(&pts, 0, &[0, 1, 2], Protocol::Aamrp);
    let mut sim = Simulation::new(&cfg, 1).unwrap();
    sim.run_until(SimTime::from_secs(3.9));
    assert!(sim.cluster_violations(G).is_empty(), "{:?}", sim.cluster_violations(G));
    let out = sim.run();
    assert_eq!(out.metrics.pdf, Some(100.0));
    assert!((out.metrics.avg_delay.unwrap() - 0.002).abs() < 1e-12);
}

#[test]
fn flooding_delivers_everything_at_the_highest_overhead() {
    let pts = grid();
    let mut over = Vec::new();
    for p in Protocol::ALL {
        let m = metrics(&fixed(&pts, 0, &[4, 9], p), 2);
        if p == Protocol::Flooding {
            assert_eq!(m.pdf, Some(100.0));
        }
        over.push((p, m.overhead));
    }
    let flood = over.iter().find(|(p, _)| *p == Protocol::Flooding).unwrap().1;
    assert!(over.iter().all(|&(p, o)| p == Protocol::Flooding || o < flood), "{over:?}");
}

#[test]
fn single_member_shared_tree_matches_aamrp_data_plane() {
    let pts = chain(4, 200.0);
    let a = aamrp::run(&fixed(&pts, 0, &[3], Protocol::Aamrp), 5).unwrap();
    let s = aamrp::run(&fixed(&pts, 0, &[3], Protocol::SharedTree), 5).unwrap();
    assert_eq!(a.metrics.pdf, s.metrics.pdf);
    assert_eq!(a.metrics.avg_delay, s.metrics.avg_delay);
    assert_eq!(a.counters.data_packets_sent_by_sources, s.counters.data_packets_sent_by_sources);
    assert_eq!(a.counters.data_packets_received_total, s.counters.data_packets_received_total);
    assert_eq!(a.counters.received_of(MessageKind::McastReq), s.counters.received_of(MessageKind::McastReq));
    assert_eq!(a.counters.received_of(MessageKind::McastRep), s.counters.received_of(MessageKind::McastRep));
}

#[test]
fn co_located_members_need_fewer_tree_messages_than_a_shared_tree() {
    // source three hops from a tight knot of 20 members
    let mut pts = vec![(0.0, 300.0), (200.0, 300.0), (400.0, 300.0)];
    pts.extend((0..20).map(|i| (560.0 + (i % 5) as f64 * 5.0, 280.0 + (i / 5) as f64 * 10.0)));
    let members: Vec<usize> = (3..23).collect();
    let tree_msgs = |p| {
        let out = aamrp::run(&fixed(&pts, 0, &members, p), 1).unwrap();
        assert_eq!(out.metrics.pdf, Some(100.0), "{p:?}");
        let c = out.counters;
        c.received_of(MessageKind::McastReq) + c.received_of(MessageKind::McastRep) + c.received_of(MessageKind::Member)
    };
    let a = tree_msgs(Protocol::Aamrp);
    let s = tree_msgs(Protocol::SharedTree);
    assert!(a < s, "aamrp {a} vs shared tree {s}");
}

#[test]
fn static_topologies_settle_into_valid_clusters() {
    for seed in 1..=5 {
        let mut cfg = RunConfig::default();
        cfg.world.max_speed = 0.0;
        cfg.world.min_speed = 0.0;
        let mut sim = Simulation::new(&cfg, seed).unwrap();
        sim.run_until(SimTime::from_secs(10.0));
        assert!(sim.cluster_violations(G).is_empty(), "seed {seed}: {:?}", sim.cluster_violations(G));
    }
}

#[test]
fn tree_refreshes_drop_nothing_on_a_static_network() {
    // two groups on 25 static nodes where a refresh reorders a shared branch
    let mut cfg = RunConfig::default();
    cfg.world.n_nodes = 25;
    cfg.world.max_speed = 0.0;
    cfg.world.min_speed = 0.0;
    cfg.n_groups = 2;
    cfg.traffic.start = 10.75;
    assert_eq!(metrics(&cfg, 37).pdf, Some(100.0));
}
