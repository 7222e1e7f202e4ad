use std::collections::BTreeSet;

use aamrp::ant::{
    construct_tree, construct_tree_with, deposit, evaporate, k_shortest_paths, next_node_probability, AntParams,
    PheromoneTable, WeightedGraph,
};
use aamrp::cluster::{broadcast_range_counts, member_update_period, select_best_leader, GmtEntry};
use aamrp::oracle::{brute_k_shortest, random_graph, reachability_within, DenseGraph};
use aamrp::sim::trace::TraceRecord;
use aamrp::topology::{k_hop_set, neighbors, Adjacency};
use aamrp::{GroupId, NodeId, Position, Role};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn positions() -> impl Strategy<Value = Vec<Position>> {
    prop::collection::vec((0.0..600.0f64, 0.0..600.0f64), 1..20)
        .prop_map(|v| v.into_iter().map(|(x, y)| Position::new(x, y)).collect())
}

fn graph(seed: u64, max_n: usize) -> DenseGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 + (seed as usize % (max_n - 1));
    random_graph(&mut rng, n, 0.5)
}

fn relabel(g: &DenseGraph, perm: &[usize]) -> DenseGraph {
    let n = g.n();
    let mut w = vec![vec![None; n]; n];
    for i in 0..n {
        for j in 0..n {
            w[perm[i]][perm[j]] = g.w[i][j];
        }
    }
    DenseGraph { w }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn links_are_symmetric(pos in positions(), range in 50.0..400.0f64) {
        let adj = Adjacency::from_positions(&pos, range);
        for i in 0..pos.len() {
            let direct = neighbors(NodeId(i), &pos, range);
            prop_assert_eq!(adj.neighbors(NodeId(i)), direct.as_slice());
            for &j in adj.neighbors(NodeId(i)) {
                prop_assert!(adj.are_linked(j, NodeId(i)));
                prop_assert!(j != NodeId(i));
            }
        }
    }

    #[test]
    fn k_hop_sets_match_matrix_reachability(pos in positions(), k in 0u32..5) {
        let adj = Adjacency::from_positions(&pos, 250.0);
        let r = reachability_within(&adj, k);
        for i in 0..pos.len() {
            let got: BTreeSet<usize> = k_hop_set(NodeId(i), &adj, k).into_iter().map(NodeId::index).collect();
            let want: BTreeSet<usize> = (0..pos.len()).filter(|&j| j != i && r[i][j]).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn k_hop_sets_grow_with_k(pos in positions(), k in 0u32..4) {
        let adj = Adjacency::from_positions(&pos, 250.0);
        for i in 0..pos.len() {
            let a: BTreeSet<NodeId> = k_hop_set(NodeId(i), &adj, k).into_iter().collect();
            let b: BTreeSet<NodeId> = k_hop_set(NodeId(i), &adj, k + 1).into_iter().collect();
            prop_assert!(a.is_subset(&b));
        }
    }

    #[test]
    fn ksp_matches_enumeration(seed in any::<u64>(), k in 1usize..=3) {
        let g = graph(seed, 8);
        let wg = g.to_weighted();
        for t in 1..g.n() {
            let want = brute_k_shortest(&g, 0, t, k);
            let got: Vec<(f64, Vec<usize>)> = k_shortest_paths(&wg, NodeId(0), NodeId(t), k)
                .map(|ps| ps.into_iter().map(|p| (p.cost, p.nodes.iter().map(|v| v.index()).collect())).collect())
                .unwrap_or_default();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn ksp_costs_survive_relabeling(seed in any::<u64>(), k in 1usize..=3, shift in 1usize..8) {
        let g = graph(seed, 8);
        let n = g.n();
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let h = relabel(&g, &perm);
        let (wg, wh) = (g.to_weighted(), h.to_weighted());
        for t in 1..n {
            let costs = |w: &WeightedGraph, s: usize, t: usize| -> Vec<f64> {
                k_shortest_paths(w, NodeId(s), NodeId(t), k)
                    .map(|ps| ps.into_iter().map(|p| p.cost).collect())
                    .unwrap_or_default()
            };
            prop_assert_eq!(costs(&wg, 0, t), costs(&wh, perm[0], perm[t]));
            // every returned path maps onto an equally cheap simple path of the original
            if let Ok(ps) = k_shortest_paths(&wh, NodeId(perm[0]), NodeId(perm[t]), k) {
                for p in ps {
                    let back: Vec<usize> = p.nodes.iter().map(|v| perm.iter().position(|&x| x == v.index()).unwrap()).collect();
                    prop_assert_eq!(g.weigh(&back).map(|w| w.0), Some(p.cost));
                }
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one_over_allowed(
        taus in prop::collection::vec(0.01..50.0f64, 2..6),
        alpha in 0.0..3.0f64,
        beta in 0.0..3.0f64,
    ) {
        let n = taus.len() + 1;
        let mut g = WeightedGraph::new(n);
        for j in 1..n {
            g.add_edge(NodeId(0), NodeId(j), j as f64, 0.0);
        }
        let mut tau = PheromoneTable::new(&g, 1.0, 0.01);
        for (j, &t) in taus.iter().enumerate() {
            tau.set(NodeId(0), NodeId(j + 1), t);
        }
        let params = AntParams { alpha, beta, ..AntParams::default() };
        let allowed: Vec<NodeId> = (1..n).step_by(2).map(NodeId).collect();
        let p: Vec<f64> = (0..n)
            .map(|j| next_node_probability(NodeId(0), NodeId(j), &tau, &g, &params, &allowed).unwrap())
            .collect();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        for (j, &pj) in p.iter().enumerate() {
            if !allowed.contains(&NodeId(j)) {
                prop_assert_eq!(pj, 0.0);
            }
        }
    }

    #[test]
    fn evaporation_follows_closed_form(tau0 in 0.5..20.0f64, rho in 0.01..0.99f64, n in 0u32..40) {
        let mut g = WeightedGraph::new(2);
        g.add_edge(NodeId(0), NodeId(1), 1.0, 0.0);
        let floor = 1e-9;
        let mut tau = PheromoneTable::new(&g, tau0, floor);
        for _ in 0..n {
            evaporate(&mut tau, rho);
        }
        let closed = tau0 * (1.0 - rho).powi(n as i32);
        prop_assume!(closed > floor);
        prop_assert!((tau.get(NodeId(0), NodeId(1)) - closed).abs() <= 1e-12);
    }

    #[test]
    fn deposit_and_evaporation_commute_off_the_deposit_path(seed in any::<u64>(), rho in 0.01..0.99f64, q in 0.1..5.0f64) {
        let g = graph(seed, 8);
        let wg = g.to_weighted();
        let Some((_, nodes)) = (1..g.n()).find_map(|t| brute_k_shortest(&g, 0, t, 1).pop()) else {
            return Ok(());
        };
        let path = wg.path(nodes.iter().map(|&v| NodeId(v)).collect()).unwrap();
        let support: BTreeSet<(NodeId, NodeId)> = path.edges().collect();
        let mut a = PheromoneTable::new(&wg, 1.0, 1e-9);
        deposit(&mut a, &wg, &path, q);
        evaporate(&mut a, rho);
        let mut b = PheromoneTable::new(&wg, 1.0, 1e-9);
        evaporate(&mut b, rho);
        let before = b.clone();
        deposit(&mut b, &wg, &path, q);
        for ((&e, &va), (_, &vb)) in a.iter().zip(b.iter()) {
            if support.contains(&e) {
                // on the support the orders differ by exactly rho times the deposit
                let delta = vb - before.get(e.0, e.1);
                prop_assert!((vb - va - rho * delta).abs() <= 1e-12);
            } else {
                prop_assert_eq!(va, vb);
            }
        }
    }

    #[test]
    fn pheromone_stays_within_bounds(seed in any::<u64>(), iters in 1usize..60) {
        let g = graph(seed, 8);
        let wg = g.to_weighted();
        let dests: Vec<NodeId> = (1..g.n()).map(NodeId).collect();
        let params = AntParams { max_iterations: iters, time_limit: None, ..AntParams::default() };
        let mut tau = PheromoneTable::new(&wg, params.tau0, params.tau_min);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let res = construct_tree_with(&wg, NodeId(0), &dests, &params, &mut rng, &mut tau, None).unwrap();
        let upper = params.tau0 + (iters * params.n_ants) as f64 * params.q;
        for v in tau.values() {
            prop_assert!(v >= params.tau_min && v <= upper);
        }
        // best-so-far never gets worse
        prop_assert!(res.convergence.windows(2).all(|w| w[1].1 <= w[0].1));
    }

    #[test]
    fn tree_construction_is_deterministic(seed in any::<u64>()) {
        let g = graph(seed, 8).to_weighted();
        let dests: Vec<NodeId> = (1..g.node_count()).map(NodeId).collect();
        let params = AntParams { max_iterations: 20, time_limit: None, ..AntParams::default() };
        let a = construct_tree(&g, NodeId(0), &dests, &params, &mut ChaCha8Rng::seed_from_u64(seed));
        let b = construct_tree(&g, NodeId(0), &dests, &params, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn leader_choice_ignores_candidate_order(
        cands in prop::collection::vec((0u32..4, 0u32..6), 1..8),
        rot in 0usize..8,
    ) {
        let entries: Vec<GmtEntry> = cands
            .iter()
            .enumerate()
            .map(|(i, &(hops, conn))| GmtEntry {
                member: NodeId(i),
                group: GroupId(0),
                hop_count: hops,
                role_seen: Role::Leader,
                connectivity: conn,
                last_heard: 0.0,
            })
            .collect();
        let mut shuffled = entries.clone();
        shuffled.rotate_left(rot % entries.len());
        shuffled.reverse();
        let best = select_best_leader(&entries).unwrap();
        prop_assert_eq!(best, select_best_leader(&shuffled).unwrap());
        let min_hops = cands.iter().map(|c| c.0).min().unwrap();
        prop_assert_eq!(cands[best.index()].0, min_hops);
    }

    #[test]
    fn member_period_shrinks_with_distance(d in 1u32..20, base in 0.5..10.0f64) {
        prop_assert!(member_update_period(d + 1, base, 0.01) <= member_update_period(d, base, 0.01));
        prop_assert!(member_update_period(d, base, 0.01) >= 0.01);
    }

    #[test]
    fn range_is_one_or_two(old in 0usize..50, new in 0usize..50, t in 0u32..50) {
        let r = broadcast_range_counts(old, new, t);
        prop_assert_eq!(r == 2, old + new > t as usize);
        prop_assert!(r == 1 || r == 2);
    }

    #[test]
    fn trace_lines_round_trip(t in 0u64..10_000_000_000, a in 0usize..100, b in 0usize..100, g in 0u32..4, s in 0u64..1000, e in 0u64..50) {
        let time = aamrp::sim::SimTime(t);
        let recs = [
            TraceRecord::Send { time, source: NodeId(a), expected: e, group: GroupId(g), seq: s },
            TraceRecord::Data { time, source: NodeId(a), holder: NodeId(b), group: GroupId(g), seq: s },
        ];
        for r in recs {
            prop_assert_eq!(TraceRecord::parse(&r.to_string(), 1).unwrap(), r);
        }
    }
}
