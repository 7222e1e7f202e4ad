//! Upper-tier multicast tree from the source to the cluster leaders.

mod colony;
mod graph;
mod ksp;

pub use colony::{
    apply_delay_penalty, build_path_sets, construct_tree, construct_tree_with, deposit,
    deposit_amount, eta, evaporate, next_node_probability, tree_cost, AntDecision, AntParams,
    Construction, DepositPolicy, MulticastTree, PathSet, PheromoneTable,
};
pub use graph::{Edge, Path, WeightedGraph};
pub use ksp::k_shortest_paths;
