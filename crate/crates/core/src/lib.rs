//! Ant-based adaptive multicast routing for mobile ad hoc networks: the
//! protocol library and a deterministic discrete-event simulator for it.

pub mod ant;
pub mod cluster;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod topology;

pub use cluster::{GroupId, MessageKind, Role};
pub use error::{ClusterError, ConfigError, ScenarioError, TraceError, TreeError};
pub use metrics::{RunCounters, RunMetrics};
pub use sim::{run, Protocol, RunConfig, RunOutcome, Simulation};
pub use topology::{NodeId, Position, WorldConfig};
