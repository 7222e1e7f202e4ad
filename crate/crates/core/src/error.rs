use thiserror::Error;

use crate::topology::NodeId;

/// A configuration value failed validation.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field}: {reason}")]
pub struct ConfigError {
    /// Dotted scenario-file path of the offending field, e.g. `ants.rho`.
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { field: field.into(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("destination {0} is unreachable from the source")]
    DestinationUnreachable(NodeId),
    #[error("destination set is empty")]
    EmptyDestinationSet,
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("ant decision at node {0} has no positive weight")]
    DegenerateDecision(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("no cluster leader available")]
    NoLeaderAvailable,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{} invalid field(s): {}", .0.len(), join(.0))]
    Invalid(Vec<ConfigError>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(errors: &[ConfigError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
