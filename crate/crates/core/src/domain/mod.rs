//! Problem data model: resource vectors, nodes, rules, instances and the
//! instance generator.

mod generator;
mod instance;
mod resource;

pub use generator::{generate_instance, GeneratorConfig, InstanceGenerator};
pub use instance::{InstanceFile, NodeSpec, ProblemInstance, RuleSpec, REJECT_NODE};
pub use resource::{
    compute_critical, critical_slack, fits, global_critical, ResourceVector, FIT_TOLERANCE,
    NUM_RESOURCES,
};

#[derive(Debug, thiserror::Error)]
pub enum DomainError {
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error("resource vector {0:?} has a negative or non-finite component")]
    InvalidResource([f64; NUM_RESOURCES]),
    #[error("usage {used} exceeds capacity {capacity}")]
    OverCapacity {
        capacity: ResourceVector,
        used: ResourceVector,
    },
    #[error("critical resource requested over an empty node set")]
    EmptyNodeSet,
    #[error("an instance needs at least one real node")]
    NoNodes,
    #[error("malformed instance file: {0}")]
    Json(#[from] serde_json::Error),
}
