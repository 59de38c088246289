//! Placement of event-processing rules on resource-constrained edge nodes.
//!
//! The numeric stack (tensors, tape, networks, training) is generic over
//! [`scalar::Scalar`]; the aliases below fix the two supported precisions.
//! Models are trained and benchmarked in `f32`; `f64` is used for
//! reference computations such as gradient checks.

pub mod autodiff;
pub mod bench;
pub mod domain;
pub mod env;
pub mod heuristics;
pub mod model;
pub mod oracle;
pub mod scalar;
pub mod seed;
pub mod solution;
pub mod trainer;

pub use domain::{GeneratorConfig, ProblemInstance, ResourceVector};
pub use env::{EnvState, RewardKind};
pub use oracle::Objective;
pub use solution::{Assignment, Kpis, Solution};

pub type Tensor32 = autodiff::Tensor<f32>;
pub type Tensor64 = autodiff::Tensor<f64>;
pub type ParamStore32 = autodiff::ParamStore<f32>;
pub type ParamStore64 = autodiff::ParamStore<f64>;
pub type Actor32 = model::Actor<f32>;
pub type Actor64 = model::Actor<f64>;
pub type Critic32 = model::Critic<f32>;
pub type Critic64 = model::Critic<f64>;
pub type Observation32 = env::Observation<f32>;
pub type TrainOutput32 = trainer::TrainOutput<f32>;
