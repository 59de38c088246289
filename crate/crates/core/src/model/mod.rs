//! Attention-based actor (pointer network) and critic.

mod actor;
mod config;
mod critic;
pub mod layers;
mod select;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use actor::Actor;
pub use config::ModelConfig;
pub use critic::Critic;
pub use select::{actor_select, SelectMode, Selection};

use crate::autodiff::{checkpoint, AutodiffError, CheckpointError, ParamStore};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint metadata: {0}")]
    Meta(String),
    #[error("observation has {found} node features, model expects {expected}")]
    FeatureDim { expected: usize, found: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Actor,
    Critic,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    role: Role,
    config: ModelConfig,
}

pub(crate) fn save_params<T: Scalar>(path: &Path, role: Role, config: &ModelConfig, store: &ParamStore<T>) -> Result<(), ModelError> {
    let meta = serde_json::to_string(&Meta {
        role,
        config: config.clone(),
    })
    .map_err(|e| ModelError::Meta(e.to_string()))?;
    std::fs::write(path, checkpoint::encode(&meta, store)).map_err(CheckpointError::Io)?;
    Ok(())
}

/// Reads a checkpoint and checks the role; the caller rebuilds the network
/// from the returned config and copies the tensors in by name.
pub(crate) fn read_params<T: Scalar>(path: &Path, role: Role) -> Result<(ModelConfig, ParamStore<T>), ModelError> {
    let bytes = std::fs::read(path).map_err(CheckpointError::Io)?;
    let (meta, store) = checkpoint::decode::<T>(&bytes)?;
    let meta: Meta = serde_json::from_str(&meta).map_err(|e| ModelError::Meta(e.to_string()))?;
    if meta.role != role {
        return Err(ModelError::Meta(format!("expected a {role:?} checkpoint, found {:?}", meta.role)));
    }
    meta.config.validate()?;
    Ok((meta.config, store))
}

/// Copies every tensor of `loaded` into `target`, requiring identical names
/// and shapes in identical order.
pub(crate) fn install<T: Scalar>(target: &mut ParamStore<T>, loaded: &ParamStore<T>) -> Result<(), ModelError> {
    if target.len() != loaded.len() {
        return Err(CheckpointError::Mismatch(format!("{} tensors, model has {}", loaded.len(), target.len())).into());
    }
    for ((name, dst), (lname, src)) in target.iter_mut().zip(loaded.iter()) {
        if name != lname || dst.shape() != src.shape() {
            return Err(CheckpointError::Mismatch(format!("{lname} {:?} vs {name} {:?}", src.shape(), dst.shape())).into());
        }
        dst.data_mut().copy_from_slice(src.data());
    }
    Ok(())
}
