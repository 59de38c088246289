//! Reverse-mode automatic differentiation over dense 2-D values, plus the
//! optimizer, initializer and checkpoint container used for training.

pub mod checkpoint;
mod init;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::CheckpointError;
pub use init::xavier_uniform_init;
pub use optim::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use params::{GradBuffer, ParamId, ParamStore};
pub use tape::{softmax_row, Gradients, Tape, Var, MASK_SENTINEL};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("optimizer: {0}")]
    Optimizer(String),
}

#[cfg(test)]
mod tests;
