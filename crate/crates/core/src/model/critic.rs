use std::path::Path;

use crate::autodiff::{ParamStore, Tape, Var};
use crate::env::{EnvState, Observation};
use crate::scalar::Scalar;

use super::layers::{Builder, Encoder, EncoderShape, Linear};
use super::{install, read_params, save_params, ModelConfig, ModelError, Role};

/// State-value network: its own encoder, a mean over the unmasked rows and a
/// three-layer ReLU head down to one scalar.
#[derive(Clone, Debug)]
pub struct Critic<T: Scalar> {
    config: ModelConfig,
    store: ParamStore<T>,
    encoder: Encoder,
    head: [Linear; 3],
}

impl<T: Scalar> Critic<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut b = Builder { store: &mut store, seed };
        let (d, h) = (config.embed_dim, config.critic_head_dim);
        let encoder = Encoder::new(
            &mut b,
            "critic.enc",
            &EncoderShape {
                node_dim: config.node_feature_dim,
                rule_dim: config.rule_feature_dim,
                embed: d,
                heads: config.num_heads,
                ffn: config.critic_ffn_dim,
                stacks: config.critic_stacks,
            },
        );
        let head = [
            Linear::new(&mut b, "critic.head.0", d, h, true),
            Linear::new(&mut b, "critic.head.1", h, h, true),
            Linear::new(&mut b, "critic.head.2", h, 1, true),
        ];
        Ok(Critic {
            config,
            store,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    /// `1×1` value estimate.
    pub fn forward<'p>(&'p self, tape: &mut Tape<'p, T>, obs: &Observation<T>) -> Result<Var, ModelError> {
        if obs.node_dim != self.config.node_feature_dim {
            return Err(ModelError::FeatureDim {
                expected: self.config.node_feature_dim,
                found: obs.node_dim,
            });
        }
        let enc = self.encoder.forward(tape, &self.store, obs)?;
        let visible: Vec<usize> = obs
            .combined_mask()
            .iter()
            .enumerate()
            .filter_map(|(i, m)| m.then_some(i))
            .collect();
        let pooled = tape.gather_rows(enc, &visible)?;
        let pooled = tape.mean_rows(pooled);
        let x = self.head[0].forward(tape, &self.store, pooled)?;
        let x = tape.relu(x);
        let x = self.head[1].forward(tape, &self.store, x)?;
        let x = tape.relu(x);
        Ok(self.head[2].forward(tape, &self.store, x)?)
    }

    pub fn value(&self, state: &EnvState<'_>) -> Result<T, ModelError> {
        let obs = state.observation::<T>();
        let mut tape = Tape::new();
        let v = self.forward(&mut tape, &obs)?;
        Ok(tape.scalar(v))
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        save_params(path, Role::Critic, &self.config, &self.store)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let (config, loaded) = read_params::<T>(path, Role::Critic)?;
        let mut critic = Critic::new(config, 0)?;
        install(&mut critic.store, &loaded)?;
        Ok(critic)
    }
}
