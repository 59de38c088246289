use std::path::Path;

use crate::autodiff::{AutodiffError, ParamId, ParamStore, Tape, Var};
use crate::env::{EnvState, Observation};
use crate::scalar::Scalar;

use super::layers::{Builder, Encoder, EncoderShape, MultiHeadAttention};
use super::{install, read_params, save_params, ModelConfig, ModelError, Role};

/// Encoder plus pointer decoder. For rule `i` the decoder attends from the
/// rule's encoding over the whole encoder output, then scores every node
/// position `j` as `C·tanh(vᵀ tanh(e_j W1 + d_i W2))` with infeasible
/// positions filled by the mask sentinel.
#[derive(Clone, Debug)]
pub struct Actor<T: Scalar> {
    config: ModelConfig,
    store: ParamStore<T>,
    encoder: Encoder,
    glimpse: MultiHeadAttention,
    w1: ParamId,
    w2: ParamId,
    v: ParamId,
}

impl<T: Scalar> Actor<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut b = Builder { store: &mut store, seed };
        let d = config.embed_dim;
        let encoder = Encoder::new(
            &mut b,
            "actor.enc",
            &EncoderShape {
                node_dim: config.node_feature_dim,
                rule_dim: config.rule_feature_dim,
                embed: d,
                heads: config.num_heads,
                ffn: config.actor_ffn_dim,
                stacks: config.actor_stacks,
            },
        );
        let glimpse = MultiHeadAttention::new(&mut b, "actor.dec.mha", d, config.num_heads);
        let w1 = b.weight("actor.dec.w1", d, d);
        let w2 = b.weight("actor.dec.w2", d, d);
        let v = b.weight("actor.dec.v", d, 1);
        Ok(Actor {
            config,
            store,
            encoder,
            glimpse,
            w1,
            w2,
            v,
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

    fn check(&self, obs: &Observation<T>) -> Result<(), ModelError> {
        if obs.node_dim != self.config.node_feature_dim {
            return Err(ModelError::FeatureDim {
                expected: self.config.node_feature_dim,
                found: obs.node_dim,
            });
        }
        Ok(())
    }

    pub fn encode<'p>(&'p self, tape: &mut Tape<'p, T>, obs: &Observation<T>) -> Result<Var, ModelError> {
        self.check(obs)?;
        Ok(self.encoder.forward(tape, &self.store, obs)?)
    }

    /// Masked, clipped `1 × num_nodes` logits for `rule` given an encoding
    /// from [`Actor::encode`] and the observation it was computed from.
    pub fn decode<'p>(
        &'p self,
        tape: &mut Tape<'p, T>,
        encoding: Var,
        obs: &Observation<T>,
        rule: usize,
        pointer_mask: &[bool],
    ) -> Result<Var, AutodiffError> {
        let n = obs.num_nodes;
        let query = tape.narrow_rows(encoding, n + rule, 1)?;
        let d = self.glimpse.forward(tape, &self.store, query, encoding, encoding, &obs.combined_mask())?;
        let nodes = tape.narrow_rows(encoding, 0, n)?;
        let (w1, w2, v) = (tape.param(&self.store, self.w1), tape.param(&self.store, self.w2), tape.param(&self.store, self.v));
        let e = tape.matmul(nodes, w1)?;
        let q = tape.matmul(d, w2)?;
        let h = tape.add_row(e, q)?;
        let h = tape.tanh(h);
        let u = tape.matmul(h, v)?;
        let u = tape.transpose(u);
        let u = tape.tanh(u);
        let u = tape.scale(u, T::of(self.config.logit_clip));
        tape.mask_fill(u, pointer_mask)
    }

    /// Logits for placing `rule` in the current state.
    pub fn logits(&self, state: &EnvState<'_>, rule: usize) -> Result<Vec<T>, ModelError> {
        let obs = state.observation::<T>();
        let mut tape = Tape::new();
        let enc = self.encode(&mut tape, &obs)?;
        let out = self.decode(&mut tape, enc, &obs, rule, &state.pointer_mask(rule))?;
        Ok(tape.value(out).to_vec())
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        save_params(path, Role::Actor, &self.config, &self.store)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let (config, loaded) = read_params::<T>(path, Role::Actor)?;
        let mut actor = Actor::new(config, 0)?;
        install(&mut actor.store, &loaded)?;
        Ok(actor)
    }
}
