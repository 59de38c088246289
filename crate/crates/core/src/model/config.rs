use serde::{Deserialize, Serialize};

use super::ModelError;

/// Network hyperparameters shared by the actor and the critic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub num_heads: usize,
    pub actor_stacks: usize,
    pub critic_stacks: usize,
    pub actor_ffn_dim: usize,
    pub critic_ffn_dim: usize,
    pub critic_head_dim: usize,
    pub logit_clip: f64,
    pub node_feature_dim: usize,
    pub rule_feature_dim: usize,
    /// Re-run the encoder after every placement. When false the encoding of
    /// the initial state is reused for the whole episode and only the
    /// pointer mask evolves.
    pub reencode_every_step: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 128,
            num_heads: 8,
            actor_stacks: 1,
            critic_stacks: 3,
            actor_ffn_dim: 128,
            critic_ffn_dim: 512,
            critic_head_dim: 128,
            logit_clip: 10.0,
            node_feature_dim: 3,
            rule_feature_dim: 3,
            reencode_every_step: true,
        }
    }
}

impl ModelConfig {
    /// Reduced widths for single-core CPU training runs. Stack counts, the
    /// logit clip and the wiring are unchanged.
    pub fn desk() -> Self {
        ModelConfig {
            embed_dim: 32,
            num_heads: 4,
            actor_ffn_dim: 64,
            critic_ffn_dim: 64,
            critic_head_dim: 32,
            ..ModelConfig::default()
        }
    }

    pub fn with_node_features(mut self, dim: usize) -> Self {
        self.node_feature_dim = dim;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.embed_dim == 0 || self.num_heads == 0 {
            return fail("embed_dim and num_heads must be positive");
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            return fail("embed_dim must be divisible by num_heads");
        }
        if self.actor_stacks == 0 || self.critic_stacks == 0 {
            return fail("stack counts must be positive");
        }
        if self.actor_ffn_dim == 0 || self.critic_ffn_dim == 0 || self.critic_head_dim == 0 {
            return fail("layer widths must be positive");
        }
        if !(self.logit_clip > 0.0 && self.logit_clip.is_finite()) {
            return fail("logit_clip must be a positive finite number");
        }
        if !(3..=4).contains(&self.node_feature_dim) || self.rule_feature_dim != 3 {
            return fail("node features must be 3 or 4 wide and rule features 3 wide");
        }
        Ok(())
    }
}
