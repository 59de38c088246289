//! Advantage actor-critic training with entropy regularization.

mod loss;
mod rollout;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use loss::{actor_loss, critic_loss, critic_loss_value};
pub use rollout::{advantages_from, agent_solve, compute_advantages, rollout, Transition};

use crate::autodiff::{adam_step, clip_global_norm, AdamState, AutodiffError, GradBuffer, Tape, Var};
use crate::domain::{DomainError, GeneratorConfig, InstanceGenerator};
use crate::env::{EnvError, EnvState, RewardConfig, RewardKind};
use crate::model::{actor_select, Actor, Critic, ModelConfig, ModelError, SelectMode};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_from};

const POOL_KEY: u64 = 0x504f_4f4c;
const ACTOR_KEY: u64 = 0x4143_5452;
const CRITIC_KEY: u64 = 0x4352_4954;
const ACTION_KEY: u64 = 0x4143_544e;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AdvantageMode {
    #[default]
    #[serde(alias = "td0")]
    Td0,
    #[serde(alias = "mc", alias = "monte_carlo")]
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub training_steps: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub entropy_coeff: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub grad_clip: f64,
    pub train_num_nodes: usize,
    pub train_num_rules: usize,
    pub advantage_mode: AdvantageMode,
    pub eval_seed_count: usize,
    /// Write checkpoints every this many steps into `out_dir` (0 disables).
    pub checkpoint_every: usize,
    pub out_dir: Option<PathBuf>,
    /// Record wall-clock milliseconds in the log. Off gives logs that are
    /// byte-identical across runs.
    pub log_wall_time: bool,
    pub rewards: RewardConfig,
    pub model: ModelConfig,
    pub generator: GeneratorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            training_steps: 100_000,
            batch_size: 128,
            gamma: 0.99,
            entropy_coeff: 0.01,
            lr_actor: 1e-4,
            lr_critic: 5e-4,
            grad_clip: 1.0,
            train_num_nodes: 10,
            train_num_rules: 20,
            advantage_mode: AdvantageMode::Td0,
            eval_seed_count: 3,
            checkpoint_every: 0,
            out_dir: None,
            log_wall_time: true,
            rewards: RewardConfig::default(),
            model: ModelConfig::default(),
            generator: GeneratorConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Scaled-down run for a desktop CPU: 3,000 steps of 32 episodes on
    /// 4-node, 8-rule problems with the reduced network.
    pub fn desk() -> Self {
        TrainConfig {
            training_steps: 3000,
            batch_size: 32,
            train_num_nodes: 4,
            train_num_rules: 8,
            model: ModelConfig::desk(),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.train_num_nodes == 0 {
            return bad("train_num_nodes must be at least 1");
        }
        let non_negative = |v: f64| v >= 0.0;
        if !(self.grad_clip.is_finite() && self.grad_clip > 0.0) || ![self.lr_actor, self.lr_critic, self.entropy_coeff].into_iter().all(non_negative) {
            return bad("grad_clip must be positive; learning rates and entropy_coeff non-negative");
        }
        if self.checkpoint_every > 0 && self.out_dir.is_none() {
            return bad("checkpoint_every needs out_dir");
        }
        self.model.validate()?;
        Ok(())
    }

    fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            num_nodes: self.train_num_nodes,
            num_rules: self.train_num_rules,
            ..self.generator.clone()
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("non-finite values at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub mean_return: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub mean_entropy: f64,
    pub grad_norm_actor: f64,
    pub grad_norm_critic: f64,
    pub wall_ms: u64,
}

pub fn write_log_csv(path: &Path, rows: &[LogRow]) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub struct TrainOutput<T: Scalar> {
    pub actor: Actor<T>,
    pub critic: Critic<T>,
    pub log: Vec<LogRow>,
}

/// Builds the initial networks for a run; `train` with zero steps returns
/// exactly these.
pub fn init_networks<T: Scalar>(cfg: &TrainConfig, kind: RewardKind, seed: u64) -> Result<(Actor<T>, Critic<T>), TrainError> {
    let model = cfg.model.clone().with_node_features(kind.node_feature_dim());
    let actor = Actor::new(model.clone(), derive_seed(seed, &[ACTOR_KEY]))?;
    let critic = Critic::new(model, derive_seed(seed, &[CRITIC_KEY]))?;
    Ok((actor, critic))
}

struct EpisodeResult<T> {
    actor_grads: GradBuffer<T>,
    critic_grads: GradBuffer<T>,
    episode_return: f64,
    actor_loss: f64,
    critic_loss: f64,
    entropy_sum: f64,
    steps: usize,
}

/// Plays one episode with gradients recorded and returns its contribution
/// to the batch gradients. Numerically this is `rollout` followed by
/// `actor_loss` and `critic_loss`, but every network is evaluated once per
/// decision.
fn run_episode<T: Scalar>(
    cfg: &TrainConfig,
    kind: RewardKind,
    generator: &InstanceGenerator,
    actor: &Actor<T>,
    critic: &Critic<T>,
    episode_seed: u64,
) -> Result<EpisodeResult<T>, TrainError> {
    let instance = generator.instance(episode_seed);
    let mut rng = rng_from(derive_seed(episode_seed, &[ACTION_KEY]));
    let mut state = EnvState::with_rewards(&instance, kind, cfg.rewards);
    let reencode = actor.config().reencode_every_step;
    let mut a_tape = Tape::new();
    let mut c_tape = Tape::new();
    let mut first_obs: Option<(Var, crate::env::Observation<T>)> = None;
    let (mut policy, mut value_vars, mut rewards) = (Vec::new(), Vec::new(), Vec::new());
    let mut entropy_sum = 0.0;

    while let Some(rule) = state.next_pending() {
        let obs = state.observation::<T>();
        let mask = state.pointer_mask(rule);
        let logits = if reencode {
            let enc = actor.encode(&mut a_tape, &obs)?;
            actor.decode(&mut a_tape, enc, &obs, rule, &mask)?
        } else {
            if first_obs.is_none() {
                first_obs = Some((actor.encode(&mut a_tape, &obs)?, obs.clone()));
            }
            let (enc, enc_obs) = first_obs.as_ref().expect("set above");
            actor.decode(&mut a_tape, *enc, enc_obs, rule, &mask)?
        };
        let choice = actor_select(a_tape.value(logits), SelectMode::Stochastic, &mut rng);
        entropy_sum += choice.entropy;
        policy.push(loss::policy_terms(&mut a_tape, logits, &mask, choice.index)?);
        value_vars.push(critic.forward(&mut c_tape, &obs)?);
        rewards.push(state.step(rule, choice.index)?.reward);
    }

    let values: Vec<f64> = value_vars.iter().map(|v| c_tape.scalar(*v).f64()).collect();
    let mut next_values: Vec<f64> = values.iter().skip(1).copied().collect();
    next_values.push(0.0);
    let advantages = advantages_from(&rewards, &values, &next_values, cfg.gamma, cfg.advantage_mode);
    let targets: Vec<f64> = values.iter().zip(&advantages).map(|(v, a)| v + a).collect();

    let a_loss = loss::actor_objective(&mut a_tape, &policy, &advantages, cfg.entropy_coeff, cfg.batch_size)?;
    let mut actor_grads = GradBuffer::zeros_like(actor.params());
    a_tape.backward(a_loss)?.accumulate_params(&mut actor_grads);

    let c_loss = loss::critic_objective(&mut c_tape, &value_vars, &targets, cfg.batch_size * instance.num_rules())?;
    let mut critic_grads = GradBuffer::zeros_like(critic.params());
    c_tape.backward(c_loss)?.accumulate_params(&mut critic_grads);

    Ok(EpisodeResult {
        actor_grads,
        critic_grads,
        episode_return: rewards.iter().sum(),
        actor_loss: a_tape.scalar(a_loss).f64(),
        critic_loss: c_tape.scalar(c_loss).f64(),
        entropy_sum,
        steps: rewards.len(),
    })
}

/// Trains from freshly initialized networks.
pub fn train<T: Scalar>(cfg: &TrainConfig, kind: RewardKind, seed: u64) -> Result<TrainOutput<T>, TrainError> {
    let (actor, critic) = init_networks(cfg, kind, seed)?;
    train_from(cfg, kind, seed, actor, critic, |_| {})
}

/// Continues training the given networks. `on_step` sees every log row as
/// it is produced.
pub fn train_from<T: Scalar>(
    cfg: &TrainConfig,
    kind: RewardKind,
    seed: u64,
    mut actor: Actor<T>,
    mut critic: Critic<T>,
    mut on_step: impl FnMut(&LogRow),
) -> Result<TrainOutput<T>, TrainError> {
    cfg.validate()?;
    let generator = InstanceGenerator::new(cfg.generator_config(), derive_seed(seed, &[POOL_KEY]))?;
    let mut actor_opt = AdamState::new(actor.params());
    let mut critic_opt = AdamState::new(critic.params());
    let mut log = Vec::with_capacity(cfg.training_steps);
    let started = Instant::now();

    for step in 0..cfg.training_steps {
        let results: Vec<EpisodeResult<T>> = (0..cfg.batch_size)
            .into_par_iter()
            .map(|ep| run_episode(cfg, kind, &generator, &actor, &critic, derive_seed(seed, &[step as u64, ep as u64])))
            .collect::<Result<_, _>>()?;

        let mut actor_grads = GradBuffer::zeros_like(actor.params());
        let mut critic_grads = GradBuffer::zeros_like(critic.params());
        let (mut ret, mut a_loss, mut c_loss, mut ent, mut decisions) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for r in &results {
            actor_grads.add_assign(&r.actor_grads);
            critic_grads.add_assign(&r.critic_grads);
            ret += r.episode_return;
            a_loss += r.actor_loss;
            c_loss += r.critic_loss;
            ent += r.entropy_sum;
            decisions += r.steps;
        }
        let norm_actor = clip_global_norm(&mut actor_grads, cfg.grad_clip);
        let norm_critic = clip_global_norm(&mut critic_grads, cfg.grad_clip);
        let row = LogRow {
            step,
            mean_return: ret / cfg.batch_size as f64,
            actor_loss: a_loss,
            critic_loss: c_loss,
            mean_entropy: if decisions > 0 { ent / decisions as f64 } else { 0.0 },
            grad_norm_actor: norm_actor,
            grad_norm_critic: norm_critic,
            wall_ms: if cfg.log_wall_time { started.elapsed().as_millis() as u64 } else { 0 },
        };
        let finite = [row.actor_loss, row.critic_loss, norm_actor, norm_critic].iter().all(|v| v.is_finite());
        if !finite || !actor_grads.is_finite() || !critic_grads.is_finite() {
            let detail = format!(
                "actor_loss={} critic_loss={} grad_norm_actor={} grad_norm_critic={} mean_return={}",
                row.actor_loss, row.critic_loss, norm_actor, norm_critic, row.mean_return
            );
            if let Some(dir) = &cfg.out_dir {
                std::fs::create_dir_all(dir)?;
                let dump = serde_json::json!({ "step": step, "row": row, "log_tail": &log[log.len().saturating_sub(10)..] });
                std::fs::write(dir.join("nonfinite_dump.json"), dump.to_string())?;
            }
            return Err(TrainError::NonFinite { step, detail });
        }
        adam_step(actor.params_mut(), &actor_grads, &mut actor_opt, cfg.lr_actor)?;
        adam_step(critic.params_mut(), &critic_grads, &mut critic_opt, cfg.lr_critic)?;
        on_step(&row);
        log.push(row);

        if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
            let dir = cfg.out_dir.as_ref().expect("validated");
            std::fs::create_dir_all(dir)?;
            actor.save(&dir.join(format!("actor_step{}.ckpt", step + 1)))?;
            critic.save(&dir.join(format!("critic_step{}.ckpt", step + 1)))?;
        }
    }
    Ok(TrainOutput { actor, critic, log })
}
