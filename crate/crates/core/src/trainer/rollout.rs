use rand::Rng;

use crate::autodiff::Tape;
use crate::domain::ProblemInstance;
use crate::env::{EnvState, Observation, RewardConfig, RewardKind};
use crate::model::{actor_select, Actor, Critic, SelectMode};
use crate::scalar::Scalar;
use crate::solution::Solution;

use super::{AdvantageMode, TrainError};

/// One decision of an episode.
#[derive(Clone, Debug)]
pub struct Transition<T> {
    /// Model inputs of the state the decision was taken in.
    pub observation: Observation<T>,
    pub rule: usize,
    pub pointer_mask: Vec<bool>,
    pub action: usize,
    pub log_prob: f64,
    pub entropy: f64,
    pub reward: f64,
    pub value: f64,
    /// Critic value of the successor state; 0 after the last decision.
    pub next_value: f64,
}

/// Plays one episode, recording what the losses need. `mode` is
/// `Stochastic` during training.
pub fn rollout<T: Scalar, R: Rng + ?Sized>(
    instance: &ProblemInstance,
    actor: &Actor<T>,
    critic: &Critic<T>,
    kind: RewardKind,
    rewards: &RewardConfig,
    mode: SelectMode,
    rng: &mut R,
) -> Result<Vec<Transition<T>>, TrainError> {
    let (transitions, _) = play(instance, actor, Some(critic), kind, rewards, mode, rng)?;
    Ok(transitions)
}

/// Runs the actor alone and returns the resulting solution.
pub fn agent_solve<T: Scalar, R: Rng + ?Sized>(
    instance: &ProblemInstance,
    actor: &Actor<T>,
    kind: RewardKind,
    mode: SelectMode,
    rng: &mut R,
) -> Result<Solution, TrainError> {
    let (_, solution) = play(instance, actor, None, kind, &RewardConfig::default(), mode, rng)?;
    Ok(solution)
}

fn play<T: Scalar, R: Rng + ?Sized>(
    instance: &ProblemInstance,
    actor: &Actor<T>,
    critic: Option<&Critic<T>>,
    kind: RewardKind,
    rewards: &RewardConfig,
    mode: SelectMode,
    rng: &mut R,
) -> Result<(Vec<Transition<T>>, Solution), TrainError> {
    let mut state = EnvState::with_rewards(instance, kind, *rewards);
    let mut transitions: Vec<Transition<T>> = Vec::with_capacity(instance.num_rules());
    let reencode = actor.config().reencode_every_step;
    let mut tape = Tape::new();
    let mut initial: Option<(Observation<T>, crate::autodiff::Var)> = None;

    while let Some(rule) = state.next_pending() {
        let observation = state.observation::<T>();
        let pointer_mask = state.pointer_mask(rule);
        if reencode {
            tape = Tape::new();
        }
        if reencode || initial.is_none() {
            let enc = actor.encode(&mut tape, &observation)?;
            initial = Some((observation.clone(), enc));
        }
        let (enc_obs, enc) = initial.as_ref().expect("encoded above");
        let logits = actor.decode(&mut tape, *enc, enc_obs, rule, &pointer_mask)?;
        let choice = actor_select(tape.value(logits), mode, rng);
        let value = match critic {
            Some(c) => c.value(&state)?.f64(),
            None => 0.0,
        };
        let outcome = state.step(rule, choice.index)?;
        if let Some(prev) = transitions.last_mut() {
            prev.next_value = value;
        }
        transitions.push(Transition {
            observation,
            rule,
            pointer_mask,
            action: choice.index,
            log_prob: choice.log_prob,
            entropy: choice.entropy,
            reward: outcome.reward,
            value,
            next_value: 0.0,
        });
    }
    Ok((transitions, state.solution()))
}

/// Per-step advantages. `TD0`: `r + γ·V(s') − V(s)`; `MonteCarlo`:
/// discounted return-to-go minus `V(s)`.
pub fn compute_advantages<T>(transitions: &[Transition<T>], gamma: f64, mode: AdvantageMode) -> Vec<f64> {
    let rewards: Vec<f64> = transitions.iter().map(|t| t.reward).collect();
    let values: Vec<f64> = transitions.iter().map(|t| t.value).collect();
    let next: Vec<f64> = transitions.iter().map(|t| t.next_value).collect();
    advantages_from(&rewards, &values, &next, gamma, mode)
}

pub fn advantages_from(rewards: &[f64], values: &[f64], next_values: &[f64], gamma: f64, mode: AdvantageMode) -> Vec<f64> {
    match mode {
        AdvantageMode::Td0 => rewards
            .iter()
            .zip(values)
            .zip(next_values)
            .map(|((r, v), nv)| r + gamma * nv - v)
            .collect(),
        AdvantageMode::MonteCarlo => {
            let mut out = vec![0.0; rewards.len()];
            let mut g = 0.0;
            for t in (0..rewards.len()).rev() {
                g = rewards[t] + gamma * g;
                out[t] = g - values[t];
            }
            out
        }
    }
}
