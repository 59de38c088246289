use crate::autodiff::{Tape, Var};
use crate::model::{Actor, Critic};
use crate::scalar::Scalar;

use super::{Transition, TrainError};

fn total<T: Scalar>(tape: &mut Tape<'_, T>, terms: &[Var]) -> Result<Var, TrainError> {
    if terms.is_empty() {
        return Ok(tape.constant(1, 1, vec![T::zero()])?);
    }
    let stacked = tape.concat_rows(terms)?;
    Ok(tape.sum(stacked))
}

/// `(log π(action), Σ p·log p)` as differentiable scalars from masked logits.
pub(crate) fn policy_terms<T: Scalar>(tape: &mut Tape<'_, T>, logits: Var, mask: &[bool], action: usize) -> Result<(Var, Var), TrainError> {
    let log_p = tape.masked_log_softmax(logits, mask)?;
    let p = tape.masked_softmax(logits, mask)?;
    let plogp = tape.mul(p, log_p)?;
    let neg_entropy = tape.sum(plogp);
    Ok((tape.pick(log_p, action)?, neg_entropy))
}

pub(crate) fn actor_objective<T: Scalar>(
    tape: &mut Tape<'_, T>,
    steps: &[(Var, Var)],
    advantages: &[f64],
    entropy_coeff: f64,
    batch_size: usize,
) -> Result<Var, TrainError> {
    let mut terms = Vec::with_capacity(steps.len());
    for ((log_p, neg_entropy), adv) in steps.iter().zip(advantages) {
        let policy_term = tape.scale(*log_p, T::of(-adv));
        let entropy_term = tape.scale(*neg_entropy, T::of(entropy_coeff));
        terms.push(tape.add(policy_term, entropy_term)?);
    }
    let sum = total(tape, &terms)?;
    Ok(tape.scale(sum, T::of(1.0 / batch_size.max(1) as f64)))
}

pub(crate) fn critic_objective<T: Scalar>(tape: &mut Tape<'_, T>, values: &[Var], targets: &[f64], count: usize) -> Result<Var, TrainError> {
    let mut terms = Vec::with_capacity(values.len());
    for (v, target) in values.iter().zip(targets) {
        let t = tape.constant(1, 1, vec![T::of(*target)])?;
        let diff = tape.sub(t, *v)?;
        terms.push(tape.mul(diff, diff)?);
    }
    let sum = total(tape, &terms)?;
    Ok(tape.scale(sum, T::of(0.5 / count.max(1) as f64)))
}

/// `(−Σ_t log π(a_t|s_t)·A_t − c·Σ_t H_t) / batch_size` for one episode,
/// re-evaluated on `tape` so it can be differentiated. Advantages enter as
/// constants.
pub fn actor_loss<'p, T: Scalar>(
    tape: &mut Tape<'p, T>,
    actor: &'p Actor<T>,
    transitions: &[Transition<T>],
    advantages: &[f64],
    entropy_coeff: f64,
    batch_size: usize,
) -> Result<Var, TrainError> {
    let reencode = actor.config().reencode_every_step;
    let mut shared = None;
    let mut steps = Vec::with_capacity(transitions.len());
    for tr in transitions {
        let (enc, enc_obs) = match shared {
            Some(pair) if !reencode => pair,
            _ => {
                let pair = (actor.encode(tape, &tr.observation)?, &tr.observation);
                shared = Some(pair);
                pair
            }
        };
        let logits = actor.decode(tape, enc, enc_obs, tr.rule, &tr.pointer_mask)?;
        steps.push(policy_terms(tape, logits, &tr.pointer_mask, tr.action)?);
    }
    actor_objective(tape, &steps, advantages, entropy_coeff, batch_size)
}

/// `½ Σ_t (target_t − V(s_t))² / count`, with the targets held constant.
pub fn critic_loss<'p, T: Scalar>(
    tape: &mut Tape<'p, T>,
    critic: &'p Critic<T>,
    transitions: &[Transition<T>],
    targets: &[f64],
    count: usize,
) -> Result<Var, TrainError> {
    let values = transitions
        .iter()
        .map(|tr| critic.forward(tape, &tr.observation))
        .collect::<Result<Vec<_>, _>>()?;
    critic_objective(tape, &values, targets, count)
}

/// `½ mean(A²)`; the value the critic loss takes when the targets are the
/// current values plus these advantages.
pub fn critic_loss_value(advantages: &[f64]) -> f64 {
    if advantages.is_empty() {
        return 0.0;
    }
    0.5 * advantages.iter().map(|a| a * a).sum::<f64>() / advantages.len() as f64
}
