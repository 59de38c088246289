//! Sequential placement environment.
//!
//! Rules are decided one at a time: each step places a pending rule on a
//! real node or sends it to the reject node at position 0. Rewards follow
//! the selected [`RewardKind`] and are computed on the post-transition state.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{critical_slack, fits, global_critical, ProblemInstance, ResourceVector, REJECT_NODE};
use crate::scalar::Scalar;
use crate::solution::{Assignment, Solution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewardKind {
    Greedy,
    CriticalAware,
    CostAware,
}

impl RewardKind {
    pub const ALL: [RewardKind; 3] = [RewardKind::Greedy, RewardKind::CriticalAware, RewardKind::CostAware];

    /// Node feature width expected by the model for this reward.
    pub fn node_feature_dim(self) -> usize {
        match self {
            RewardKind::CostAware => 4,
            _ => 3,
        }
    }
}

/// Reward magnitudes; defaults are -2 per rejection and -1 per newly opened node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub reject_penalty: f64,
    pub empty_node_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            reject_penalty: 2.0,
            empty_node_penalty: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleStatus {
    Pending,
    Placed(usize),
    Rejected,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    pub accepted: bool,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error("rule {0} does not exist")]
    UnknownRule(usize),
    #[error("rule {0} was already decided")]
    RuleNotPending(usize),
    #[error("node {0} does not exist")]
    UnknownNode(usize),
    #[error("rule {rule} does not fit on node {node}")]
    Infeasible { rule: usize, node: usize },
}

/// Mutable placement state over a borrowed instance.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState<'a> {
    instance: &'a ProblemInstance,
    used: Vec<ResourceVector>,
    placed_count: Vec<usize>,
    rule_status: Vec<RuleStatus>,
    step: usize,
    reward_kind: RewardKind,
    rewards: RewardConfig,
}

impl<'a> EnvState<'a> {
    pub fn reset(instance: &'a ProblemInstance, kind: RewardKind) -> Self {
        Self::with_rewards(instance, kind, RewardConfig::default())
    }

    pub fn with_rewards(instance: &'a ProblemInstance, kind: RewardKind, rewards: RewardConfig) -> Self {
        EnvState {
            instance,
            used: vec![ResourceVector::ZERO; instance.nodes().len()],
            placed_count: vec![0; instance.nodes().len()],
            rule_status: vec![RuleStatus::Pending; instance.num_rules()],
            step: 0,
            reward_kind: kind,
            rewards,
        }
    }

    pub fn instance(&self) -> &'a ProblemInstance {
        self.instance
    }

    pub fn used(&self) -> &[ResourceVector] {
        &self.used
    }

    pub fn rule_status(&self) -> &[RuleStatus] {
        &self.rule_status
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn reward_kind(&self) -> RewardKind {
        self.reward_kind
    }

    pub fn is_done(&self) -> bool {
        self.step == self.rule_status.len()
    }

    /// Lowest-index pending rule, the decoder's feeding order.
    pub fn next_pending(&self) -> Option<usize> {
        self.rule_status.iter().position(|s| *s == RuleStatus::Pending)
    }

    pub fn is_node_empty(&self, node: usize) -> bool {
        self.placed_count[node] == 0
    }

    pub fn remaining(&self, node: usize) -> ResourceVector {
        *self.instance.capacity(node) - self.used[node]
    }

    /// Minimum slack over real nodes in the current state.
    pub fn omega_max(&self) -> f64 {
        global_critical(
            self.instance
                .real_nodes()
                .iter()
                .zip(self.used.iter().skip(1))
                .map(|(n, u)| (&n.capacity, u)),
        )
        .expect("usage never exceeds capacity")
    }

    /// Applies one decision. Node 0 rejects the rule.
    pub fn step(&mut self, rule: usize, node: usize) -> Result<StepOutcome, EnvError> {
        let status = *self.rule_status.get(rule).ok_or(EnvError::UnknownRule(rule))?;
        if status != RuleStatus::Pending {
            return Err(EnvError::RuleNotPending(rule));
        }
        if node >= self.used.len() {
            return Err(EnvError::UnknownNode(node));
        }
        let accepted = node != REJECT_NODE;
        let was_empty = accepted && self.placed_count[node] == 0;
        if accepted {
            let demand = self.instance.demand(rule);
            if !fits(self.instance.capacity(node), &self.used[node], demand) {
                return Err(EnvError::Infeasible { rule, node });
            }
            self.used[node] = self.used[node] + *demand;
            self.placed_count[node] += 1;
            self.rule_status[rule] = RuleStatus::Placed(node);
        } else {
            self.rule_status[rule] = RuleStatus::Rejected;
        }
        self.step += 1;
        let reward = match self.reward_kind {
            RewardKind::Greedy => {
                if accepted {
                    1.0
                } else {
                    0.0
                }
            }
            RewardKind::CriticalAware => self.reward_critical(accepted),
            RewardKind::CostAware => {
                if !accepted {
                    -self.rewards.reject_penalty
                } else if was_empty {
                    -self.rewards.empty_node_penalty
                } else {
                    0.0
                }
            }
        };
        Ok(StepOutcome {
            reward,
            done: self.is_done(),
            accepted,
        })
    }

    /// Critical-aware reward evaluated on the current (post-transition) state.
    pub fn reward_critical(&self, accepted: bool) -> f64 {
        if accepted {
            self.omega_max()
        } else {
            -self.rewards.reject_penalty
        }
    }

    /// Feasible positions for `rule`; the reject position is always open.
    pub fn pointer_mask(&self, rule: usize) -> Vec<bool> {
        let demand = self.instance.demand(rule);
        (0..self.used.len())
            .map(|j| j == REJECT_NODE || fits(self.instance.capacity(j), &self.used[j], demand))
            .collect()
    }

    /// `(node_mask, rule_mask)` for the encoder: full nodes and decided rules are hidden.
    pub fn encoder_masks(&self) -> (Vec<bool>, Vec<bool>) {
        let node_mask = (0..self.used.len())
            .map(|j| {
                j == REJECT_NODE
                    || critical_slack(self.instance.capacity(j), &self.used[j]).is_ok_and(|s| s > 0.0)
            })
            .collect();
        let rule_mask = self.rule_status.iter().map(|s| *s == RuleStatus::Pending).collect();
        (node_mask, rule_mask)
    }

    /// Model inputs for the current state.
    pub fn observation<T: Scalar>(&self) -> Observation<T> {
        let node_dim = self.reward_kind.node_feature_dim();
        let mut node_feats = Vec::with_capacity(self.used.len() * node_dim);
        for j in 0..self.used.len() {
            let rem = self.remaining(j);
            node_feats.extend(rem.iter().map(T::of));
            if node_dim == 4 {
                node_feats.push(if self.placed_count[j] > 0 { T::one() } else { T::zero() });
            }
        }
        let rule_feats = self
            .instance
            .rules()
            .iter()
            .flat_map(|r| r.demand.iter().map(T::of))
            .collect();
        let (node_mask, rule_mask) = self.encoder_masks();
        Observation {
            num_nodes: self.used.len(),
            num_rules: self.rule_status.len(),
            node_dim,
            node_feats,
            rule_feats,
            node_mask,
            rule_mask,
        }
    }

    /// The assignment so far, with undecided rules counted as rejected.
    pub fn assignment(&self) -> Assignment {
        Assignment(
            self.rule_status
                .iter()
                .map(|s| match s {
                    RuleStatus::Placed(n) => Some(*n),
                    _ => None,
                })
                .collect(),
        )
    }

    pub fn solution(&self) -> Solution {
        Solution::evaluate(self.instance, self.assignment()).expect("environment only admits feasible placements")
    }
}

/// Encoder and decoder inputs extracted from an [`EnvState`].
#[derive(Clone, Debug, PartialEq)]
pub struct Observation<T> {
    /// Node positions including the reject node at 0.
    pub num_nodes: usize,
    pub num_rules: usize,
    pub node_dim: usize,
    /// Row-major `num_nodes × node_dim`.
    pub node_feats: Vec<T>,
    /// Row-major `num_rules × 3`.
    pub rule_feats: Vec<T>,
    pub node_mask: Vec<bool>,
    pub rule_mask: Vec<bool>,
}

impl<T: Scalar> Observation<T> {
    pub fn node_row(&self, j: usize) -> &[T] {
        &self.node_feats[j * self.node_dim..(j + 1) * self.node_dim]
    }

    pub fn rule_row(&self, i: usize) -> &[T] {
        &self.rule_feats[i * 3..(i + 1) * 3]
    }

    /// Combined key mask over `[nodes..., rules...]`.
    pub fn combined_mask(&self) -> Vec<bool> {
        self.node_mask.iter().chain(self.rule_mask.iter()).copied().collect()
    }
}

/// Free-function form of the state features: `(node_feats, rule_feats)`.
pub fn state_features<T: Scalar>(state: &EnvState<'_>) -> (Vec<T>, Vec<T>) {
    let obs = state.observation::<T>();
    (obs.node_feats, obs.rule_feats)
}

/// One line of an episode trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub rule_id: usize,
    pub node_id: usize,
    pub reward: f64,
    pub omega_max: f64,
    pub done: bool,
}

impl TraceRecord {
    pub fn after_step(state: &EnvState<'_>, rule_id: usize, node_id: usize, outcome: &StepOutcome) -> Self {
        TraceRecord {
            step: state.step_index(),
            rule_id,
            node_id,
            reward: outcome.reward,
            omega_max: state.omega_max(),
            done: outcome.done,
        }
    }
}

/// Writes records as JSON lines.
pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
