//! Complete rule-to-node assignments and their KPIs.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::domain::{fits, global_critical, ProblemInstance, ResourceVector};

#[derive(Debug, thiserror::Error)]
pub enum SolutionError {
    #[error("assignment covers {got} rules, instance has {expected}")]
    Length { expected: usize, got: usize },
    #[error("rule {rule} assigned to unknown node {node}")]
    UnknownNode { rule: usize, node: usize },
    #[error("rule {rule} overflows node {node}")]
    Infeasible { rule: usize, node: usize },
}

/// Per-rule placement: `Some(node)` with `node >= 1`, or `None` for REJECT.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(pub Vec<Option<usize>>);

impl Assignment {
    pub fn all_rejected(num_rules: usize) -> Self {
        Assignment(vec![None; num_rules])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn accepted(&self) -> usize {
        self.0.iter().filter(|a| a.is_some()).count()
    }

    pub fn rejected(&self) -> usize {
        self.0.len() - self.accepted()
    }

    /// Position encoding used by the environment: 0 for REJECT, else node index.
    pub fn as_positions(&self) -> Vec<usize> {
        self.0.iter().map(|a| a.unwrap_or(0)).collect()
    }
}

impl Serialize for Assignment {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter().map(|a| a.map_or(-1i64, |n| n as i64)))
    }
}

impl<'de> Deserialize<'de> for Assignment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = Vec::<i64>::deserialize(d)?;
        raw.into_iter()
            .map(|v| match v {
                -1 => Ok(None),
                v if v >= 1 => Ok(Some(v as usize)),
                v => Err(D::Error::custom(format!("invalid node index {v}"))),
            })
            .collect::<Result<_, _>>()
            .map(Assignment)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kpis {
    pub rejection_rate: f64,
    pub omega_max: f64,
    pub empty_nodes: usize,
    pub used_nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub assignment: Assignment,
    pub kpis: Kpis,
}

/// Per-node usage after replaying an assignment in rule-index order.
pub fn replay(instance: &ProblemInstance, assignment: &Assignment) -> Result<Vec<ResourceVector>, SolutionError> {
    if assignment.len() != instance.num_rules() {
        return Err(SolutionError::Length {
            expected: instance.num_rules(),
            got: assignment.len(),
        });
    }
    let mut used = vec![ResourceVector::ZERO; instance.nodes().len()];
    for (rule, slot) in assignment.0.iter().enumerate() {
        let Some(node) = *slot else { continue };
        if node == 0 || node >= used.len() {
            return Err(SolutionError::UnknownNode { rule, node });
        }
        let demand = instance.demand(rule);
        if !fits(instance.capacity(node), &used[node], demand) {
            return Err(SolutionError::Infeasible { rule, node });
        }
        used[node] = used[node] + *demand;
    }
    Ok(used)
}

impl Solution {
    /// Replays `assignment` against `instance`, checking capacities, and
    /// derives the KPIs.
    pub fn evaluate(instance: &ProblemInstance, assignment: Assignment) -> Result<Self, SolutionError> {
        let used = replay(instance, &assignment)?;
        let mut occupied = vec![false; instance.nodes().len()];
        for node in assignment.0.iter().flatten() {
            occupied[*node] = true;
        }
        let used_nodes = occupied.iter().skip(1).filter(|o| **o).count();
        let omega_max = global_critical(
            instance
                .real_nodes()
                .iter()
                .zip(used.iter().skip(1))
                .map(|(n, u)| (&n.capacity, u)),
        )
        .expect("instances have at least one real node and replay keeps usage within capacity");
        let num_rules = assignment.len();
        let rejection_rate = if num_rules == 0 {
            0.0
        } else {
            assignment.rejected() as f64 / num_rules as f64
        };
        Ok(Solution {
            kpis: Kpis {
                rejection_rate,
                omega_max,
                empty_nodes: instance.num_real_nodes() - used_nodes,
                used_nodes,
            },
            assignment,
        })
    }

    pub fn accepted(&self) -> usize {
        self.assignment.accepted()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("solution serialization is infallible")
    }
}
