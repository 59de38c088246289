//! Single-pass baseline placement strategies.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::domain::{compute_critical, fits, ProblemInstance, ResourceVector};
use crate::seed::{derive_seed, rng_from};
pub use crate::solution::{Assignment, Kpis, Solution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SortOrder {
    Ascending,
    Descending,
}

impl SortOrder {
    fn apply(self, ord: Ordering) -> Ordering {
        match self {
            SortOrder::Ascending => ord,
            SortOrder::Descending => ord.reverse(),
        }
    }
}

/// The four critical-resource insertion variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CriticalVariant {
    DrDc,
    DrAc,
    ArDc,
    ArAc,
}

impl CriticalVariant {
    pub const ALL: [CriticalVariant; 4] = [
        CriticalVariant::DrDc,
        CriticalVariant::DrAc,
        CriticalVariant::ArDc,
        CriticalVariant::ArAc,
    ];

    /// `(rule_order, critical_order)`.
    pub fn orders(self) -> (SortOrder, SortOrder) {
        use SortOrder::*;
        match self {
            CriticalVariant::DrDc => (Descending, Descending),
            CriticalVariant::DrAc => (Descending, Ascending),
            CriticalVariant::ArDc => (Ascending, Descending),
            CriticalVariant::ArAc => (Ascending, Ascending),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CriticalVariant::DrDc => "DR-DC",
            CriticalVariant::DrAc => "DR-AC",
            CriticalVariant::ArDc => "AR-DC",
            CriticalVariant::ArAc => "AR-AC",
        }
    }

    pub fn solve(self, instance: &ProblemInstance) -> Solution {
        let (rules, crit) = self.orders();
        critical_insertion(instance, rules, crit)
    }
}

impl fmt::Display for CriticalVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CriticalVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        CriticalVariant::ALL
            .into_iter()
            .find(|v| v.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown heuristic variant {s:?}"))
    }
}

/// Visits rules in a seeded random order and tries real nodes in a seeded
/// random order without replacement; the first feasible node wins.
pub fn random_insertion(instance: &ProblemInstance, seed: u64) -> Solution {
    let mut rng = rng_from(derive_seed(seed, &[instance.seed()]));
    let mut rule_order: Vec<usize> = (0..instance.num_rules()).collect();
    rule_order.shuffle(&mut rng);

    let mut used = vec![ResourceVector::ZERO; instance.nodes().len()];
    let mut assignment = vec![None; instance.num_rules()];
    let mut candidates: Vec<usize> = (1..instance.nodes().len()).collect();
    for rule in rule_order {
        let demand = instance.demand(rule);
        candidates.shuffle(&mut rng);
        if let Some(&node) = candidates
            .iter()
            .find(|&&n| fits(instance.capacity(n), &used[n], demand))
        {
            used[node] = used[node] + *demand;
            assignment[rule] = Some(node);
        }
    }
    Solution::evaluate(instance, Assignment(assignment)).expect("only feasible placements are made")
}

/// Rule indices sorted by largest demand component, ties by id ascending.
pub fn sort_rules_by_largest(instance: &ProblemInstance, order: SortOrder) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..instance.num_rules()).collect();
    idx.sort_by(|&a, &b| {
        let ka = instance.demand(a).max_component();
        let kb = instance.demand(b).max_component();
        order.apply(ka.total_cmp(&kb)).then(a.cmp(&b))
    });
    idx
}

/// Critical-resource insertion.
///
/// Rules are processed by largest demand component in `rule_order`; for
/// each rule the real nodes are ranked by post-placement critical slack in
/// `critical_order` and the first node with non-negative slack receives it.
pub fn critical_insertion(instance: &ProblemInstance, rule_order: SortOrder, critical_order: SortOrder) -> Solution {
    critical_insertion_traced(instance, rule_order, critical_order).0
}

/// One placement decision of [`critical_insertion`] with the scores seen.
#[derive(Clone, Debug)]
pub struct InsertionStep {
    pub rule: usize,
    pub node: Option<usize>,
    /// `(score, node)` for every real node, in ranked order.
    pub scores: Vec<(f64, usize)>,
}

pub fn critical_insertion_traced(
    instance: &ProblemInstance,
    rule_order: SortOrder,
    critical_order: SortOrder,
) -> (Solution, Vec<InsertionStep>) {
    let mut used = vec![ResourceVector::ZERO; instance.nodes().len()];
    let mut assignment = vec![None; instance.num_rules()];
    let mut trace = Vec::with_capacity(instance.num_rules());
    for rule in sort_rules_by_largest(instance, rule_order) {
        let demand = instance.demand(rule);
        let mut scores: Vec<(f64, usize)> = (1..instance.nodes().len())
            .map(|n| (compute_critical(instance.capacity(n), &used[n], demand), n))
            .collect();
        scores.sort_by(|a, b| critical_order.apply(a.0.total_cmp(&b.0)).then(a.1.cmp(&b.1)));
        // The slack test uses the same tolerance as `fits`, so boundary fits are accepted.
        let chosen = scores
            .iter()
            .find(|(_, n)| fits(instance.capacity(*n), &used[*n], demand))
            .map(|(_, n)| *n);
        if let Some(node) = chosen {
            used[node] = used[node] + *demand;
            assignment[rule] = Some(node);
        }
        trace.push(InsertionStep {
            rule,
            node: chosen,
            scores,
        });
    }
    let sol = Solution::evaluate(instance, Assignment(assignment)).expect("only feasible placements are made");
    (sol, trace)
}
