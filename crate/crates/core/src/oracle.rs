//! Exact reference solvers for the three placement objectives.
//!
//! [`solve_exhaustive`] enumerates every assignment and exists to validate
//! [`solve_bnb`], a depth-first branch-and-bound with admissible
//! combinatorial bounds and optional node/time limits.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::domain::{
    compute_critical, critical_slack, fits, ProblemInstance, ResourceVector, NUM_RESOURCES,
};
use crate::env::RewardKind;
use crate::heuristics::sort_rules_by_largest;
use crate::heuristics::SortOrder;
use crate::solution::{replay, Assignment, Solution, SolutionError};

/// Largest search space `solve_exhaustive` accepts.
pub const EXHAUSTIVE_LIMIT: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    Greedy,
    CriticalAware,
    CostAware,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::Greedy, Objective::CriticalAware, Objective::CostAware];

    pub fn label(self) -> &'static str {
        match self {
            Objective::Greedy => "greedy",
            Objective::CriticalAware => "critical",
            Objective::CostAware => "cost",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "greedy" => Ok(Objective::Greedy),
            "critical" | "critical-aware" | "criticalaware" => Ok(Objective::CriticalAware),
            "cost" | "cost-aware" | "costaware" => Ok(Objective::CostAware),
            _ => Err(format!("unknown objective {s:?} (expected greedy, critical or cost)")),
        }
    }
}

impl From<RewardKind> for Objective {
    fn from(kind: RewardKind) -> Self {
        match kind {
            RewardKind::Greedy => Objective::Greedy,
            RewardKind::CriticalAware => Objective::CriticalAware,
            RewardKind::CostAware => Objective::CostAware,
        }
    }
}

impl From<Objective> for RewardKind {
    fn from(obj: Objective) -> Self {
        match obj {
            Objective::Greedy => RewardKind::Greedy,
            Objective::CriticalAware => RewardKind::CriticalAware,
            Objective::CostAware => RewardKind::CostAware,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("search space of {size} assignments exceeds the exhaustive limit of {EXHAUSTIVE_LIMIT}")]
    TooLarge { size: u64 },
    #[error(transparent)]
    Infeasible(#[from] SolutionError),
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub solution: Solution,
    pub objective_value: f64,
    pub proven_optimal: bool,
    pub nodes_explored: u64,
    pub wall_time: Duration,
}

/// JSON form: the solution fields plus search statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    #[serde(flatten)]
    pub solution: Solution,
    pub objective: f64,
    pub proven_optimal: bool,
    pub nodes_explored: u64,
    pub wall_ms: f64,
}

impl From<&OracleResult> for OracleReport {
    fn from(r: &OracleResult) -> Self {
        OracleReport {
            solution: r.solution.clone(),
            objective: r.objective_value,
            proven_optimal: r.proven_optimal,
            nodes_explored: r.nodes_explored,
            wall_ms: r.wall_time.as_secs_f64() * 1e3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchLimits {
    pub max_nodes_explored: u64,
    pub max_wall_time: Duration,
}

impl SearchLimits {
    pub fn unlimited() -> Self {
        SearchLimits {
            max_nodes_explored: u64::MAX,
            max_wall_time: Duration::MAX,
        }
    }

    pub fn with_time(ms: u64) -> Self {
        SearchLimits {
            max_nodes_explored: u64::MAX,
            max_wall_time: Duration::from_millis(ms),
        }
    }
}

/// Objective from final per-node usage (indexed like `instance.nodes()`).
fn objective_from_usage(instance: &ProblemInstance, used: &[ResourceVector], counts: &[usize], accepted: usize, objective: Objective) -> f64 {
    let accepted = accepted as f64;
    match objective {
        Objective::Greedy => accepted,
        Objective::CriticalAware => {
            let omega = instance
                .real_nodes()
                .iter()
                .zip(&used[1..])
                .map(|(n, u)| critical_slack(&n.capacity, u).expect("usage within capacity"))
                .fold(f64::INFINITY, f64::min);
            accepted + omega
        }
        Objective::CostAware => {
            let open = counts[1..].iter().filter(|c| **c > 0).count();
            accepted - open as f64 / instance.num_real_nodes() as f64
        }
    }
}

/// Objective value of a complete assignment; fails if it is infeasible.
pub fn objective_value(instance: &ProblemInstance, assignment: &Assignment, objective: Objective) -> Result<f64, SolutionError> {
    let used = replay(instance, assignment)?;
    let mut counts = vec![0usize; instance.nodes().len()];
    for n in assignment.0.iter().flatten() {
        counts[*n] += 1;
    }
    Ok(objective_from_usage(instance, &used, &counts, assignment.accepted(), objective))
}

pub fn search_space(instance: &ProblemInstance) -> u64 {
    let base = instance.nodes().len() as u64;
    (0..instance.num_rules()).try_fold(1u64, |acc, _| acc.checked_mul(base)).unwrap_or(u64::MAX)
}

struct Exhaustive<'a> {
    instance: &'a ProblemInstance,
    objective: Objective,
    used: Vec<ResourceVector>,
    counts: Vec<usize>,
    current: Vec<Option<usize>>,
    best: Option<(f64, Vec<Option<usize>>)>,
    leaves: u64,
}

impl Exhaustive<'_> {
    // Rules are assigned in index order with REJECT tried first, so the
    // first optimum found is the lexicographically smallest one. Usage is
    // accumulated in rule-index order, matching `replay` bit for bit.
    fn descend(&mut self, rule: usize, accepted: usize) {
        if rule == self.instance.num_rules() {
            self.leaves += 1;
            let value = objective_from_usage(self.instance, &self.used, &self.counts, accepted, self.objective);
            if self.best.as_ref().is_none_or(|(b, _)| value > *b) {
                self.best = Some((value, self.current.clone()));
            }
            return;
        }
        self.current[rule] = None;
        self.descend(rule + 1, accepted);
        let demand = *self.instance.demand(rule);
        for node in 1..self.used.len() {
            if !fits(self.instance.capacity(node), &self.used[node], &demand) {
                continue;
            }
            let saved = self.used[node];
            self.used[node] = saved + demand;
            self.counts[node] += 1;
            self.current[rule] = Some(node);
            self.descend(rule + 1, accepted + 1);
            self.used[node] = saved;
            self.counts[node] -= 1;
        }
        self.current[rule] = None;
    }
}

/// Enumerates every feasible assignment and returns the best one.
pub fn solve_exhaustive(instance: &ProblemInstance, objective: Objective) -> Result<OracleResult, OracleError> {
    let size = search_space(instance);
    if size > EXHAUSTIVE_LIMIT {
        return Err(OracleError::TooLarge { size });
    }
    let start = Instant::now();
    let mut search = Exhaustive {
        instance,
        objective,
        used: vec![ResourceVector::ZERO; instance.nodes().len()],
        counts: vec![0; instance.nodes().len()],
        current: vec![None; instance.num_rules()],
        best: None,
        leaves: 0,
    };
    search.descend(0, 0);
    let (value, assignment) = search.best.expect("the all-reject assignment is always feasible");
    let solution = Solution::evaluate(instance, Assignment(assignment))?;
    Ok(OracleResult {
        solution,
        objective_value: value,
        proven_optimal: true,
        nodes_explored: search.leaves,
        wall_time: start.elapsed(),
    })
}

struct BranchAndBound<'a> {
    instance: &'a ProblemInstance,
    objective: Objective,
    order: Vec<usize>,
    used: Vec<ResourceVector>,
    counts: Vec<usize>,
    current: Vec<Option<usize>>,
    best_value: f64,
    best: Vec<Option<usize>>,
    explored: u64,
    limits: SearchLimits,
    start: Instant,
    aborted: bool,
    scratch: Vec<f64>,
}

impl BranchAndBound<'_> {
    fn out_of_budget(&mut self) -> bool {
        if self.aborted {
            return true;
        }
        if self.explored >= self.limits.max_nodes_explored
            || (self.explored.is_multiple_of(256) && self.start.elapsed() >= self.limits.max_wall_time)
        {
            self.aborted = true;
        }
        self.aborted
    }

    /// Upper bound on how many of the rules from `depth` on can still be
    /// accepted: each must fit some node on its own, and per resource the
    /// smallest demands must fit in the pooled remaining capacity.
    fn acceptable_remaining(&mut self, depth: usize) -> usize {
        let rest = &self.order[depth..];
        if rest.is_empty() {
            return 0;
        }
        let nodes = 1..self.used.len();
        let mut pooled = [0.0f64; NUM_RESOURCES];
        for n in nodes.clone() {
            let rem = *self.instance.capacity(n) - self.used[n];
            for (m, p) in pooled.iter_mut().enumerate() {
                *p += rem[m].max(0.0);
            }
        }
        let fitting: Vec<usize> = rest
            .iter()
            .copied()
            .filter(|&r| {
                let d = self.instance.demand(r);
                nodes.clone().any(|n| fits(self.instance.capacity(n), &self.used[n], d))
            })
            .collect();
        let mut bound = fitting.len();
        for (m, cap) in pooled.iter().enumerate() {
            self.scratch.clear();
            self.scratch.extend(fitting.iter().map(|&r| self.instance.demand(r)[m]));
            self.scratch.sort_by(f64::total_cmp);
            let mut total = 0.0;
            let mut k = 0;
            for d in &self.scratch {
                total += d;
                if total > cap + 1e-9 {
                    break;
                }
                k += 1;
            }
            bound = bound.min(k);
        }
        bound
    }

    fn upper_bound(&mut self, depth: usize, accepted: usize) -> f64 {
        let optimistic = (accepted + self.acceptable_remaining(depth)) as f64;
        match self.objective {
            Objective::Greedy => optimistic,
            Objective::CriticalAware => {
                let omega = (1..self.used.len())
                    .map(|n| (*self.instance.capacity(n) - self.used[n]).min_component())
                    .fold(1.0f64, f64::min)
                    .max(0.0);
                optimistic + omega
            }
            Objective::CostAware => {
                let open = self.counts[1..].iter().filter(|c| **c > 0).count();
                optimistic - open as f64 / self.instance.num_real_nodes() as f64
            }
        }
    }

    fn prunable(&self, bound: f64) -> bool {
        match self.objective {
            // Slack sums accumulate in search order here and in rule order at
            // the leaves; keep branches whose bound is within rounding noise.
            Objective::CriticalAware => bound < self.best_value - 1e-9,
            _ => bound <= self.best_value,
        }
    }

    fn descend(&mut self, depth: usize, accepted: usize) {
        if self.out_of_budget() {
            return;
        }
        self.explored += 1;
        if depth == self.order.len() {
            let assignment = Assignment(self.current.clone());
            let value = objective_value(self.instance, &assignment, self.objective)
                .expect("search only builds feasible assignments");
            if value > self.best_value {
                self.best_value = value;
                self.best = assignment.0;
            }
            return;
        }
        let bound = self.upper_bound(depth, accepted);
        if self.prunable(bound) {
            return;
        }
        let rule = self.order[depth];
        let demand = *self.instance.demand(rule);
        let mut children: Vec<(f64, usize)> = (1..self.used.len())
            .filter(|&n| fits(self.instance.capacity(n), &self.used[n], &demand))
            .map(|n| (compute_critical(self.instance.capacity(n), &self.used[n], &demand), n))
            .collect();
        children.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, node) in children {
            let saved = self.used[node];
            self.used[node] = saved + demand;
            self.counts[node] += 1;
            self.current[rule] = Some(node);
            self.descend(depth + 1, accepted + 1);
            self.used[node] = saved;
            self.counts[node] -= 1;
            self.current[rule] = None;
            if self.aborted {
                return;
            }
        }
        self.descend(depth + 1, accepted);
    }
}

/// Depth-first branch-and-bound. Hitting a limit returns the incumbent with
/// `proven_optimal = false`.
pub fn solve_bnb(instance: &ProblemInstance, objective: Objective, limits: SearchLimits) -> OracleResult {
    let start = Instant::now();
    let reject_all = Assignment::all_rejected(instance.num_rules());
    let best_value = objective_value(instance, &reject_all, objective).expect("rejecting everything is feasible");
    let mut search = BranchAndBound {
        instance,
        objective,
        order: sort_rules_by_largest(instance, SortOrder::Descending),
        used: vec![ResourceVector::ZERO; instance.nodes().len()],
        counts: vec![0; instance.nodes().len()],
        current: vec![None; instance.num_rules()],
        best_value,
        best: reject_all.0,
        explored: 0,
        limits,
        start,
        aborted: false,
        scratch: Vec::new(),
    };
    search.descend(0, 0);
    let solution = Solution::evaluate(instance, Assignment(search.best)).expect("incumbent is feasible");
    OracleResult {
        solution,
        objective_value: search.best_value,
        proven_optimal: !search.aborted,
        nodes_explored: search.explored,
        wall_time: start.elapsed(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{generate_instance, GeneratorConfig};

    fn inst(caps: &[f64], demands: &[f64]) -> ProblemInstance {
        ProblemInstance::new(
            caps.iter().map(|c| ResourceVector::splat(*c)).collect(),
            demands.iter().map(|d| ResourceVector::splat(*d)).collect(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn objective_examples() {
        let i = inst(&[1.0; 4], &[0.1; 10]);
        let mut a = vec![None; 10];
        for slot in a.iter_mut().take(7) {
            *slot = Some(1);
        }
        assert_eq!(objective_value(&i, &Assignment(a), Objective::Greedy).unwrap(), 7.0);

        // 5 accepted, final omega 0.25: node 1 holds 0.75 of capacity 1.0
        let i = inst(&[1.0], &[0.15; 5]);
        let v = objective_value(&i, &Assignment(vec![Some(1); 5]), Objective::CriticalAware).unwrap();
        assert!((v - 5.25).abs() < 1e-12);

        let i = inst(&[1.0; 4], &[0.1; 6]);
        let a = Assignment(vec![Some(1), Some(1), Some(1), Some(2), Some(2), Some(2)]);
        assert_eq!(objective_value(&i, &a, Objective::CostAware).unwrap(), 5.5);

        let bad = inst(&[0.1], &[0.1, 0.1]);
        assert!(objective_value(&bad, &Assignment(vec![Some(1), Some(1)]), Objective::Greedy).is_err());
    }

    #[test]
    fn exhaustive_examples() {
        let i = inst(&[1.0], &[0.6, 0.5]);
        let r = solve_exhaustive(&i, Objective::Greedy).unwrap();
        assert_eq!(r.objective_value, 1.0);
        assert_eq!(r.solution.accepted(), 1);
        // lexicographically smallest optimum: reject rule 0, place rule 1
        assert_eq!(r.solution.assignment.0, vec![None, Some(1)]);

        let i = inst(&[1.0, 1.0], &[0.1, 0.1]);
        let r = solve_exhaustive(&i, Objective::CriticalAware).unwrap();
        let a = &r.solution.assignment.0;
        assert!(a[0].is_some() && a[1].is_some() && a[0] != a[1]);
        assert!((r.objective_value - 2.9).abs() < 1e-12);

        let empty = inst(&[0.5, 0.5], &[]);
        let r = solve_exhaustive(&empty, Objective::CostAware).unwrap();
        assert_eq!(r.objective_value, 0.0);
        assert!(r.proven_optimal);
    }

    #[test]
    fn exhaustive_critical_split_matches_enumeration() {
        // Oracle computed by hand over all 9 assignments of two 0.1-rules to
        // {reject, node 1, node 2}: splitting gives 2 + 0.9, stacking 2 + 0.8.
        let i = inst(&[1.0, 1.0], &[0.1, 0.1]);
        let mut values = Vec::new();
        for a in 0..3 {
            for b in 0..3 {
                let asg = Assignment(vec![(a > 0).then_some(a), (b > 0).then_some(b)]);
                values.push(objective_value(&i, &asg, Objective::CriticalAware).unwrap());
            }
        }
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((best - 2.9).abs() < 1e-12);
        assert_eq!(solve_exhaustive(&i, Objective::CriticalAware).unwrap().objective_value, best);
    }

    #[test]
    fn exhaustive_guard() {
        let i = generate_instance(&GeneratorConfig::sized(9, 8), 0).unwrap();
        assert!(matches!(solve_exhaustive(&i, Objective::Greedy), Err(OracleError::TooLarge { .. })));
    }

    #[test]
    fn bnb_matches_exhaustive() {
        for seed in 0..60 {
            let nodes = 1 + (seed % 3) as usize;
            let rules = 1 + (seed % 6) as usize;
            let i = generate_instance(&GeneratorConfig::sized(nodes, rules), seed).unwrap();
            for obj in Objective::ALL {
                let e = solve_exhaustive(&i, obj).unwrap();
                let b = solve_bnb(&i, obj, SearchLimits::unlimited());
                assert!(b.proven_optimal);
                assert_eq!(b.objective_value, e.objective_value, "seed {seed} {obj}");
            }
        }
    }

    #[test]
    fn bnb_limits() {
        let i = generate_instance(&GeneratorConfig::sized(3, 6), 5).unwrap();
        let limits = SearchLimits {
            max_nodes_explored: 1,
            max_wall_time: Duration::MAX,
        };
        let r = solve_bnb(&i, Objective::Greedy, limits);
        assert!(!r.proven_optimal);
        assert!(replay(&i, &r.solution.assignment).is_ok());
    }

    #[test]
    fn bnb_trivial_fit_at_first_descent() {
        let i = inst(&[1.0, 1.0], &[0.05; 8]);
        let r = solve_bnb(&i, Objective::Greedy, SearchLimits::unlimited());
        assert_eq!(r.objective_value, 8.0);
        assert!(r.proven_optimal);
        // first descent reaches the optimum; every sibling is then cut at its bound
        assert_eq!(r.nodes_explored, 1 + 3 * 8);
    }

    #[test]
    fn report_json_shape() {
        let i = inst(&[1.0], &[0.5, 0.6]);
        let r = solve_bnb(&i, Objective::Greedy, SearchLimits::unlimited());
        let v: serde_json::Value = serde_json::to_value(OracleReport::from(&r)).unwrap();
        for key in ["assignment", "kpis", "objective", "proven_optimal", "nodes_explored", "wall_ms"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn objective_parse() {
        for o in Objective::ALL {
            assert_eq!(o.label().parse::<Objective>().unwrap(), o);
        }
    }
}
