//! Paired benchmark sweeps over instance sizes, with gap, timing and
//! plot-data reports.

mod report;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{gap_table, plot_data, timing_report, GapRow, TimingRow};

use crate::domain::{generate_instance, GeneratorConfig, ProblemInstance};
use crate::env::RewardKind;
use crate::heuristics::{random_insertion, CriticalVariant};
use crate::model::{Actor, ModelError, SelectMode};
use crate::oracle::{objective_value, solve_bnb, Objective, SearchLimits};
use crate::seed::{derive_seed, rng_from};
use crate::solution::Solution;
use crate::trainer::{agent_solve, TrainError};

const RANDOM_KEY: u64 = 0x5241_4e44;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Agent,
    Heuristic(CriticalVariant),
    Random,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Agent,
        Method::Heuristic(CriticalVariant::DrDc),
        Method::Heuristic(CriticalVariant::DrAc),
        Method::Heuristic(CriticalVariant::ArDc),
        Method::Heuristic(CriticalVariant::ArAc),
        Method::Random,
        Method::Oracle,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Agent => "agent",
            Method::Heuristic(v) => v.label(),
            Method::Random => "random",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method {s:?} (expected agent, DR-DC, DR-AC, AR-DC, AR-AC, random or oracle)"))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub node_sizes: Vec<usize>,
    pub rule_sizes: Vec<usize>,
    pub instances_per_cell: usize,
    pub agent_seeds: usize,
    pub methods: Vec<Method>,
    pub oracle_time_limit_ms: u64,
    /// Optional cap on branch-and-bound nodes; unlike the time limit it
    /// keeps oracle rows reproducible.
    pub oracle_node_limit: Option<u64>,
    pub objective: Objective,
    pub seed: u64,
    /// Record solve times. Off zeroes `solve_ms` so rows are byte-identical
    /// across runs.
    pub record_timing: bool,
    /// Run instances on the rayon pool. Timing runs should turn this off.
    pub parallel: bool,
    pub generator: GeneratorConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            node_sizes: vec![10, 20, 30, 40, 50],
            rule_sizes: (1..=10).map(|i| i * 10).collect(),
            instances_per_cell: 100,
            agent_seeds: 3,
            methods: Method::ALL.to_vec(),
            oracle_time_limit_ms: 60_000,
            oracle_node_limit: None,
            objective: Objective::Greedy,
            seed: 0,
            record_timing: true,
            parallel: true,
            generator: GeneratorConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn desk() -> Self {
        BenchConfig {
            instances_per_cell: 20,
            oracle_time_limit_ms: 2000,
            ..BenchConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.node_sizes.is_empty() || self.rule_sizes.is_empty() {
            return bad("node_sizes and rule_sizes must be non-empty");
        }
        if self.node_sizes.contains(&0) {
            return bad("node sizes must be positive");
        }
        if self.instances_per_cell == 0 {
            return bad("instances_per_cell must be at least 1");
        }
        Ok(())
    }

    fn limits(&self) -> SearchLimits {
        let mut limits = SearchLimits::with_time(self.oracle_time_limit_ms);
        if let Some(n) = self.oracle_node_limit {
            limits.max_nodes_explored = n;
        }
        limits
    }

    /// Seed of instance `index` in cell `(nodes, rules)`; independent of the
    /// method list.
    pub fn instance_seed(&self, nodes: usize, rules: usize, index: usize) -> u64 {
        derive_seed(self.seed, &[nodes as u64, rules as u64, index as u64])
    }

    pub fn instance(&self, nodes: usize, rules: usize, index: usize) -> Result<ProblemInstance, BenchError> {
        let cfg = GeneratorConfig {
            num_nodes: nodes,
            num_rules: rules,
            rule_pool_size: self.generator.rule_pool_size.max(rules),
            ..self.generator.clone()
        };
        generate_instance(&cfg, self.instance_seed(nodes, rules, index)).map_err(|e| BenchError::Config(e.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid benchmark config: {0}")]
    Config(String),
    #[error("reference rows missing for: {}", .0.join(", "))]
    MissingPairs(Vec<String>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub num_nodes: usize,
    pub num_rules: usize,
    pub instance_seed: u64,
    pub rejection_rate: f64,
    pub omega_max: f64,
    pub empty_nodes: f64,
    pub objective_value: f64,
    pub solve_ms: f64,
    pub proven_optimal: Option<bool>,
}

struct Outcome {
    solution: Solution,
    millis: f64,
    proven: Option<bool>,
}

fn timed(f: impl FnOnce() -> Result<(Solution, Option<bool>), BenchError>) -> Result<Outcome, BenchError> {
    let start = Instant::now();
    let (solution, proven) = f()?;
    Ok(Outcome {
        solution,
        millis: start.elapsed().as_secs_f64() * 1e3,
        proven,
    })
}

fn run_method(cfg: &BenchConfig, method: Method, instance: &ProblemInstance, agents: &[Actor<f32>]) -> Result<BenchRow, BenchError> {
    let objective = cfg.objective;
    let row = |o: &Outcome| -> Result<BenchRow, BenchError> {
        Ok(BenchRow {
            method: method.label().to_string(),
            num_nodes: instance.num_real_nodes(),
            num_rules: instance.num_rules(),
            instance_seed: instance.seed(),
            rejection_rate: o.solution.kpis.rejection_rate,
            omega_max: o.solution.kpis.omega_max,
            empty_nodes: o.solution.kpis.empty_nodes as f64,
            objective_value: objective_value(instance, &o.solution.assignment, objective)
                .map_err(|e| BenchError::Config(e.to_string()))?,
            solve_ms: if cfg.record_timing { o.millis } else { 0.0 },
            proven_optimal: o.proven,
        })
    };
    match method {
        Method::Heuristic(v) => row(&timed(|| Ok((v.solve(instance), None)))?),
        Method::Random => row(&timed(|| Ok((random_insertion(instance, derive_seed(cfg.seed, &[RANDOM_KEY])), None)))?),
        Method::Oracle => row(&timed(|| {
            let r = solve_bnb(instance, objective, cfg.limits());
            Ok((r.solution, Some(r.proven_optimal)))
        })?),
        Method::Agent => {
            // One row averaging every agent, as the reported agent figures are
            // means over independently trained seeds.
            let kind = RewardKind::from(objective);
            let mut rows = Vec::with_capacity(agents.len());
            for actor in agents {
                let o = timed(|| {
                    let s = agent_solve(instance, actor, kind, SelectMode::GreedyArgmax, &mut rng_from(0))?;
                    Ok((s, None))
                })?;
                rows.push(row(&o)?);
            }
            let n = rows.len() as f64;
            let mut mean = rows[0].clone();
            mean.rejection_rate = rows.iter().map(|r| r.rejection_rate).sum::<f64>() / n;
            mean.omega_max = rows.iter().map(|r| r.omega_max).sum::<f64>() / n;
            mean.empty_nodes = rows.iter().map(|r| r.empty_nodes).sum::<f64>() / n;
            mean.objective_value = rows.iter().map(|r| r.objective_value).sum::<f64>() / n;
            mean.solve_ms = rows.iter().map(|r| r.solve_ms).sum::<f64>() / n;
            Ok(mean)
        }
    }
}

/// Loads agent checkpoints and checks they match the objective's features.
pub fn load_agents(paths: &[PathBuf], objective: Objective) -> Result<Vec<Actor<f32>>, BenchError> {
    let dim = RewardKind::from(objective).node_feature_dim();
    paths
        .iter()
        .map(|p| {
            if !p.is_file() {
                return Err(BenchError::Config(format!("checkpoint {} does not exist", p.display())));
            }
            let actor = Actor::<f32>::load(p)?;
            if actor.config().node_feature_dim != dim {
                return Err(BenchError::Config(format!(
                    "{} was trained with {} node features, objective {objective} needs {dim}",
                    p.display(),
                    actor.config().node_feature_dim
                )));
            }
            Ok(actor)
        })
        .collect()
}

/// Runs every method on every instance of the sweep. Rows come out ordered
/// by node size, rule size, instance index and then method order.
pub fn run_benchmark(cfg: &BenchConfig, checkpoints: &[PathBuf]) -> Result<Vec<BenchRow>, BenchError> {
    cfg.validate()?;
    let agents = if cfg.methods.contains(&Method::Agent) {
        if checkpoints.len() != cfg.agent_seeds || checkpoints.is_empty() {
            return Err(BenchError::Config(format!(
                "agent method needs {} checkpoint(s), got {}",
                cfg.agent_seeds.max(1),
                checkpoints.len()
            )));
        }
        load_agents(checkpoints, cfg.objective)?
    } else {
        Vec::new()
    };
    run_with_agents(cfg, &agents)
}

/// Like [`run_benchmark`] with agents already in memory.
pub fn run_with_agents(cfg: &BenchConfig, agents: &[Actor<f32>]) -> Result<Vec<BenchRow>, BenchError> {
    cfg.validate()?;
    if cfg.methods.contains(&Method::Agent) && agents.is_empty() {
        return Err(BenchError::Config("agent method needs at least one checkpoint".into()));
    }
    let tasks: Vec<(usize, usize, usize)> = cfg
        .node_sizes
        .iter()
        .flat_map(|&n| cfg.rule_sizes.iter().flat_map(move |&r| (0..cfg.instances_per_cell).map(move |i| (n, r, i))))
        .collect();
    let run = |&(n, r, i): &(usize, usize, usize)| -> Result<Vec<BenchRow>, BenchError> {
        let instance = cfg.instance(n, r, i)?;
        cfg.methods.iter().map(|m| run_method(cfg, *m, &instance, agents)).collect()
    };
    let per_task: Vec<Vec<BenchRow>> = if cfg.parallel {
        tasks.par_iter().map(run).collect::<Result<_, _>>()?
    } else {
        tasks.iter().map(run).collect::<Result<_, _>>()?
    };
    Ok(per_task.into_iter().flatten().collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowFormat {
    Csv,
    Jsonl,
}

impl RowFormat {
    /// `.jsonl` / `.json` select JSONL; anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => RowFormat::Jsonl,
            _ => RowFormat::Csv,
        }
    }
}

pub fn emit(rows: &[BenchRow], format: RowFormat, path: &Path) -> Result<(), BenchError> {
    match format {
        RowFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        RowFormat::Jsonl => {
            let mut out = String::new();
            for row in rows {
                out.push_str(&serde_json::to_string(row)?);
                out.push('\n');
            }
            std::fs::write(path, out)?;
        }
    }
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<BenchRow>, BenchError> {
    match RowFormat::from_path(path) {
        RowFormat::Csv => {
            let mut r = csv::Reader::from_path(path)?;
            Ok(r.deserialize().collect::<Result<_, _>>()?)
        }
        RowFormat::Jsonl => std::fs::read_to_string(path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(BenchError::from))
            .collect(),
    }
}

#[cfg(test)]
mod tests;
