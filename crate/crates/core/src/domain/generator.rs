use rand::distributions::{Distribution, Uniform};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{DomainError, ProblemInstance, ResourceVector};
use crate::seed::{derive_seed, rng_from};

const POOL_STREAM: u64 = 0x706f_6f6c;
const NODE_STREAM: u64 = 0x6e6f_6465;
const PICK_STREAM: u64 = 0x7069_636b;

/// Instance distribution parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub num_nodes: usize,
    pub num_rules: usize,
    pub node_low: f64,
    pub node_high: f64,
    pub rule_low: f64,
    pub rule_high: f64,
    pub rule_pool_size: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_nodes: 10,
            num_rules: 20,
            node_low: 0.0,
            node_high: 1.0,
            rule_low: 0.01,
            rule_high: 0.30,
            rule_pool_size: 1000,
        }
    }
}

impl GeneratorConfig {
    pub fn sized(num_nodes: usize, num_rules: usize) -> Self {
        GeneratorConfig {
            num_nodes,
            num_rules,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let bad = |msg: String| Err(DomainError::Config(msg));
        if self.num_nodes == 0 {
            return bad("num_nodes must be at least 1".into());
        }
        for (name, lo, hi) in [
            ("node", self.node_low, self.node_high),
            ("rule", self.rule_low, self.rule_high),
        ] {
            if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo > hi {
                return bad(format!("{name} range [{lo}, {hi}] must satisfy 0 <= low <= high"));
            }
        }
        if self.rule_pool_size < self.num_rules {
            return bad(format!(
                "rule pool of {} cannot supply {} distinct rules",
                self.rule_pool_size, self.num_rules
            ));
        }
        Ok(())
    }
}

fn sample_vector<R: rand::Rng>(dist: &Uniform<f64>, rng: &mut R) -> ResourceVector {
    ResourceVector(std::array::from_fn(|_| dist.sample(rng)))
}

/// A seeded pool of rule demand vectors shared by many instances.
#[derive(Clone, Debug)]
pub struct InstanceGenerator {
    cfg: GeneratorConfig,
    pool: Vec<ResourceVector>,
}

impl InstanceGenerator {
    pub fn new(cfg: GeneratorConfig, pool_seed: u64) -> Result<Self, DomainError> {
        cfg.validate()?;
        let dist = Uniform::new_inclusive(cfg.rule_low, cfg.rule_high);
        let mut rng = rng_from(derive_seed(pool_seed, &[POOL_STREAM]));
        let pool = (0..cfg.rule_pool_size)
            .map(|_| sample_vector(&dist, &mut rng))
            .collect();
        Ok(InstanceGenerator { cfg, pool })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn pool(&self) -> &[ResourceVector] {
        &self.pool
    }

    /// Draws an instance with the configured sizes.
    pub fn instance(&self, seed: u64) -> ProblemInstance {
        self.instance_sized(self.cfg.num_nodes, self.cfg.num_rules, seed)
            .expect("configured sizes were validated")
    }

    /// Draws an instance with explicit sizes, reusing this generator's pool.
    pub fn instance_sized(
        &self,
        num_nodes: usize,
        num_rules: usize,
        seed: u64,
    ) -> Result<ProblemInstance, DomainError> {
        if num_nodes == 0 {
            return Err(DomainError::Config("num_nodes must be at least 1".into()));
        }
        if num_rules > self.pool.len() {
            return Err(DomainError::Config(format!(
                "rule pool of {} cannot supply {num_rules} distinct rules",
                self.pool.len()
            )));
        }
        let node_dist = Uniform::new_inclusive(self.cfg.node_low, self.cfg.node_high);
        let mut node_rng = rng_from(derive_seed(seed, &[NODE_STREAM]));
        let capacities = (0..num_nodes)
            .map(|_| sample_vector(&node_dist, &mut node_rng))
            .collect();

        let mut pick_rng = rng_from(derive_seed(seed, &[PICK_STREAM]));
        let demands = index::sample(&mut pick_rng, self.pool.len(), num_rules)
            .into_iter()
            .map(|i| self.pool[i])
            .collect();
        ProblemInstance::new(capacities, demands, seed)
    }
}

/// One-shot generation: builds a pool from `seed` and draws one instance from it.
pub fn generate_instance(cfg: &GeneratorConfig, seed: u64) -> Result<ProblemInstance, DomainError> {
    Ok(InstanceGenerator::new(cfg.clone(), seed)?.instance(seed))
}
