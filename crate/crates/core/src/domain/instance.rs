use serde::{Deserialize, Serialize};

use super::{DomainError, ResourceVector};

/// Index of the synthetic reject node in every node list.
pub const REJECT_NODE: usize = 0;

#[derive(Clone, Debug, PartialEq)]
pub struct RuleSpec {
    pub id: usize,
    pub demand: ResourceVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub id: usize,
    pub capacity: ResourceVector,
    pub is_reject: bool,
}

impl NodeSpec {
    pub fn reject() -> Self {
        NodeSpec {
            id: REJECT_NODE,
            capacity: ResourceVector::ZERO,
            is_reject: true,
        }
    }
}

/// A placement problem: nodes (reject node first) and the rules to place.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    nodes: Vec<NodeSpec>,
    rules: Vec<RuleSpec>,
    seed: u64,
}

impl ProblemInstance {
    /// Builds an instance from real-node capacities and rule demands; the
    /// reject node is prepended at index 0.
    pub fn new(
        capacities: Vec<ResourceVector>,
        demands: Vec<ResourceVector>,
        seed: u64,
    ) -> Result<Self, DomainError> {
        if capacities.is_empty() {
            return Err(DomainError::NoNodes);
        }
        for c in &capacities {
            ResourceVector::try_new(c.0)?;
        }
        for d in &demands {
            ResourceVector::try_new(d.0)?;
        }
        let nodes = std::iter::once(NodeSpec::reject())
            .chain(capacities.into_iter().enumerate().map(|(i, capacity)| NodeSpec {
                id: i + 1,
                capacity,
                is_reject: false,
            }))
            .collect();
        let rules = demands
            .into_iter()
            .enumerate()
            .map(|(id, demand)| RuleSpec { id, demand })
            .collect();
        Ok(ProblemInstance { nodes, rules, seed })
    }

    /// All nodes, reject node at index 0.
    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    /// Nodes excluding the reject node.
    pub fn real_nodes(&self) -> &[NodeSpec] {
        &self.nodes[1..]
    }

    pub fn rules(&self) -> &[RuleSpec] {
        &self.rules
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_real_nodes(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn num_rules(&self) -> usize {
        self.rules.len()
    }

    pub fn capacity(&self, node: usize) -> &ResourceVector {
        &self.nodes[node].capacity
    }

    pub fn demand(&self, rule: usize) -> &ResourceVector {
        &self.rules[rule].demand
    }

    /// Returns a copy with one extra real node appended.
    pub fn with_extra_node(&self, capacity: ResourceVector) -> Self {
        let mut out = self.clone();
        let id = out.nodes.len();
        out.nodes.push(NodeSpec {
            id,
            capacity,
            is_reject: false,
        });
        out
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            seed: self.seed,
            nodes: self.real_nodes().iter().map(|n| n.capacity.0).collect(),
            rules: self.rules.iter().map(|r| r.demand.0).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("instance serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, DomainError> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

/// On-disk instance layout. The reject node is implicit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub seed: u64,
    pub nodes: Vec<[f64; 3]>,
    pub rules: Vec<[f64; 3]>,
}

impl TryFrom<InstanceFile> for ProblemInstance {
    type Error = DomainError;

    fn try_from(file: InstanceFile) -> Result<Self, DomainError> {
        ProblemInstance::new(
            file.nodes.into_iter().map(ResourceVector).collect(),
            file.rules.into_iter().map(ResourceVector).collect(),
            file.seed,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reject_node_is_prepended() {
        let inst = ProblemInstance::new(
            vec![ResourceVector::splat(0.5), ResourceVector::splat(0.7)],
            vec![ResourceVector::splat(0.1)],
            3,
        )
        .unwrap();
        assert_eq!(inst.nodes().len(), 3);
        assert!(inst.nodes()[0].is_reject);
        assert!(inst.nodes()[0].capacity.is_zero());
        assert_eq!(inst.nodes().iter().filter(|n| n.is_reject).count(), 1);
        assert_eq!(inst.real_nodes()[1].id, 2);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let inst = ProblemInstance::new(
            vec![ResourceVector::new([0.123456789012345, 0.9, 1e-17])],
            vec![ResourceVector::new([0.01, 0.3, 0.2999999999999999])],
            u64::MAX,
        )
        .unwrap();
        let back = ProblemInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn rejects_empty_and_negative() {
        assert!(matches!(
            ProblemInstance::new(vec![], vec![], 0),
            Err(DomainError::NoNodes)
        ));
        assert!(ProblemInstance::new(vec![ResourceVector::new([0.1, -0.1, 0.0])], vec![], 0).is_err());
    }
}
