use std::fmt;
use std::ops::{Add, Index, Sub};

use serde::{Deserialize, Serialize};

use super::DomainError;

/// Number of resource kinds tracked per node and rule (CPU, RAM, storage).
pub const NUM_RESOURCES: usize = 3;

/// Absolute tolerance used by every capacity comparison.
pub const FIT_TOLERANCE: f64 = 1e-9;

/// A fixed-length vector of normalized resource quantities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceVector(pub [f64; NUM_RESOURCES]);

impl ResourceVector {
    pub const ZERO: ResourceVector = ResourceVector([0.0; NUM_RESOURCES]);

    pub const fn new(values: [f64; NUM_RESOURCES]) -> Self {
        ResourceVector(values)
    }

    pub const fn splat(v: f64) -> Self {
        ResourceVector([v; NUM_RESOURCES])
    }

    /// Builds a vector after checking every component is finite and non-negative.
    pub fn try_new(values: [f64; NUM_RESOURCES]) -> Result<Self, DomainError> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(DomainError::InvalidResource(values));
        }
        Ok(ResourceVector(values))
    }

    pub fn values(&self) -> &[f64; NUM_RESOURCES] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }

    /// Largest component; the sort key for rule size.
    pub fn max_component(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_component(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Component-wise `self <= other` within [`FIT_TOLERANCE`].
    pub fn le_within_tolerance(&self, other: &ResourceVector) -> bool {
        self.0
            .iter()
            .zip(other.0.iter())
            .all(|(a, b)| *a <= *b + FIT_TOLERANCE)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

impl Index<usize> for ResourceVector {
    type Output = f64;

    fn index(&self, idx: usize) -> &f64 {
        &self.0[idx]
    }
}

impl Add for ResourceVector {
    type Output = ResourceVector;

    fn add(self, rhs: ResourceVector) -> ResourceVector {
        ResourceVector(std::array::from_fn(|m| self.0[m] + rhs.0[m]))
    }
}

impl Sub for ResourceVector {
    type Output = ResourceVector;

    fn sub(self, rhs: ResourceVector) -> ResourceVector {
        ResourceVector(std::array::from_fn(|m| self.0[m] - rhs.0[m]))
    }
}

impl From<[f64; NUM_RESOURCES]> for ResourceVector {
    fn from(values: [f64; NUM_RESOURCES]) -> Self {
        ResourceVector(values)
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.4}, {:.4}, {:.4}]", self.0[0], self.0[1], self.0[2])
    }
}

/// Minimum residual capacity over resources, `min_m(capacity_m - used_m)`.
///
/// Fails when `used` exceeds `capacity` in any component (beyond the fit
/// tolerance). Slack within the tolerance band is clamped to zero.
pub fn critical_slack(capacity: &ResourceVector, used: &ResourceVector) -> Result<f64, DomainError> {
    if !used.le_within_tolerance(capacity) {
        return Err(DomainError::OverCapacity {
            capacity: *capacity,
            used: *used,
        });
    }
    Ok((*capacity - *used).min_component().max(0.0))
}

/// Smallest critical slack over a set of `(capacity, used)` pairs.
///
/// The caller is responsible for leaving the reject node out.
pub fn global_critical<'a, I>(nodes: I) -> Result<f64, DomainError>
where
    I: IntoIterator<Item = (&'a ResourceVector, &'a ResourceVector)>,
{
    let mut best: Option<f64> = None;
    for (cap, used) in nodes {
        let slack = critical_slack(cap, used)?;
        best = Some(best.map_or(slack, |b: f64| b.min(slack)));
    }
    best.ok_or(DomainError::EmptyNodeSet)
}

/// True iff `used + demand <= capacity` in every component, within tolerance.
pub fn fits(capacity: &ResourceVector, used: &ResourceVector, demand: &ResourceVector) -> bool {
    (0..NUM_RESOURCES).all(|m| used[m] + demand[m] <= capacity[m] + FIT_TOLERANCE)
}

/// `min_m(capacity_m - used_m - demand_m)`; negative when the demand does not fit.
pub fn compute_critical(capacity: &ResourceVector, used: &ResourceVector, demand: &ResourceVector) -> f64 {
    (0..NUM_RESOURCES)
        .map(|m| capacity[m] - used[m] - demand[m])
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rv(a: f64, b: f64, c: f64) -> ResourceVector {
        ResourceVector::new([a, b, c])
    }

    #[test]
    fn slack_examples() {
        let s = critical_slack(&rv(0.5, 0.5, 0.5), &rv(0.2, 0.1, 0.3)).unwrap();
        assert!((s - 0.2).abs() < 1e-12);
        assert_eq!(critical_slack(&ResourceVector::splat(1.0), &ResourceVector::ZERO).unwrap(), 1.0);
        assert_eq!(critical_slack(&ResourceVector::splat(0.3), &ResourceVector::splat(0.3)).unwrap(), 0.0);
    }

    #[test]
    fn slack_rejects_overuse() {
        let err = critical_slack(&ResourceVector::splat(0.3), &rv(0.1, 0.4, 0.1)).unwrap_err();
        assert!(matches!(err, DomainError::OverCapacity { .. }));
    }

    #[test]
    fn global_critical_examples() {
        let caps = [ResourceVector::splat(0.5), ResourceVector::splat(1.0)];
        let used = [ResourceVector::splat(0.3), ResourceVector::splat(0.3)];
        let g = global_critical(caps.iter().zip(used.iter())).unwrap();
        assert!((g - 0.2).abs() < 1e-12);

        let single = global_critical([(&ResourceVector::splat(0.4), &ResourceVector::ZERO)]).unwrap();
        assert_eq!(single, 0.4);

        let fresh = [ResourceVector::splat(1.0); 4];
        let zeros = [ResourceVector::ZERO; 4];
        assert_eq!(global_critical(fresh.iter().zip(zeros.iter())).unwrap(), 1.0);

        assert!(matches!(
            global_critical(std::iter::empty()),
            Err(DomainError::EmptyNodeSet)
        ));
    }

    #[test]
    fn fits_examples() {
        let cap = ResourceVector::splat(0.5);
        let used = ResourceVector::splat(0.3);
        assert!(fits(&cap, &used, &ResourceVector::splat(0.2)));
        assert!(!fits(&cap, &used, &rv(0.21, 0.1, 0.1)));
        assert!(!fits(&ResourceVector::ZERO, &ResourceVector::ZERO, &rv(0.01, 0.0, 0.0)));
    }

    #[test]
    fn compute_critical_examples() {
        let v = compute_critical(&ResourceVector::splat(1.0), &ResourceVector::ZERO, &rv(0.3, 0.2, 0.1));
        assert!((v - 0.7).abs() < 1e-12);
        assert!(compute_critical(&ResourceVector::splat(0.5), &rv(0.4, 0.0, 0.0), &rv(0.2, 0.0, 0.0)) < 0.0);
        let cap = rv(0.9, 0.7, 0.8);
        let used = rv(0.1, 0.3, 0.2);
        assert_eq!(
            compute_critical(&cap, &used, &ResourceVector::ZERO),
            critical_slack(&cap, &used).unwrap()
        );
    }

    fn unit_vec() -> impl Strategy<Value = ResourceVector> {
        prop::array::uniform3(0.0f64..=1.0).prop_map(ResourceVector)
    }

    proptest! {
        #[test]
        fn slack_monotone_in_used(cap in unit_vec(), a in unit_vec(), b in unit_vec()) {
            // used1 = cap * a, used2 = used1 + (cap - used1) * b, so used1 <= used2 <= cap.
            let used1 = ResourceVector(std::array::from_fn(|m| cap[m] * a[m]));
            let used2 = ResourceVector(std::array::from_fn(|m| used1[m] + (cap[m] - used1[m]) * b[m]));
            let s1 = critical_slack(&cap, &used1).unwrap();
            let s2 = critical_slack(&cap, &used2).unwrap();
            prop_assert!(s2 <= s1 + 1e-12);
        }

        #[test]
        fn fitting_keeps_slack_nonnegative(cap in unit_vec(), used_frac in unit_vec(), demand in prop::array::uniform3(0.0f64..0.5)) {
            let used = ResourceVector(std::array::from_fn(|m| cap[m] * used_frac[m]));
            let demand = ResourceVector(demand);
            if fits(&cap, &used, &demand) {
                prop_assert!(critical_slack(&cap, &(used + demand)).unwrap() >= 0.0);
            }
        }
    }
}
