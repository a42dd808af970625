//! Non-increasing summable mass sequences with the l1 metric.

use crate::error::{FragError, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Relative size below which an entry is treated as zero when rearranging.
pub const RELATIVE_ZERO: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MassPartition {
    masses: Vec<f64>,
}

impl MassPartition {
    /// The dust state.
    pub fn zero() -> Self {
        Self { masses: Vec::new() }
    }

    /// The single unit block.
    pub fn unit() -> Self {
        Self { masses: vec![1.0] }
    }

    /// Decreasing rearrangement of arbitrary non-negative values.
    pub fn rearrange(values: &[f64]) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(FragError::InvalidArgument(format!("mass values must be finite and non-negative, got {v}")));
        }
        Ok(Self::from_nonnegative(values.to_vec()))
    }

    /// Same as `rearrange` for values already known to be valid.
    pub(crate) fn from_nonnegative(mut v: Vec<f64>) -> Self {
        // stable sort keeps ties in input order
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let lead = v.first().copied().unwrap_or(0.0);
        let cut = lead * RELATIVE_ZERO;
        while let Some(&last) = v.last() {
            if last > cut && last > 0.0 {
                break;
            }
            v.pop();
        }
        Self { masses: v }
    }

    /// Validate an already ordered list.
    pub fn from_sorted(masses: Vec<f64>) -> Result<Self> {
        for w in masses.windows(2) {
            if w[0] < w[1] {
                return Err(FragError::InvalidArgument(format!("masses not non-increasing: {} < {}", w[0], w[1])));
            }
        }
        if masses.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(FragError::InvalidArgument("stored masses must be positive and finite".into()));
        }
        Ok(Self { masses })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn largest(&self) -> f64 {
        self.masses.first().copied().unwrap_or(0.0)
    }

    /// Entry `i`, with implicit trailing zeros.
    pub fn get(&self, i: usize) -> f64 {
        self.masses.get(i).copied().unwrap_or(0.0)
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        let n = self.len().max(other.len());
        (0..n).map(|i| (self.get(i) - other.get(i)).abs()).sum()
    }

    pub fn merge(parts: &[MassPartition]) -> Self {
        let all: Vec<f64> = parts.iter().flat_map(|p| p.masses.iter().copied()).collect();
        Self::from_nonnegative(all)
    }

    pub fn scale(&self, x: f64) -> Result<Self> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(FragError::InvalidArgument(format!("scale factor must be positive, got {x}")));
        }
        Ok(Self { masses: self.masses.iter().map(|m| m * x).collect() })
    }

    /// Masses strictly above `threshold`.
    pub fn count_above(&self, threshold: f64) -> usize {
        self.masses.iter().take_while(|m| **m > threshold).count()
    }
}

pub fn l1_distance(a: &MassPartition, b: &MassPartition) -> f64 {
    a.l1_distance(b)
}

impl Serialize for MassPartition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.masses.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MassPartition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        MassPartition::from_sorted(v).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mp(v: &[f64]) -> MassPartition {
        MassPartition::rearrange(v).unwrap()
    }

    #[test]
    fn rearrange_examples() {
        assert_eq!(mp(&[0.2, 0.5, 0.3]).masses(), &[0.5, 0.3, 0.2]);
        assert!(mp(&[]).is_empty());
        assert_eq!(mp(&[0.5, 0.0, 0.5]).masses(), &[0.5, 0.5]);
        assert!(MassPartition::rearrange(&[0.1, -0.2]).is_err());
        assert!(MassPartition::rearrange(&[f64::NAN]).is_err());
    }

    #[test]
    fn tiny_relative_entries_dropped() {
        assert_eq!(mp(&[1.0, 1e-17, 0.25]).masses(), &[1.0, 0.25]);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(mp(&[1.0]).l1_distance(&mp(&[1.0])), 0.0);
        assert_eq!(mp(&[1.0]).l1_distance(&MassPartition::zero()), 1.0);
        assert!((mp(&[0.5, 0.25]).l1_distance(&mp(&[0.4])) - 0.35).abs() < 1e-15);
    }

    #[test]
    fn merge_and_scale_examples() {
        let m = MassPartition::merge(&[mp(&[0.5]), mp(&[0.3, 0.2])]);
        assert_eq!(m.masses(), &[0.5, 0.3, 0.2]);
        assert!(MassPartition::merge(&[mp(&[]), mp(&[])]).is_empty());
        assert_eq!(MassPartition::merge(&[mp(&[0.4, 0.1]), mp(&[0.4])]).masses(), &[0.4, 0.4, 0.1]);
        assert_eq!(mp(&[0.5, 0.25]).scale(2.0).unwrap().masses(), &[1.0, 0.5]);
        let p = mp(&[0.3, 0.1]);
        assert_eq!(p.scale(1.0).unwrap(), p);
        assert!(mp(&[]).scale(0.1).unwrap().is_empty());
        assert!(p.scale(0.0).is_err());
        assert!(p.scale(-1.0).is_err());
    }

    #[test]
    fn json_roundtrip_validates_order() {
        let p = mp(&[0.25, 0.5]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "[0.5,0.25]");
        let back: MassPartition = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<MassPartition>("[0.1,0.2]").is_err());
    }

    #[test]
    fn permutation_leaves_output_unchanged() {
        let a = mp(&[0.1, 0.4, 0.4, 0.05]);
        let b = mp(&[0.4, 0.05, 0.1, 0.4]);
        assert_eq!(a, b);
    }
}
