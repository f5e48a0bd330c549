use serde::{Deserialize, Serialize};

use crate::ad::NumericArray;
use crate::error::{Error, Result};

/// Stable identifier of an instance: owning bag and position within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceId {
    pub bag_id: u32,
    pub index: u32,
}

impl std::fmt::Display for InstanceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.bag_id, self.index)
    }
}

/// Borrowed view of one instance.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    pub id: InstanceId,
    pub features: &'a [f32],
    /// Ground truth, used for evaluation only.
    pub true_label: u8,
}

/// A bag of `n >= 1` instances stored as an `n × d` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub id: u32,
    pub label: u8,
    pub features: NumericArray<f32>,
    pub instance_labels: Vec<u8>,
}

/// Bag label from instance labels: 0 iff every instance is negative.
pub fn bag_label(instance_labels: &[u8]) -> Result<u8> {
    if instance_labels.is_empty() {
        return Err(Error::InvalidInput("bag_label of an empty bag".into()));
    }
    if let Some(bad) = instance_labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidInput(format!("instance label {bad} is not 0 or 1")));
    }
    Ok(u8::from(instance_labels.iter().any(|&l| l == 1)))
}

impl Bag {
    /// Builds a bag whose label is derived from its instance labels.
    pub fn new(id: u32, features: NumericArray<f32>, instance_labels: Vec<u8>) -> Result<Self> {
        let label = bag_label(&instance_labels)?;
        let bag = Self {
            id,
            label,
            features,
            instance_labels,
        };
        bag.validate()?;
        Ok(bag)
    }

    pub fn len(&self) -> usize {
        self.instance_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instance_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }

    pub fn instance(&self, j: usize) -> Instance<'_> {
        Instance {
            id: InstanceId {
                bag_id: self.id,
                index: j as u32,
            },
            features: self.features.row(j),
            true_label: self.instance_labels[j],
        }
    }

    pub fn instances(&self) -> impl Iterator<Item = Instance<'_>> {
        (0..self.len()).map(|j| self.instance(j))
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidInput(format!("bag {} has no instances", self.id)));
        }
        if self.features.shape().len() != 2 || self.features.rows() != self.len() {
            return Err(Error::InvalidInput(format!(
                "bag {}: feature shape {:?} does not match {} labels",
                self.id,
                self.features.shape(),
                self.len()
            )));
        }
        let expected = bag_label(&self.instance_labels)?;
        if expected != self.label {
            return Err(Error::InvalidInput(format!(
                "bag {}: label {} contradicts instance labels (expected {expected})",
                self.id, self.label
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bag_label_rule() {
        assert_eq!(bag_label(&[0, 0, 0]).unwrap(), 0);
        assert_eq!(bag_label(&[0, 1, 0]).unwrap(), 1);
        assert_eq!(bag_label(&[1, 1, 1]).unwrap(), 1);
        assert!(bag_label(&[]).is_err());
        assert!(bag_label(&[2]).is_err());
    }

    #[test]
    fn instance_ids_follow_position() {
        let f = NumericArray::matrix(2, 1, vec![0.5, 1.5]).unwrap();
        let bag = Bag::new(7, f, vec![0, 1]).unwrap();
        let ids: Vec<_> = bag.instances().map(|i| i.id.to_string()).collect();
        assert_eq!(ids, ["7:0", "7:1"]);
        assert_eq!(bag.instance(1).features, &[1.5]);
    }
}
