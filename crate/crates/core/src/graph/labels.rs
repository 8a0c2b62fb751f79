use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Node labels in `0..num_classes`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::InvalidConfig(format!(
                "label {l} at node {i} is not below num_classes = {num_classes}"
            )));
        }
        Ok(Self { labels, num_classes })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn select(&self, idx: &[usize]) -> LabelVector {
        LabelVector {
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

/// Disjoint train / validation / test node sets.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SplitMasks {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitMasks {
    pub fn new(train: Vec<usize>, val: Vec<usize>, test: Vec<usize>, num_nodes: usize) -> Result<Self> {
        let s = Self { train, val, test };
        s.validate(num_nodes)?;
        Ok(s)
    }

    /// Every node trains, nothing is held out.
    pub fn all_train(num_nodes: usize) -> Self {
        Self {
            train: (0..num_nodes).collect(),
            val: Vec::new(),
            test: Vec::new(),
        }
    }

    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::InvalidConfig("training split is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for (name, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &i in set.iter() {
                if i >= num_nodes {
                    return Err(Error::InvalidConfig(format!(
                        "{name} split index {i} out of range for {num_nodes} nodes"
                    )));
                }
                if !seen.insert(i) {
                    return Err(Error::InvalidConfig(format!(
                        "node {i} appears twice across splits ({name})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Nodes of a mask grouped by class, with class ratios.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPartition {
    members: Vec<Vec<usize>>,
    ratios: Vec<f64>,
}

impl ClassPartition {
    pub fn num_classes(&self) -> usize {
        self.members.len()
    }

    /// Nodes of class `c`, ascending.
    pub fn members(&self, c: usize) -> &[usize] {
        &self.members[c]
    }

    pub fn ratio(&self, c: usize) -> f64 {
        self.ratios[c]
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn counts(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// Classes with at least one member.
    pub fn nonempty_classes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.members.len()).filter(|&c| !self.members[c].is_empty())
    }
}

/// `V_c = {i in mask : y_i = c}` and `r_c = |V_c| / |mask|`.
pub fn class_partition(y: &LabelVector, mask: &[usize]) -> Result<ClassPartition> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut members = vec![Vec::new(); y.num_classes()];
    for &i in mask {
        if i >= y.len() {
            return Err(Error::InvalidConfig(format!(
                "mask index {i} out of range for {} labels",
                y.len()
            )));
        }
        members[y.get(i)].push(i);
    }
    for m in &mut members {
        m.sort_unstable();
    }
    let total = mask.len() as f64;
    let ratios = members.iter().map(|m| m.len() as f64 / total).collect();
    Ok(ClassPartition { members, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_counts() {
        let y = LabelVector::new(vec![0, 0, 1], 2).unwrap();
        let p = class_partition(&y, &[0, 1, 2]).unwrap();
        assert_eq!(p.members(0), &[0, 1]);
        assert_eq!(p.members(1), &[2]);
        assert!((p.ratio(0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.ratio(1) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_mask() {
        let y = LabelVector::new(vec![1, 1, 0], 2).unwrap();
        let p = class_partition(&y, &[0, 1]).unwrap();
        assert_eq!(p.nonempty_classes().collect::<Vec<_>>(), vec![1]);
        assert_eq!(p.ratio(1), 1.0);
    }

    #[test]
    fn empty_mask_rejected() {
        let y = LabelVector::new(vec![0, 1], 2).unwrap();
        assert!(matches!(class_partition(&y, &[]), Err(Error::EmptyMask)));
    }

    #[test]
    fn label_invariants() {
        assert!(LabelVector::new(vec![0, 2], 2).is_err());
        assert!(LabelVector::new(vec![0], 1).is_err());
    }

    #[test]
    fn splits_must_be_disjoint() {
        assert!(SplitMasks::new(vec![0], vec![0], vec![], 2).is_err());
        assert!(SplitMasks::new(vec![], vec![0], vec![], 2).is_err());
        assert!(SplitMasks::new(vec![0], vec![1], vec![2], 2).is_err());
        assert!(SplitMasks::new(vec![0], vec![1], vec![], 2).is_ok());
    }
}
