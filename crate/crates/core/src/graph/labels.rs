use std::collections::HashSet;

use crate::error::{Error, Result};

/// Per-node class labels with ordered train/validation/test index lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelInfo {
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

impl LabelInfo {
    pub fn new(
        labels: Vec<usize>,
        num_classes: usize,
        train_idx: Vec<usize>,
        val_idx: Vec<usize>,
        test_idx: Vec<usize>,
    ) -> Result<Self> {
        let info = Self {
            labels,
            num_classes,
            train_idx,
            val_idx,
            test_idx,
        };
        info.validate()?;
        Ok(info)
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if let Some((i, &c)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &c)| c >= self.num_classes)
        {
            return Err(Error::InvalidArgument(format!(
                "node {i} has label {c} but only {} classes",
                self.num_classes
            )));
        }
        if self.train_idx.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        let mut seen = HashSet::new();
        for (name, idx) in [
            ("train", &self.train_idx),
            ("val", &self.val_idx),
            ("test", &self.test_idx),
        ] {
            for &i in idx {
                if i >= n {
                    return Err(Error::InvalidArgument(format!(
                        "{name} index {i} out of range for {n} nodes"
                    )));
                }
                if !seen.insert(i) {
                    return Err(Error::InvalidArgument(format!(
                        "index {i} appears twice across splits"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Training-set count per class.
    pub fn train_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &i in &self.train_idx {
            counts[self.labels[i]] += 1;
        }
        counts
    }
}

/// Keeps, for each class, the first `per_class` training indices in their
/// original order. Validation and test lists are unchanged.
pub fn subset_train_labels(info: &LabelInfo, per_class: usize) -> Result<LabelInfo> {
    if per_class == 0 {
        return Err(Error::InvalidArgument("per_class must be positive".into()));
    }
    let counts = info.train_counts();
    if let Some((c, &have)) = counts.iter().enumerate().find(|(_, &k)| k < per_class) {
        return Err(Error::InvalidArgument(format!(
            "class {c} has {have} training labels, fewer than {per_class}"
        )));
    }
    let mut taken = vec![0usize; info.num_classes];
    let train_idx = info
        .train_idx
        .iter()
        .copied()
        .filter(|&i| {
            let c = info.labels[i];
            taken[c] += 1;
            taken[c] <= per_class
        })
        .collect();
    Ok(LabelInfo {
        train_idx,
        ..info.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info() -> LabelInfo {
        // a:c0, b:c1, c:c0, d:c1 at nodes 0..4, val 4, test 5
        LabelInfo::new(
            vec![0, 1, 0, 1, 0, 1],
            2,
            vec![0, 1, 2, 3],
            vec![4],
            vec![5],
        )
        .unwrap()
    }

    #[test]
    fn first_per_class_in_order() {
        let s = subset_train_labels(&info(), 1).unwrap();
        assert_eq!(s.train_idx, vec![0, 1]);
        assert_eq!(s.val_idx, vec![4]);
        assert_eq!(s.test_idx, vec![5]);
    }

    #[test]
    fn full_count_is_identity() {
        let i = info();
        assert_eq!(subset_train_labels(&i, 2).unwrap(), i);
    }

    #[test]
    fn too_few_labels() {
        assert!(subset_train_labels(&info(), 3).is_err());
    }

    #[test]
    fn validation_errors() {
        assert!(LabelInfo::new(vec![0, 2], 2, vec![0], vec![], vec![]).is_err());
        assert!(LabelInfo::new(vec![0, 1], 2, vec![], vec![], vec![]).is_err());
        assert!(LabelInfo::new(vec![0, 1], 2, vec![0], vec![0], vec![]).is_err());
        assert!(LabelInfo::new(vec![0, 1], 2, vec![0], vec![5], vec![]).is_err());
    }
}
