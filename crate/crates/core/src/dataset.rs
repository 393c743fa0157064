//! Sample collections: a feature matrix plus partially revealed class labels.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Soft labels or seed indicators, one row per sample and one column per class.
pub type LabelMatrix = DMatrix<f64>;

/// A partially labeled dataset: `n` samples of dimension `d`, each either
/// unlabeled (`None`) or assigned a class index below `num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: Vec<Option<usize>>,
    num_classes: usize,
}

impl Dataset {
    /// Builds a dataset, validating shapes and label ranges.
    pub fn new(
        features: DMatrix<f64>,
        labels: Vec<Option<usize>>,
        num_classes: usize,
    ) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::InvalidParameter(
                "feature matrix must be at least 1x1".into(),
            ));
        }
        if labels.len() != features.nrows() {
            return Err(Error::InvalidParameter(format!(
                "label vector length {} does not match {} samples",
                labels.len(),
                features.nrows()
            )));
        }
        if num_classes < 2 {
            return Err(Error::InvalidParameter(
                "num_classes must be at least 2".into(),
            ));
        }
        if let Some(bad) = labels.iter().flatten().find(|&&c| c >= num_classes) {
            return Err(Error::InvalidParameter(format!(
                "class index {bad} out of range for {num_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "features must be finite".into(),
            ));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn label_of(&self, i: usize) -> Option<usize> {
        self.labels[i]
    }

    /// Euclidean distance between samples `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        (self.features.row(i) - self.features.row(j)).norm()
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i].is_some()).collect()
    }

    pub fn unlabeled_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i].is_none()).collect()
    }

    /// Labeled sample indices of class `c`, in ascending order.
    pub fn class_members(&self, c: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == Some(c)).collect()
    }

    /// Labeled indices grouped per class (`result[c]` lists class `c`).
    pub fn class_sets(&self) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); self.num_classes];
        for (i, label) in self.labels.iter().enumerate() {
            if let Some(c) = label {
                sets[*c].push(i);
            }
        }
        sets
    }

    /// One-hot seed matrix: labeled rows carry a 1 in their class column,
    /// unlabeled rows are all zero.
    pub fn seed_matrix(&self) -> LabelMatrix {
        let mut seeds = DMatrix::zeros(self.n(), self.num_classes);
        for (i, label) in self.labels.iter().enumerate() {
            if let Some(c) = label {
                seeds[(i, *c)] = 1.0;
            }
        }
        seeds
    }

    /// Signed seed matrix: per class column, +1 for samples labeled with that
    /// class, -1 for samples labeled with any other class, 0 for unlabeled.
    pub fn signed_seed_matrix(&self) -> LabelMatrix {
        let mut seeds = DMatrix::zeros(self.n(), self.num_classes);
        for (i, label) in self.labels.iter().enumerate() {
            if let Some(c) = label {
                for col in 0..self.num_classes {
                    seeds[(i, col)] = if col == *c { 1.0 } else { -1.0 };
                }
            }
        }
        seeds
    }

    /// Errors unless at least one sample is labeled.
    pub fn require_labels(&self) -> Result<()> {
        if self.labels.iter().all(|l| l.is_none()) {
            return Err(Error::MissingLabels(
                "at least one labeled sample is required".into(),
            ));
        }
        Ok(())
    }

    /// Errors unless every class has at least one labeled sample.
    pub fn require_all_classes(&self) -> Result<()> {
        for c in 0..self.num_classes {
            if !self.labels.contains(&Some(c)) {
                return Err(Error::MissingLabels(format!(
                    "class {c} has no labeled samples"
                )));
            }
        }
        Ok(())
    }

    /// Copy of sample `i`'s features as a column vector.
    pub fn sample(&self, i: usize) -> nalgebra::DVector<f64> {
        self.features.row(i).transpose()
    }
}
