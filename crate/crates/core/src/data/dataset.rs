use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use super::labels::Label;
use crate::numerics::Matrix;
use crate::{Error, Result};

/// Feature vectors of one domain with their reindexed labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    domain_index: usize,
    num_classes: usize,
    features: Matrix,
    labels: Vec<Label>,
}

impl Dataset {
    pub fn new(domain_index: usize, num_classes: usize, features: Matrix, labels: Vec<Label>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(
                "Dataset::new",
                format!("{} feature rows and {} labels", features.rows(), labels.len()),
            ));
        }
        if let Some(k) = labels.iter().filter_map(|l| l.known()).find(|&k| k >= num_classes) {
            return Err(Error::Data(format!("class index {k} outside 0..{num_classes}")));
        }
        if !features.is_finite() {
            return Err(Error::Data(format!(
                "domain {domain_index} contains non-finite features"
            )));
        }
        Ok(Self {
            domain_index,
            num_classes,
            features,
            labels,
        })
    }

    pub fn domain_index(&self) -> usize {
        self.domain_index
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            domain_index: self.domain_index,
            num_classes: self.num_classes,
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Rows with a known class only.
    pub fn known_only(&self) -> Dataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| !self.labels[i].is_open()).collect();
        self.subset(&idx)
    }

    pub fn batch(&self, indices: &[usize]) -> FeatureBatch {
        FeatureBatch::new(
            self.domain_index,
            self.num_classes,
            self.features.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    pub fn to_batch(&self) -> FeatureBatch {
        FeatureBatch::new(
            self.domain_index,
            self.num_classes,
            self.features.clone(),
            self.labels.clone(),
        )
    }

    /// Row indices grouped by label.
    pub fn indices_by_label(&self) -> BTreeMap<Label, Vec<usize>> {
        let mut out: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            out.entry(l).or_default().push(i);
        }
        out
    }

    pub fn class_counts(&self) -> BTreeMap<Label, usize> {
        self.indices_by_label().into_iter().map(|(l, v)| (l, v.len())).collect()
    }

    /// Concatenates datasets under a new domain index.
    pub fn merge(parts: &[&Dataset], domain_index: usize) -> Result<Dataset> {
        let Some(first) = parts.first() else {
            return Err(Error::Data("nothing to merge".into()));
        };
        if parts.iter().any(|d| d.num_classes != first.num_classes) {
            return Err(Error::Data("merged datasets disagree on |C|".into()));
        }
        let feats: Vec<&Matrix> = parts.iter().map(|d| &d.features).collect();
        Ok(Dataset {
            domain_index,
            num_classes: first.num_classes,
            features: Matrix::vstack(&feats)?,
            labels: parts.iter().flat_map(|d| d.labels.iter().copied()).collect(),
        })
    }

    /// Hex SHA-256 over domain index, labels and feature bits.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.domain_index as u64).to_le_bytes());
        h.update((self.num_classes as u64).to_le_bytes());
        h.update((self.features.cols() as u64).to_le_bytes());
        for l in &self.labels {
            let code = match l {
                Label::Known(k) => *k as u64,
                Label::Open => u64::MAX,
            };
            h.update(code.to_le_bytes());
        }
        for v in self.features.data() {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// A batch of samples from one domain with one-hot label rows over `|C|`.
/// Open-class rows carry an all-zero label row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    pub domain_index: usize,
    pub features: Matrix,
    pub labels: Matrix,
    pub classes: Vec<Label>,
}

impl FeatureBatch {
    pub fn new(domain_index: usize, num_classes: usize, features: Matrix, classes: Vec<Label>) -> Self {
        let mut labels = Matrix::zeros(classes.len(), num_classes);
        for (r, l) in classes.iter().enumerate() {
            if let Label::Known(k) = l {
                labels.set(r, *k, 1.0);
            }
        }
        Self {
            domain_index,
            features,
            labels,
            classes,
        }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.cols()
    }
}
