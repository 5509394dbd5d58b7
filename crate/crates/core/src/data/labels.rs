use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A sample's class after reindexing against the union label set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Known(usize),
    Open,
}

impl Label {
    pub fn known(self) -> Option<usize> {
        match self {
            Label::Known(k) => Some(k),
            Label::Open => None,
        }
    }

    pub fn is_open(self) -> bool {
        matches!(self, Label::Open)
    }
}

/// Raw class ids present in each source domain and in the target domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSetSpec {
    pub sources: Vec<Vec<usize>>,
    pub target_known: Vec<usize>,
    pub target_open: Vec<usize>,
}

impl LabelSetSpec {
    /// Three sources over six classes with pairwise-overlapping three-class
    /// subsets, and a target holding all six plus one open class.
    pub fn pacs_open() -> Self {
        Self {
            sources: vec![vec![3, 0, 1], vec![4, 0, 2], vec![5, 1, 2]],
            target_known: vec![0, 1, 2, 3, 4, 5],
            target_open: vec![6],
        }
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    /// Sorted union of all source classes.
    pub fn union(&self) -> Vec<usize> {
        self.sources
            .iter()
            .flatten()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// `|C|`.
    pub fn num_classes(&self) -> usize {
        self.union().len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::Config(
                "label sets: at least one source domain is required".into(),
            ));
        }
        if let Some(i) = self.sources.iter().position(Vec::is_empty) {
            return Err(Error::Config(format!("label sets: source {i} has no classes")));
        }
        let union: BTreeSet<usize> = self.union().into_iter().collect();
        if let Some(c) = self.target_open.iter().find(|c| union.contains(c)) {
            return Err(Error::Config(format!(
                "label sets: open class {c} also appears in a source domain"
            )));
        }
        if let Some(c) = self.target_known.iter().find(|c| !union.contains(c)) {
            return Err(Error::Config(format!(
                "label sets: target known class {c} is not in any source domain"
            )));
        }
        Ok(())
    }

    pub fn class_map(&self) -> ClassMap {
        ClassMap {
            union: self.union(),
            open: self.target_open.iter().copied().collect(),
        }
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Bijection between raw source class ids and `0..|C|`, plus the open set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    union: Vec<usize>,
    open: BTreeSet<usize>,
}

impl ClassMap {
    pub fn num_classes(&self) -> usize {
        self.union.len()
    }

    /// Raw id → label. Ids in the union map to their rank; listed open ids and
    /// the file sentinel `|C|` (when not itself a source class) map to `Open`.
    pub fn label_of(&self, raw: usize) -> Option<Label> {
        if let Ok(k) = self.union.binary_search(&raw) {
            Some(Label::Known(k))
        } else if self.open.contains(&raw) || raw == self.union.len() {
            Some(Label::Open)
        } else {
            None
        }
    }

    pub fn raw_of(&self, k: usize) -> usize {
        self.union[k]
    }

    /// Class id written to files: the raw id, or `|C|` for open samples.
    pub fn file_id(&self, label: Label) -> usize {
        match label {
            Label::Known(k) => self.union[k],
            Label::Open => self.union.len(),
        }
    }
}
