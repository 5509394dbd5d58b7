//! JSON checkpoints of a [`ModelBank`].
//!
//! Floats are written in shortest round-trip form and parsed back exactly, so
//! `read(write(bank)) == bank` bit for bit and equal banks produce equal bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DomainModel, ModelBank};
use crate::numerics::{Activation, Dense, Matrix, Mlp};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub part: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub domain_index: usize,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub method: String,
    pub seed: u64,
    /// Echo of the configuration that produced the parameters.
    pub config: serde_json::Value,
    pub models: Vec<ModelRecord>,
}

const EXTRACTOR: &str = "extractor";
const CLASSIFIER: &str = "classifier";

impl Checkpoint {
    pub fn from_bank(bank: &ModelBank, method: &str, seed: u64, config: serde_json::Value) -> Self {
        let models = bank
            .models()
            .iter()
            .map(|m| {
                let mut layers = Vec::new();
                for (part, mlp) in [(EXTRACTOR, m.extractor()), (CLASSIFIER, m.classifier())] {
                    layers.extend(mlp.layers().iter().map(|l| LayerRecord {
                        part: part.to_owned(),
                        in_dim: l.in_dim(),
                        out_dim: l.out_dim(),
                        activation: l.activation,
                        weights: l.weights.data().to_vec(),
                        bias: l.bias.clone(),
                    }));
                }
                ModelRecord {
                    domain_index: m.domain_index(),
                    layers,
                }
            })
            .collect();
        Self {
            method: method.to_owned(),
            seed,
            config,
            models,
        }
    }

    pub fn to_bank(&self) -> Result<ModelBank> {
        let models = self
            .models
            .iter()
            .map(|rec| {
                let mut extractor = Vec::new();
                let mut classifier = Vec::new();
                for l in &rec.layers {
                    let dense = Dense {
                        weights: Matrix::from_vec(l.in_dim, l.out_dim, l.weights.clone())?,
                        bias: l.bias.clone(),
                        activation: l.activation,
                    };
                    match l.part.as_str() {
                        EXTRACTOR => extractor.push(dense),
                        CLASSIFIER => classifier.push(dense),
                        other => return Err(Error::Data(format!("unknown layer part {other:?}"))),
                    }
                }
                DomainModel::from_parts(
                    rec.domain_index,
                    Mlp::from_layers(extractor)?,
                    Mlp::from_layers(classifier)?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        ModelBank::from_models(models)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }
}
