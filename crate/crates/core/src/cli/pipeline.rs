use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Method};
use crate::data::{generate_synthetic, load_csv, split_validation, Dataset, FeatureBatch, LabelSetSpec};
use crate::inference::{calibrate_threshold, evaluate, EvalReport, OpenSetDetector};
use crate::meta::{train, train_agg, TrainLog};
use crate::models::{Checkpoint, DomainModel, ModelBank};
use crate::rng;
use crate::{Error, Result};

pub const LABEL_SETS_FILE: &str = "label_sets.json";
pub const TARGET_FILE: &str = "target.csv";

pub fn source_file(i: usize) -> String {
    format!("source_{i}.csv")
}

/// Source and target datasets of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub label_sets: LabelSetSpec,
    pub sources: Vec<Dataset>,
    pub target: Dataset,
}

impl ExperimentData {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        match &cfg.data_dir {
            Some(dir) => Self::read_dir(dir),
            None => {
                let data = generate_synthetic(&cfg.synthetic)?;
                Ok(Self {
                    label_sets: cfg.synthetic.label_sets.clone(),
                    sources: data.sources,
                    target: data.target,
                })
            }
        }
    }

    /// Reads the layout written by `generate`.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let label_sets = LabelSetSpec::read_json(dir.join(LABEL_SETS_FILE))?;
        let s = label_sets.num_sources();
        let mut sources = Vec::with_capacity(s);
        for i in 0..s {
            let path = dir.join(source_file(i));
            let mut parts = load_csv(&path, &label_sets)?;
            match parts.as_slice() {
                [d] if d.domain_index() == i => sources.push(parts.remove(0)),
                _ => {
                    return Err(Error::Data(format!(
                        "{} must hold exactly the rows of source domain {i}",
                        path.display()
                    )))
                }
            }
        }
        let path = dir.join(TARGET_FILE);
        let mut parts = load_csv(&path, &label_sets)?;
        let target = match parts.as_slice() {
            [d] if d.domain_index() == s => parts.remove(0),
            _ => {
                return Err(Error::Data(format!(
                    "{} must hold exactly the rows of target domain {s}",
                    path.display()
                )))
            }
        };
        Ok(Self {
            label_sets,
            sources,
            target,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.target.num_classes()
    }

    pub fn input_dim(&self) -> usize {
        self.target.input_dim()
    }

    /// Hex SHA-256 over the label sets and every dataset checksum.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.label_sets).expect("label sets serialize"));
        for d in self.sources.iter().chain(std::iter::once(&self.target)) {
            h.update(d.checksum().as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Per-source stratified train/validation split for one seed.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Vec<Dataset>, Vec<Dataset>)> {
        let mut train = Vec::with_capacity(self.sources.len());
        let mut val = Vec::with_capacity(self.sources.len());
        for d in &self.sources {
            let (t, v) = split_validation(d, fraction, seed)?;
            train.push(t);
            val.push(v);
        }
        Ok((train, val))
    }
}

/// Outputs of training and evaluating one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
    pub detector: OpenSetDetector,
    pub report: EvalReport,
}

pub fn train_seed(
    cfg: &ExperimentConfig,
    method: Method,
    data: &ExperimentData,
    seed: u64,
) -> Result<(ModelBank, TrainLog)> {
    let (train_sets, _) = data.split(cfg.validation_fraction, seed)?;
    let arch = cfg.architecture(data.input_dim(), data.num_classes());
    let tc = cfg.train_config(method, seed);
    let mut init = rng::seeded(seed, rng::stream::INIT);
    match method {
        Method::Agg => {
            let model = DomainModel::new(0, &arch, &mut init)?;
            let (model, log) = train_agg(model, &train_sets, &tc)?;
            Ok((ModelBank::from_models(vec![model])?, log))
        }
        _ => {
            let bank = ModelBank::new(&arch, train_sets.len(), &mut init)?;
            train(bank, &train_sets, &tc)
        }
    }
}

fn check_bank(bank: &ModelBank, data: &ExperimentData) -> Result<()> {
    if bank.input_dim() != data.input_dim() || bank.num_classes() != data.num_classes() {
        return Err(Error::Contract(format!(
            "checkpoint maps {} inputs to {} classes but the data has {} inputs and {} classes",
            bank.input_dim(),
            bank.num_classes(),
            data.input_dim(),
            data.num_classes()
        )));
    }
    if bank.len() != 1 && bank.len() != data.sources.len() {
        return Err(Error::Contract(format!(
            "checkpoint holds {} models for {} source domains",
            bank.len(),
            data.sources.len()
        )));
    }
    Ok(())
}

/// Calibrates the rejection threshold on the seed's source validation split
/// and scores the target domain.
pub fn evaluate_bank(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    bank: &ModelBank,
    seed: u64,
) -> Result<(OpenSetDetector, EvalReport)> {
    check_bank(bank, data)?;
    let (_, val) = data.split(cfg.validation_fraction, seed)?;
    let batches: Vec<FeatureBatch> = val.iter().map(Dataset::to_batch).collect();
    let detector = calibrate_threshold(bank, &batches, cfg.calibration_percentile)?;
    let report = evaluate(bank, &detector, &data.target.to_batch())?;
    Ok((detector, report))
}

/// Configuration stored in a checkpoint. The output directory is left out so
/// that the same run written to two places yields identical bytes.
pub fn checkpoint_echo(cfg: &ExperimentConfig, method: Method, seed: u64) -> serde_json::Value {
    let mut v = ExperimentConfig {
        method,
        seeds: vec![seed],
        ..cfg.clone()
    }
    .to_value();
    if let Some(obj) = v.as_object_mut() {
        obj.remove("out_dir");
    }
    v
}

pub fn run_seed(cfg: &ExperimentConfig, method: Method, data: &ExperimentData, seed: u64) -> Result<SeedRun> {
    let (bank, log) = train_seed(cfg, method, data, seed)?;
    let (detector, report) = evaluate_bank(cfg, data, &bank, seed)?;
    Ok(SeedRun {
        seed,
        checkpoint: Checkpoint::from_bank(&bank, method.name(), seed, checkpoint_echo(cfg, method, seed)),
        log,
        detector,
        report,
    })
}
