use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::loss::supervised_loss;
use super::step::{meta_step_with, StepContext, StepRecord};
use crate::data::{BatchIterator, Dataset};
use crate::models::{DomainModel, ModelBank};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub beta: f64,
    pub steps: usize,
    /// Mean over steps and domains.
    pub mean_l_tr: f64,
    pub mean_l_obj: Option<f64>,
}

/// Per-step records and per-epoch means of a training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
    pub epochs: Vec<EpochSummary>,
}

impl TrainLog {
    fn close_epoch(&mut self, epoch: usize, beta: f64, steps: usize) {
        let recs: Vec<&StepRecord> = self.records.iter().filter(|r| r.epoch == epoch).collect();
        let n = recs.len().max(1) as f64;
        let mean_l_tr = recs.iter().map(|r| r.l_tr).sum::<f64>() / n;
        let objs: Vec<f64> = recs.iter().filter_map(|r| r.l_obj).collect();
        let mean_l_obj = (!objs.is_empty()).then(|| objs.iter().sum::<f64>() / objs.len() as f64);
        self.epochs.push(EpochSummary {
            epoch,
            beta,
            steps,
            mean_l_tr,
            mean_l_obj,
        });
    }

    /// Newline-delimited JSON, one step record per line.
    pub fn to_ndjson(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

fn check_datasets(datasets: &[Dataset]) -> Result<()> {
    if datasets.is_empty() {
        return Err(Error::Data("no source datasets".into()));
    }
    if let Some(d) = datasets.iter().find(|d| d.is_empty()) {
        return Err(Error::Data(format!("source domain {} is empty", d.domain_index())));
    }
    Ok(())
}

/// Meta-trains a bank with one model per source dataset for `cfg.epochs`
/// epochs of `⌈min domain size / batch_size⌉` steps each.
pub fn train(mut bank: ModelBank, datasets: &[Dataset], cfg: &TrainConfig) -> Result<(ModelBank, TrainLog)> {
    cfg.validate()?;
    check_datasets(datasets)?;
    if datasets.len() != bank.len() {
        return Err(Error::shape(
            "train",
            format!("{} source datasets for {} models", datasets.len(), bank.len()),
        ));
    }
    let mut tr = BatchIterator::new(
        datasets,
        cfg.batch_size,
        &mut rng::seeded(cfg.seed, rng::stream::BATCHES),
    )?;
    let mut obj = BatchIterator::new(
        datasets,
        cfg.batch_size,
        &mut rng::seeded(cfg.seed, rng::stream::OBJECTIVE_BATCHES),
    )?;
    let mut aug_rng = rng::seeded(cfg.seed, rng::stream::AUGMENT);
    let steps = tr.steps_per_epoch();
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let beta = cfg.beta_at(epoch);
        tr.start_epoch();
        obj.start_epoch();
        for step in 0..steps {
            let batch_tr = tr.next_batches();
            let batch_obj = if cfg.use_meta { obj.next_batches() } else { Vec::new() };
            let ctx = StepContext::new(epoch, step, beta, bank.len());
            let report = meta_step_with(&mut bank, &batch_tr, &batch_obj, cfg, &ctx, &mut aug_rng)?;
            log.records.extend(report.domains);
        }
        log.close_epoch(epoch, beta, steps);
    }
    Ok((bank, log))
}

/// Trains one network by plain cross-entropy on the merged source data, with
/// batches of `batch_size · S` and the same learning-rate schedule.
pub fn train_agg(mut model: DomainModel, datasets: &[Dataset], cfg: &TrainConfig) -> Result<(DomainModel, TrainLog)> {
    cfg.validate()?;
    check_datasets(datasets)?;
    let parts: Vec<&Dataset> = datasets.iter().collect();
    let merged = [Dataset::merge(&parts, 0)?];
    let batch_size = cfg.batch_size * datasets.len();
    let mut it = BatchIterator::new(&merged, batch_size, &mut rng::seeded(cfg.seed, rng::stream::BATCHES))?;
    let steps = it.steps_per_epoch();
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let beta = cfg.beta_at(epoch);
        it.start_epoch();
        for step in 0..steps {
            let batch = it.next_batches().remove(0);
            let eval = supervised_loss(&model, &batch)?;
            let grad_norm = eval.grads.norm();
            if !eval.loss.is_finite() || !eval.grads.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch} step {step}: loss={} grad_norm={grad_norm}",
                    eval.loss
                )));
            }
            model.sgd_step(&eval.grads, beta)?;
            log.records.push(StepRecord {
                epoch,
                step,
                domain: 0,
                l_tr: eval.loss,
                l_obj: None,
                grad_norm,
            });
        }
        log.close_epoch(epoch, beta, steps);
    }
    Ok((model, log))
}
