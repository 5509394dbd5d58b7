//! Ensemble prediction, confidence-threshold open-set rejection and
//! known/unknown accuracy with the H-score.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureBatch, Label};
use crate::models::ModelBank;
use crate::numerics::Matrix;
use crate::{Error, Result};

/// Default percentile of source-validation confidences used as threshold.
pub const DEFAULT_PERCENTILE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    /// Mean of the member distributions.
    pub probs: Vec<f64>,
    /// `max(probs)`.
    pub confidence: f64,
    /// First index attaining the maximum.
    pub argmax: usize,
}

impl EnsemblePrediction {
    /// Takes the confidence and argmax from `probs`.
    pub fn from_probs(probs: Vec<f64>) -> Self {
        let (argmax, confidence) =
            probs.iter().copied().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |best, (k, p)| if p > best.1 { (k, p) } else { best },
            );
        Self {
            probs,
            confidence,
            argmax,
        }
    }

    /// `Open` when the confidence is below `threshold`, else the argmax class.
    pub fn label(&self, threshold: f64) -> Label {
        if self.confidence < threshold {
            Label::Open
        } else {
            Label::Known(self.argmax)
        }
    }
}

/// Arithmetic mean of every model's predictive distribution, per row of `x`.
pub fn ensemble_predict(bank: &ModelBank, x: &Matrix) -> Result<Vec<EnsemblePrediction>> {
    if bank.is_empty() {
        return Err(Error::Parameter("ensemble of zero models".into()));
    }
    let mut sum = Matrix::zeros(x.rows(), bank.num_classes());
    for m in bank.models() {
        sum.add_assign(&m.predict(x)?)?;
    }
    sum.scale(1.0 / bank.len() as f64);
    Ok(sum
        .row_iter()
        .map(|r| EnsemblePrediction::from_probs(r.to_vec()))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenSetDetector {
    pub threshold: f64,
    pub calibration_percentile: f64,
}

fn check_percentile(p: f64) -> Result<()> {
    if (0.0..=100.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "calibration percentile must lie in [0, 100], got {p}"
        )))
    }
}

/// The value at index `⌊p/100 · (n−1)⌋` of the ascending confidences.
pub fn percentile_threshold(confidences: &[f64], percentile: f64) -> Result<f64> {
    check_percentile(percentile)?;
    if confidences.is_empty() {
        return Err(Error::Data("no calibration confidences".into()));
    }
    let mut sorted = confidences.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = (percentile / 100.0 * (sorted.len() - 1) as f64).floor() as usize;
    Ok(sorted[idx.min(sorted.len() - 1)])
}

/// Pools ensemble confidences over all validation batches and takes the
/// requested percentile as rejection threshold.
pub fn calibrate_threshold(bank: &ModelBank, validation: &[FeatureBatch], percentile: f64) -> Result<OpenSetDetector> {
    check_percentile(percentile)?;
    let mut conf = Vec::new();
    for b in validation {
        conf.extend(ensemble_predict(bank, &b.features)?.iter().map(|p| p.confidence));
    }
    if conf.is_empty() {
        return Err(Error::Data("empty validation set".into()));
    }
    Ok(OpenSetDetector {
        threshold: percentile_threshold(&conf, percentile)?,
        calibration_percentile: percentile,
    })
}

/// Harmonic mean of the two rates; 0 when both are 0.
pub fn h_score(acc_known: f64, acc_unknown: f64) -> f64 {
    let sum = acc_known + acc_unknown;
    if sum == 0.0 {
        0.0
    } else {
        2.0 * acc_known * acc_unknown / sum
    }
}

/// Raw counts behind an [`EvalReport`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Confusion {
    pub known_total: usize,
    pub known_correct: usize,
    pub known_rejected: usize,
    pub open_total: usize,
    pub open_rejected: usize,
    /// Per true known class: (correct, total).
    pub per_class: BTreeMap<usize, (usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Absent when the target has no known-class samples.
    pub acc_known: Option<f64>,
    /// Absent when the target has no open-class samples.
    pub acc_unknown: Option<f64>,
    pub h_score: Option<f64>,
    pub threshold: f64,
    pub per_class_acc: BTreeMap<usize, f64>,
    #[serde(skip)]
    pub confusion: Confusion,
}

impl EvalReport {
    pub const CSV_COLUMNS: [&'static str; 4] = ["acc_known", "acc_unknown", "h_score", "threshold"];

    /// Values for [`Self::CSV_COLUMNS`]; absent values are empty fields.
    pub fn csv_values(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            opt(self.acc_known),
            opt(self.acc_unknown),
            opt(self.h_score),
            self.threshold.to_string(),
        ]
    }
}

/// Scores predictions against true labels. A known sample is correct when
/// accepted with the right class; an open sample is correct when rejected.
pub fn evaluate_predictions(preds: &[EnsemblePrediction], truth: &[Label], threshold: f64) -> Result<EvalReport> {
    if preds.len() != truth.len() {
        return Err(Error::shape(
            "evaluate",
            format!("{} predictions for {} labels", preds.len(), truth.len()),
        ));
    }
    let mut c = Confusion::default();
    for (p, t) in preds.iter().zip(truth) {
        let out = p.label(threshold);
        match t {
            Label::Known(k) => {
                c.known_total += 1;
                let entry = c.per_class.entry(*k).or_default();
                entry.1 += 1;
                if out == Label::Known(*k) {
                    c.known_correct += 1;
                    entry.0 += 1;
                } else if out.is_open() {
                    c.known_rejected += 1;
                }
            }
            Label::Open => {
                c.open_total += 1;
                if out.is_open() {
                    c.open_rejected += 1;
                }
            }
        }
    }
    let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let acc_known = rate(c.known_correct, c.known_total);
    let acc_unknown = rate(c.open_rejected, c.open_total);
    let h = acc_known.zip(acc_unknown).map(|(k, u)| h_score(k, u));
    Ok(EvalReport {
        acc_known,
        acc_unknown,
        h_score: h,
        threshold,
        per_class_acc: c
            .per_class
            .iter()
            .map(|(&k, &(ok, n))| (k, ok as f64 / n as f64))
            .collect(),
        confusion: c,
    })
}

/// Ensemble-predicts the target batch and scores it with the detector's threshold.
pub fn evaluate(bank: &ModelBank, detector: &OpenSetDetector, target: &FeatureBatch) -> Result<EvalReport> {
    let preds = ensemble_predict(bank, &target.features)?;
    evaluate_predictions(&preds, &target.classes, detector.threshold)
}
