use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::inference::EvalReport;
use crate::{Error, Result};

/// Sample mean and standard deviation (n − 1 denominator; 0 for one value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Self { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub seed: u64,
    pub checkpoint_hash: String,
    pub report: EvalReport,
}

type Metric = fn(&EvalReport) -> Option<f64>;

/// Per-metric statistics over the seeds that report the metric.
pub fn aggregate(reports: &[&EvalReport]) -> BTreeMap<String, MeanStd> {
    let metrics: [(&str, Metric); 4] = [
        ("acc_known", |r| r.acc_known),
        ("acc_unknown", |r| r.acc_unknown),
        ("h_score", |r| r.h_score),
        ("threshold", |r| Some(r.threshold)),
    ];
    metrics
        .iter()
        .filter_map(|(name, get)| {
            let values: Vec<f64> = reports.iter().filter_map(|r| get(r)).collect();
            MeanStd::of(&values).map(|m| (name.to_string(), m))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub method: String,
    pub config: serde_json::Value,
    /// Hex SHA-256 over the label sets and datasets.
    pub input_hash: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub seeds: Vec<SeedEntry>,
    pub aggregate: BTreeMap<String, MeanStd>,
}

impl RunManifest {
    pub fn new(
        method: &str,
        config: serde_json::Value,
        input_hash: String,
        started_unix_ms: u128,
        seeds: Vec<SeedEntry>,
    ) -> Self {
        let reports: Vec<&EvalReport> = seeds.iter().map(|s| &s.report).collect();
        let aggregate = aggregate(&reports);
        Self {
            method: method.to_owned(),
            config,
            input_hash,
            started_unix_ms,
            finished_unix_ms: now_ms(),
            seeds,
            aggregate,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a header and rows with the `csv` crate.
pub(crate) fn write_csv_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    write_file(path, &bytes)
}
