use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::SyntheticSpec;
use crate::inference::DEFAULT_PERCENTILE;
use crate::meta::{FeatureSource, TrainConfig, UpdateOrder};
use crate::models::Architecture;
use crate::{Error, Result};

/// Training method: the full method, the merged-data baseline, or one of the
/// ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Meta-learning with the loss-term toggles as configured (all on by default).
    Daml,
    /// One network trained by cross-entropy on the merged source data.
    Agg,
    /// Meta-learning on raw data only.
    MetaOnly,
    DmixTrain,
    DmixObj,
    DmixBoth,
    /// Both Dir-mixup terms and distillation, joint SGD without meta-learning.
    NoMeta,
    /// Two-sample mixup and distillation with meta-learning.
    ClassicMixup,
}

impl Method {
    /// The ablation variants, from raw meta-learning up to the full method.
    pub const ABLATION: [Method; 7] = [
        Method::MetaOnly,
        Method::DmixTrain,
        Method::DmixObj,
        Method::DmixBoth,
        Method::NoMeta,
        Method::ClassicMixup,
        Method::Daml,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Daml => "daml",
            Method::Agg => "agg",
            Method::MetaOnly => "meta_only",
            Method::DmixTrain => "dmix_train",
            Method::DmixObj => "dmix_obj",
            Method::DmixBoth => "dmix_both",
            Method::NoMeta => "no_meta",
            Method::ClassicMixup => "classic_mixup",
        }
    }

    /// Loss-term toggles of this method applied on top of `base`.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let toggles = |dmix_train, dmix_obj, distill, meta, classic| TrainConfig {
            use_dmix_train: dmix_train,
            use_dmix_obj: dmix_obj,
            use_distill: distill,
            use_meta: meta,
            use_classic_mixup: classic,
            ..base.clone()
        };
        match self {
            Method::Daml | Method::Agg => base.clone(),
            Method::MetaOnly => toggles(false, false, false, true, false),
            Method::DmixTrain => toggles(true, false, false, true, false),
            Method::DmixObj => toggles(false, true, false, true, false),
            Method::DmixBoth => toggles(true, true, false, true, false),
            Method::NoMeta => toggles(true, true, true, false, false),
            Method::ClassicMixup => toggles(false, false, true, true, true),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One JSON document describing an experiment. Training keys are flat and
/// named as in [`TrainConfig`]; the synthetic benchmark is nested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Directory written by `generate`; the synthetic benchmark is generated
    /// in memory when absent.
    pub data_dir: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub calibration_percentile: f64,
    pub validation_fraction: f64,

    pub eta: f64,
    pub beta: f64,
    pub alpha_max: f64,
    pub alpha_min: f64,
    pub epochs: usize,
    pub decay_epoch: usize,
    pub decay_factor: f64,
    pub batch_size: usize,
    pub use_dmix_train: bool,
    pub use_dmix_obj: bool,
    pub use_distill: bool,
    pub use_meta: bool,
    pub use_classic_mixup: bool,
    pub update_order: UpdateOrder,
    pub feature_source: FeatureSource,
}

/// Outer learning rate of the synthetic benchmark. Models there train from
/// scratch, and the library default leaves them far from convergence in 30
/// epochs.
pub const BENCHMARK_BETA: f64 = 0.05;

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let a = Architecture::default();
        Self {
            method: Method::Daml,
            seeds: vec![0, 1, 2, 3, 4],
            out_dir: PathBuf::from("runs"),
            data_dir: None,
            synthetic: SyntheticSpec::default(),
            hidden_dims: a.hidden_dims,
            feature_dim: a.feature_dim,
            calibration_percentile: DEFAULT_PERCENTILE,
            validation_fraction: 0.1,
            eta: t.eta,
            beta: BENCHMARK_BETA,
            alpha_max: t.alpha_max,
            alpha_min: t.alpha_min,
            epochs: t.epochs,
            decay_epoch: t.decay_epoch,
            decay_factor: t.decay_factor,
            batch_size: t.batch_size,
            use_dmix_train: t.use_dmix_train,
            use_dmix_obj: t.use_dmix_obj,
            use_distill: t.use_distill,
            use_meta: t.use_meta,
            use_classic_mixup: t.use_classic_mixup,
            update_order: t.update_order,
            feature_source: t.feature_source,
        }
    }
}

impl ExperimentConfig {
    /// Parses a JSON document after applying `key=value` overrides. Dotted
    /// keys reach nested objects; values are parsed as JSON and fall back to
    /// plain strings.
    pub fn from_json_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: Value = if text.trim().is_empty() {
            Value::Object(Default::default())
        } else {
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = serde_path_to_error::deserialize(doc).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("field `{path}`: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_json_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("field `seeds`: at least one seed is required".into()));
        }
        if !(0.0..=100.0).contains(&self.calibration_percentile) {
            return Err(Error::Config(format!(
                "field `calibration_percentile`: must lie in [0, 100], got {}",
                self.calibration_percentile
            )));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "field `validation_fraction`: must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.feature_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(
                "fields `hidden_dims`/`feature_dim`: widths must be >= 1".into(),
            ));
        }
        self.train_config(self.method, 0).validate()?;
        if self.data_dir.is_none() {
            self.synthetic.validate()?;
        }
        Ok(())
    }

    /// Training hyperparameters for `method` and one seed.
    pub fn train_config(&self, method: Method, seed: u64) -> TrainConfig {
        let base = TrainConfig {
            eta: self.eta,
            beta: self.beta,
            alpha_max: self.alpha_max,
            alpha_min: self.alpha_min,
            epochs: self.epochs,
            decay_epoch: self.decay_epoch,
            decay_factor: self.decay_factor,
            batch_size: self.batch_size,
            seed,
            use_dmix_train: self.use_dmix_train,
            use_dmix_obj: self.use_dmix_obj,
            use_distill: self.use_distill,
            use_meta: self.use_meta,
            use_classic_mixup: self.use_classic_mixup,
            update_order: self.update_order,
            feature_source: self.feature_source,
        };
        method.apply(&base)
    }

    pub fn architecture(&self, input_dim: usize, num_classes: usize) -> Architecture {
        Architecture {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            feature_dim: self.feature_dim,
            num_classes,
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Error::Config("override with an empty key".into()))
}
