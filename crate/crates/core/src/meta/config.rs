use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// When outer updates are written back to the bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    /// Every domain's gradients are computed against the step's initial bank,
    /// then all updates are applied together.
    #[default]
    GatherThenApply,
    /// Inner updates for all domains first, then a second pass that computes
    /// each meta-objective and immediately updates that domain.
    InLoop,
}

/// Which extractor produces the features of domain `j` inside model `s`'s mixup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    /// `z_j = F_s(x_j)` for every `j`; gradients reach `F_s` through all inputs.
    #[default]
    Own,
    /// `z_j = F_j(x_j)`, frozen for `j ≠ s`.
    Domain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Inner step size.
    pub eta: f64,
    /// Outer learning rate.
    pub beta: f64,
    pub alpha_max: f64,
    pub alpha_min: f64,
    pub epochs: usize,
    /// First (0-based) epoch trained with `beta / decay_factor`.
    pub decay_epoch: usize,
    pub decay_factor: f64,
    /// Samples per domain per batch.
    pub batch_size: usize,
    pub seed: u64,
    pub use_dmix_train: bool,
    pub use_dmix_obj: bool,
    pub use_distill: bool,
    pub use_meta: bool,
    /// Two-sample Beta(α_max, α_max) mixup over the pooled batch in place of
    /// the meta-training Dir-mixup term.
    pub use_classic_mixup: bool,
    pub update_order: UpdateOrder,
    pub feature_source: FeatureSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            beta: 0.001,
            alpha_max: 0.6,
            alpha_min: 0.2,
            epochs: 30,
            decay_epoch: 24,
            decay_factor: 10.0,
            batch_size: 32,
            seed: 0,
            use_dmix_train: true,
            use_dmix_obj: true,
            use_distill: true,
            use_meta: true,
            use_classic_mixup: false,
            update_order: UpdateOrder::GatherThenApply,
            feature_source: FeatureSource::Own,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        positive("eta", self.eta)?;
        positive("beta", self.beta)?;
        positive("alpha_min", self.alpha_min)?;
        positive("alpha_max", self.alpha_max)?;
        positive("decay_factor", self.decay_factor)?;
        if self.alpha_max < self.alpha_min {
            return Err(Error::Config(format!(
                "alpha_max ({}) must be >= alpha_min ({})",
                self.alpha_max, self.alpha_min
            )));
        }
        if self.decay_epoch > self.epochs {
            return Err(Error::Config(format!(
                "decay_epoch ({}) must be <= epochs ({})",
                self.decay_epoch, self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.use_classic_mixup && self.use_dmix_train {
            return Err(Error::Config(
                "use_classic_mixup replaces the meta-training Dir-mixup; disable use_dmix_train".into(),
            ));
        }
        Ok(())
    }

    /// Outer learning rate used during `epoch` (0-based).
    pub fn beta_at(&self, epoch: usize) -> f64 {
        if epoch >= self.decay_epoch {
            self.beta / self.decay_factor
        } else {
            self.beta
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn invariants_are_enforced() {
        let bad = [
            TrainConfig {
                eta: 0.0,
                ..Default::default()
            },
            TrainConfig {
                beta: -1.0,
                ..Default::default()
            },
            TrainConfig {
                alpha_max: 0.1,
                ..Default::default()
            },
            TrainConfig {
                decay_epoch: 31,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                use_classic_mixup: true,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn beta_decays_once() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.beta_at(23), 0.001);
        assert_eq!(cfg.beta_at(24), 0.001 / 10.0);
        assert_eq!(cfg.beta_at(29), 0.001 / 10.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<TrainConfig>(r#"{"etaa": 1.0}"#).unwrap_err();
        assert!(err.to_string().contains("etaa"));
    }
}
