//! First-order meta-learning over augmented source domains.
//!
//! Per step and per domain `s`: the meta-training loss on the domain's own
//! batch (raw, Dir-mixup and distilled terms), an inner SGD step to `θ'`, the
//! meta-objective of `θ'` on the other domains plus an outward-biased mixup,
//! and an outer update with the sum of both gradients.

mod config;
mod loss;
mod step;
mod train;

pub use config::{FeatureSource, TrainConfig, UpdateOrder};
pub use loss::{
    draw_objective_augmentation, draw_train_augmentation, inner_update, meta_objective_loss, meta_objective_loss_with,
    meta_train_loss, meta_train_loss_with, supervised_loss, LossEval, MixupTerm, ObjectiveAugmentation,
    TrainAugmentation,
};
pub use step::{meta_step, meta_step_with, MetaStepReport, StepContext, StepRecord};
pub use train::{train, train_agg, EpochSummary, TrainLog};
