//! Domain augmentation: Dirichlet weights, Dir-mixup over feature batches and
//! soft labels distilled from the other domains' networks.

mod dirichlet;
mod distill;
mod mixup;

pub use dirichlet::{
    build_alpha_objective, build_alpha_train, sample_dirichlet, sample_gamma, sample_log_gamma, DirichletParams,
    MixupWeights,
};
pub use distill::{distill_label_matrix, distill_labels, DistilledLabel};
pub use mixup::{dir_mixup, samples_from_plan, MixupComponent, MixupPlan, MixupSample};
