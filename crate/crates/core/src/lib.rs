//! Domain-augmented meta-learning for open domain generalization.
//!
//! One network per source domain is trained by first-order meta-learning over
//! Dirichlet-mixed features and distilled soft labels. At test time the
//! networks are averaged, low-confidence samples are rejected as an open
//! class, and feature statistics can be compared across domains.
//!
//! Module map:
//!
//! - [`numerics`]: matrices, softmax cross-entropy, MLP forward/backward.
//! - [`models`]: per-domain extractor + classifier pairs and checkpoints.
//! - [`augment`]: Dirichlet sampling, Dir-mixup and distilled labels.
//! - [`meta`]: meta-training loss, meta-objective and the training loop.
//! - [`inference`]: ensemble prediction, thresholding and H-score.
//! - [`analysis`]: feature statistics and Fréchet distances.
//! - [`data`]: label sets, synthetic benchmark, CSV ingestion, batching.
//! - [`cli`]: configuration-driven experiment commands.

pub mod analysis;
pub mod augment;
pub mod cli;
pub mod data;
mod error;
pub mod inference;
pub mod meta;
pub mod models;
pub mod numerics;
pub mod rng;

pub use error::{Error, Result};
