//! Label sets, datasets, the synthetic benchmark, CSV ingestion, validation
//! splits and per-domain batching.

mod batching;
mod csv_io;
mod dataset;
mod labels;
mod split;
mod synthetic;

pub use batching::BatchIterator;
pub use csv_io::{load_csv, read_csv, save_csv, write_csv};
pub use dataset::{Dataset, FeatureBatch};
pub use labels::{ClassMap, Label, LabelSetSpec};
pub use split::split_validation;
pub use synthetic::{generate_synthetic, synthetic_world, SyntheticData, SyntheticSpec, SyntheticWorld};
