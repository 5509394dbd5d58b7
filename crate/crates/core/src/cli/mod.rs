//! Configuration-driven experiment commands behind the `opendg` binary.

mod commands;
mod config;
mod gradcheck;
mod manifest;
mod pipeline;

pub use commands::{
    cmd_ablate, cmd_analyze, cmd_evaluate, cmd_generate, cmd_train, frechet_rows, method_dir, seed_dir, AblationReport,
    AblationRow, AblationSummary, ABLATION_FILE, ABLATION_SUMMARY_COLUMNS, ABLATION_SUMMARY_FILE, CHECKPOINT_FILE,
    FRECHET_FILE, MANIFEST_FILE, REPORT_FILE, RESULTS_FILE, TRAIN_LOG_FILE,
};
pub use config::{ExperimentConfig, Method, BENCHMARK_BETA};
pub use gradcheck::{run_gradcheck, GradcheckOptions, GradcheckReport, LayerError, SuiteResult};
pub use manifest::{aggregate, MeanStd, RunManifest, SeedEntry};
pub use pipeline::{
    checkpoint_echo, evaluate_bank, run_seed, source_file, train_seed, ExperimentData, SeedRun, LABEL_SETS_FILE,
    TARGET_FILE,
};
