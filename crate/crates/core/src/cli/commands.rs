use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, Method};
use super::manifest::{aggregate, now_ms, write_csv_rows, write_file, write_json, MeanStd, RunManifest, SeedEntry};
use super::pipeline::{evaluate_bank, run_seed, source_file, ExperimentData, LABEL_SETS_FILE, TARGET_FILE};
use crate::analysis::{fit_stats, frechet_distance, FrechetRecord};
use crate::data::{generate_synthetic, save_csv};
use crate::inference::EvalReport;
use crate::models::{Checkpoint, ModelBank};
use crate::{Error, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.ndjson";
pub const REPORT_FILE: &str = "report.json";
pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const ABLATION_SUMMARY_FILE: &str = "ablation_summary.csv";
pub const FRECHET_FILE: &str = "frechet.csv";

pub fn method_dir(out: &Path, method: &str) -> PathBuf {
    out.join(method)
}

pub fn seed_dir(out: &Path, method: &str, seed: u64) -> PathBuf {
    method_dir(out, method).join(format!("seed-{seed}"))
}

/// Writes `source_<i>.csv`, `target.csv` and `label_sets.json` for the
/// configured synthetic benchmark into `data_dir`, or `out_dir` when unset.
/// Returns the written paths.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let dir = cfg.data_dir.clone().unwrap_or_else(|| cfg.out_dir.clone());
    let data = generate_synthetic(&cfg.synthetic)?;
    let spec = &cfg.synthetic.label_sets;
    let mut written = Vec::new();
    for (i, d) in data.sources.iter().enumerate() {
        let path = dir.join(source_file(i));
        save_csv(&path, &[d], spec)?;
        written.push(path);
    }
    let path = dir.join(TARGET_FILE);
    save_csv(&path, &[&data.target], spec)?;
    written.push(path);
    let path = dir.join(LABEL_SETS_FILE);
    spec.write_json(&path)?;
    written.push(path);
    Ok(written)
}

fn results_rows(method: &str, entries: &[SeedEntry]) -> Vec<Vec<String>> {
    entries
        .iter()
        .map(|e| {
            let mut row = vec![method.to_owned(), e.seed.to_string()];
            row.extend(e.report.csv_values());
            row
        })
        .collect()
}

fn results_header(key: &'static str) -> Vec<&'static str> {
    let mut h = vec![key, "seed"];
    h.extend(EvalReport::CSV_COLUMNS);
    h
}

fn finish_method(
    cfg: &ExperimentConfig,
    method: &str,
    data: &ExperimentData,
    started: u128,
    entries: Vec<SeedEntry>,
) -> Result<RunManifest> {
    let dir = method_dir(&cfg.out_dir, method);
    write_csv_rows(
        &dir.join(RESULTS_FILE),
        &results_header("method"),
        &results_rows(method, &entries),
    )?;
    let manifest = RunManifest::new(method, cfg.to_value(), data.content_hash(), started, entries);
    manifest.write(&dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Trains and evaluates `cfg.method` for every seed. Per seed it writes the
/// checkpoint, ND-JSON training log and report; per method the results CSV
/// and run manifest.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let started = now_ms();
    let data = ExperimentData::load(cfg)?;
    let method = cfg.method;
    let mut entries = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let run = run_seed(cfg, method, &data, seed)?;
        let dir = seed_dir(&cfg.out_dir, method.name(), seed);
        write_file(&dir.join(CHECKPOINT_FILE), &run.checkpoint.to_bytes()?)?;
        write_file(&dir.join(TRAIN_LOG_FILE), run.log.to_ndjson()?.as_bytes())?;
        write_json(&dir.join(REPORT_FILE), &run.report)?;
        entries.push(SeedEntry {
            seed,
            checkpoint_hash: run.checkpoint.content_hash()?,
            report: run.report,
        });
    }
    finish_method(cfg, method.name(), &data, started, entries)
}

/// Re-evaluates trained checkpoints: the given one, or every configured
/// seed's checkpoint under `out_dir/<method>`. The threshold is recalibrated
/// on the checkpoint seed's validation split with the configured percentile.
pub fn cmd_evaluate(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<RunManifest> {
    let started = now_ms();
    let data = ExperimentData::load(cfg)?;
    let paths: Vec<PathBuf> = match checkpoint {
        Some(p) => vec![p.to_path_buf()],
        None => cfg
            .seeds
            .iter()
            .map(|&s| seed_dir(&cfg.out_dir, cfg.method.name(), s).join(CHECKPOINT_FILE))
            .collect(),
    };
    let mut method = cfg.method.name().to_owned();
    let mut entries = Vec::with_capacity(paths.len());
    for path in paths {
        let ckpt = Checkpoint::read(&path)?;
        let bank = ckpt.to_bank()?;
        let (_, report) = evaluate_bank(cfg, &data, &bank, ckpt.seed)?;
        write_json(
            &seed_dir(&cfg.out_dir, &ckpt.method, ckpt.seed).join(REPORT_FILE),
            &report,
        )?;
        method.clone_from(&ckpt.method);
        entries.push(SeedEntry {
            seed: ckpt.seed,
            checkpoint_hash: ckpt.content_hash()?,
            report,
        });
    }
    finish_method(cfg, &method, &data, started, entries)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: Method,
    pub seed: u64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationSummary {
    pub variant: Method,
    pub stats: std::collections::BTreeMap<String, MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub summary: Vec<AblationSummary>,
}

pub const ABLATION_SUMMARY_COLUMNS: [&str; 8] = [
    "variant",
    "n",
    "acc_known_mean",
    "acc_known_std",
    "acc_unknown_mean",
    "acc_unknown_std",
    "h_score_mean",
    "h_score_std",
];

/// Trains and evaluates every ablation variant for every seed. Writes one
/// CSV row per (variant, seed) and a mean/std row per variant.
pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<AblationReport> {
    let data = ExperimentData::load(cfg)?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for variant in Method::ABLATION {
        let mut reports = Vec::with_capacity(cfg.seeds.len());
        for &seed in &cfg.seeds {
            let run = run_seed(cfg, variant, &data, seed)?;
            reports.push(run.report.clone());
            rows.push(AblationRow {
                variant,
                seed,
                report: run.report,
            });
        }
        let refs: Vec<&EvalReport> = reports.iter().collect();
        summary.push(AblationSummary {
            variant,
            stats: aggregate(&refs),
        });
    }

    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.variant.name().to_owned(), r.seed.to_string()];
            row.extend(r.report.csv_values());
            row
        })
        .collect();
    write_csv_rows(&cfg.out_dir.join(ABLATION_FILE), &results_header("variant"), &csv_rows)?;
    let summary_rows: Vec<Vec<String>> = summary
        .iter()
        .map(|s| {
            let mut row = vec![s.variant.name().to_owned(), cfg.seeds.len().to_string()];
            for key in ["acc_known", "acc_unknown", "h_score"] {
                match s.stats.get(key) {
                    Some(m) => row.extend([m.mean.to_string(), m.std.to_string()]),
                    None => row.extend([String::new(), String::new()]),
                }
            }
            row
        })
        .collect();
    write_csv_rows(
        &cfg.out_dir.join(ABLATION_SUMMARY_FILE),
        &ABLATION_SUMMARY_COLUMNS,
        &summary_rows,
    )?;
    Ok(AblationReport { rows, summary })
}

/// Fréchet distances between each source domain's features and the target's
/// known-class features. Source `s` is embedded by extractor `s`; a
/// single-model checkpoint embeds every domain with its one extractor.
pub fn frechet_rows(
    method: &str,
    bank: &ModelBank,
    data: &ExperimentData,
    self_distance: bool,
) -> Result<Vec<FrechetRecord>> {
    let target = data.target.known_only();
    let target_domain = data.target.domain_index();
    let mut out = Vec::new();
    for (s, source) in data.sources.iter().enumerate() {
        let model = bank.model(if bank.len() == 1 { 0 } else { s });
        let src = fit_stats(&model.extract(source.features())?)?;
        if self_distance {
            out.push(FrechetRecord {
                method: method.to_owned(),
                source_domain: s,
                target_domain: s,
                frechet_sq: frechet_distance(&src, &src)?,
            });
        }
        let tgt = fit_stats(&model.extract(target.features())?)?;
        out.push(FrechetRecord {
            method: method.to_owned(),
            source_domain: s,
            target_domain,
            frechet_sq: frechet_distance(&src, &tgt)?,
        });
    }
    Ok(out)
}

/// Writes the Fréchet CSV for the evaluated checkpoint and, when given, an
/// AGG checkpoint. Defaults to the first configured seed's checkpoint of
/// `cfg.method`.
pub fn cmd_analyze(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    agg_checkpoint: Option<&Path>,
    self_distance: bool,
) -> Result<Vec<FrechetRecord>> {
    let data = ExperimentData::load(cfg)?;
    let default_path = seed_dir(&cfg.out_dir, cfg.method.name(), cfg.seeds[0]).join(CHECKPOINT_FILE);
    let mut records = Vec::new();
    for path in std::iter::once(checkpoint.unwrap_or(&default_path)).chain(agg_checkpoint) {
        let ckpt = Checkpoint::read(path)?;
        let bank = ckpt.to_bank()?;
        if bank.input_dim() != data.input_dim() {
            return Err(Error::Contract(format!(
                "{} expects {} inputs, the data has {}",
                path.display(),
                bank.input_dim(),
                data.input_dim()
            )));
        }
        if bank.len() != 1 && bank.len() != data.sources.len() {
            return Err(Error::Contract(format!(
                "{} holds {} models for {} source domains",
                path.display(),
                bank.len(),
                data.sources.len()
            )));
        }
        records.extend(frechet_rows(&ckpt.method, &bank, &data, self_distance)?);
    }
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                r.source_domain.to_string(),
                r.target_domain.to_string(),
                r.frechet_sq.to_string(),
            ]
        })
        .collect();
    write_csv_rows(&cfg.out_dir.join(FRECHET_FILE), &FrechetRecord::CSV_COLUMNS, &rows)?;
    Ok(records)
}
