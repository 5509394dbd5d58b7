use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use opendg::cli::{
    cmd_ablate, cmd_analyze, cmd_evaluate, cmd_generate, cmd_train, method_dir, run_gradcheck, ExperimentConfig,
    GradcheckOptions, RunManifest, ABLATION_FILE, FRECHET_FILE,
};
use opendg::Result;

#[derive(Parser)]
#[command(
    name = "opendg",
    version,
    about = "Open domain generalization experiments on feature vectors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults apply to absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config override `key=value`; dotted keys reach nested objects.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic benchmark as CSV files plus label sets.
    Generate(Common),
    /// Train and evaluate the configured method for every seed.
    Train(Common),
    /// Recalibrate and evaluate trained checkpoints.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate every ablation variant for every seed.
    Ablate(Common),
    /// Compare analytic and finite-difference gradients on tiny models.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Negate the analytic gradient of one layer (self-test of the check).
        #[arg(long, hide = true)]
        inject_sign_flip: Option<usize>,
    },
    /// Fréchet distances between source and target features.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// AGG checkpoint to compare against.
        #[arg(long)]
        agg_checkpoint: Option<PathBuf>,
        /// Also emit each source's distance to itself.
        #[arg(long)]
        self_distance: bool,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut overrides = common.overrides.clone();
    if let Some(s) = common.seed {
        overrides.push(format!("seeds=[{s}]"));
    }
    if let Some(out) = &common.out {
        overrides.push(format!(
            "out_dir={}",
            serde_json::Value::String(out.display().to_string())
        ));
    }
    ExperimentConfig::load(common.config.as_deref(), &overrides)
}

fn print_manifest(m: &RunManifest, dir: PathBuf) {
    for s in &m.seeds {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        println!(
            "{} seed {}: acc_known {} acc_unknown {} h_score {} threshold {:.4}",
            m.method,
            s.seed,
            fmt(s.report.acc_known),
            fmt(s.report.acc_unknown),
            fmt(s.report.h_score),
            s.report.threshold
        );
    }
    for (k, v) in &m.aggregate {
        println!("{}: {k} {:.4} ± {:.4} (n={})", m.method, v.mean, v.std, v.n);
    }
    println!("wrote {}", dir.display());
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate(c) => {
            for p in cmd_generate(&load(&c)?)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Train(c) => {
            let cfg = load(&c)?;
            let m = cmd_train(&cfg)?;
            print_manifest(&m, method_dir(&cfg.out_dir, &m.method));
        }
        Command::Evaluate { common, checkpoint } => {
            let cfg = load(&common)?;
            let m = cmd_evaluate(&cfg, checkpoint.as_deref())?;
            print_manifest(&m, method_dir(&cfg.out_dir, &m.method));
        }
        Command::Ablate(c) => {
            let cfg = load(&c)?;
            let r = cmd_ablate(&cfg)?;
            for s in &r.summary {
                let line: Vec<String> = s
                    .stats
                    .iter()
                    .filter(|(k, _)| k.as_str() != "threshold")
                    .map(|(k, v)| format!("{k} {:.4} ± {:.4}", v.mean, v.std))
                    .collect();
                println!("{:<14} {}", s.variant.name(), line.join("  "));
            }
            println!("wrote {}", cfg.out_dir.join(ABLATION_FILE).display());
        }
        Command::Gradcheck {
            common,
            inject_sign_flip,
        } => {
            let cfg = load(&common)?;
            let report = run_gradcheck(&GradcheckOptions {
                seed: cfg.seeds[0],
                flip_layer: inject_sign_flip,
                ..Default::default()
            })?;
            for s in &report.suites {
                for l in &s.layers {
                    println!("{:<28} {:<14} {:.3e}", s.suite, l.layer, l.max_rel_error);
                }
            }
            println!(
                "gradcheck {} (tolerance {:e})",
                if report.passed { "PASS" } else { "FAIL" },
                report.tolerance
            );
            return Ok(report.passed);
        }
        Command::Analyze {
            common,
            checkpoint,
            agg_checkpoint,
            self_distance,
        } => {
            let cfg = load(&common)?;
            let rows = cmd_analyze(&cfg, checkpoint.as_deref(), agg_checkpoint.as_deref(), self_distance)?;
            for r in &rows {
                println!(
                    "{:<14} source {} target {} d2 {:.6}",
                    r.method, r.source_domain, r.target_domain, r.frechet_sq
                );
            }
            println!("wrote {}", cfg.out_dir.join(FRECHET_FILE).display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
