//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

#![allow(clippy::needless_range_loop)]

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use sha2::{Digest, Sha256};

use opendg::analysis::{fit_stats, frechet_distance, DomainStats};
use opendg::augment::{dir_mixup, sample_dirichlet, DirichletParams};
use opendg::cli::{
    cmd_ablate, cmd_train, run_gradcheck, seed_dir, ExperimentConfig, GradcheckOptions, Method, CHECKPOINT_FILE,
    REPORT_FILE, TRAIN_LOG_FILE,
};
use opendg::data::{FeatureBatch, Label};
use opendg::inference::{evaluate_predictions, h_score, EnsemblePrediction};
use opendg::meta::{meta_step, TrainConfig};
use opendg::models::{Architecture, ModelBank};
use opendg::numerics::Matrix;
use opendg::rng::seeded;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut params = 0;
    for seed in 0..3 {
        let r = run_gradcheck(&GradcheckOptions {
            seed,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        for s in &r.suites {
            params = params.max(s.params);
            worst = worst.max(s.max_rel_error);
            ensure(s.max_rel_error < 1e-4, || {
                format!("seed {seed} {}: {:.3e}", s.suite, s.max_rel_error)
            })?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(params <= 500, || format!("{params} parameters"))?;
    ensure(secs < 30.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "max rel error {worst:.2e} over 4 suites x 3 seeds, {params} params, {secs:.2}s"
    ))
}

/// Dense layer held as row-major `in x out` weights plus bias.
struct Layer {
    w: Vec<f64>,
    b: Vec<f64>,
    n_in: usize,
    n_out: usize,
    relu: bool,
}

fn oracle_layers(bank: &ModelBank, s: usize) -> Vec<Layer> {
    let m = bank.model(s);
    let mut out = Vec::new();
    for (mlp, relu) in [(m.extractor(), true), (m.classifier(), false)] {
        for l in mlp.layers() {
            out.push(Layer {
                w: l.weights.data().to_vec(),
                b: l.bias.clone(),
                n_in: l.in_dim(),
                n_out: l.out_dim(),
                relu,
            });
        }
    }
    out
}

/// Gradient of the mean softmax cross-entropy, one sample at a time.
fn oracle_grad(layers: &[Layer], xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = xs.len() as f64;
    let mut grads: Vec<(Vec<f64>, Vec<f64>)> = layers
        .iter()
        .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
        .collect();
    for (x, y) in xs.iter().zip(ys) {
        let mut acts = vec![x.clone()];
        let mut pres = Vec::new();
        for l in layers {
            let h = acts.last().unwrap();
            let mut a = l.b.clone();
            for j in 0..l.n_out {
                for i in 0..l.n_in {
                    a[j] += h[i] * l.w[i * l.n_out + j];
                }
            }
            let out: Vec<f64> = a.iter().map(|&v| if l.relu && v < 0.0 { 0.0 } else { v }).collect();
            pres.push(a);
            acts.push(out);
        }
        let logits = acts.last().unwrap();
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|v| (v - mx).exp()).collect();
        let z: f64 = e.iter().sum();
        let mut delta: Vec<f64> = e.iter().zip(y).map(|(ei, yi)| (ei / z - yi) / n).collect();
        for k in (0..layers.len()).rev() {
            let l = &layers[k];
            if l.relu {
                for (d, a) in delta.iter_mut().zip(&pres[k]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let h = &acts[k];
            for i in 0..l.n_in {
                for j in 0..l.n_out {
                    grads[k].0[i * l.n_out + j] += h[i] * delta[j];
                }
            }
            for j in 0..l.n_out {
                grads[k].1[j] += delta[j];
            }
            let mut prev = vec![0.0; l.n_in];
            for (i, p) in prev.iter_mut().enumerate() {
                for j in 0..l.n_out {
                    *p += l.w[i * l.n_out + j] * delta[j];
                }
            }
            delta = prev;
        }
    }
    grads
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(<[f64]>::to_vec).collect()
}

fn meta_step_oracle() -> Outcome {
    let arch = Architecture {
        input_dim: 3,
        hidden_dims: vec![5],
        feature_dim: 4,
        num_classes: 3,
    };
    let mut rng = seeded(21, 0);
    let mut bank = ModelBank::new(&arch, 2, &mut rng).map_err(|e| e.to_string())?;
    let mut batch = |d: usize, n: usize| {
        let f = Matrix::from_vec(n, 3, (0..n * 3).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let labels = (0..n).map(|i| Label::Known((i + d) % 3)).collect();
        FeatureBatch::new(d, 3, f, labels)
    };
    let tr = vec![batch(0, 6), batch(1, 7)];
    let obj = vec![batch(0, 5), batch(1, 4)];
    let cfg = TrainConfig {
        eta: 0.05,
        beta: 0.1,
        use_dmix_train: false,
        use_dmix_obj: false,
        use_distill: false,
        ..TrainConfig::default()
    };

    let mut expected = Vec::new();
    for s in 0..2 {
        let theta = oracle_layers(&bank, s);
        let g_tr = oracle_grad(&theta, &rows_of(&tr[s].features), &rows_of(&tr[s].labels));
        let prime: Vec<Layer> = theta
            .iter()
            .zip(&g_tr)
            .map(|(l, (gw, gb))| Layer {
                w: l.w.iter().zip(gw).map(|(w, g)| w - cfg.eta * g).collect(),
                b: l.b.iter().zip(gb).map(|(b, g)| b - cfg.eta * g).collect(),
                n_in: l.n_in,
                n_out: l.n_out,
                relu: l.relu,
            })
            .collect();
        let o = 1 - s;
        let g_obj = oracle_grad(&prime, &rows_of(&obj[o].features), &rows_of(&obj[o].labels));
        for ((l, (tw, tb)), (ow, ob)) in theta.iter().zip(&g_tr).zip(&g_obj) {
            expected.extend(
                l.w.iter()
                    .zip(tw.iter().zip(ow))
                    .map(|(w, (a, b))| w - cfg.beta * (a + b)),
            );
            expected.extend(
                l.b.iter()
                    .zip(tb.iter().zip(ob))
                    .map(|(w, (a, b))| w - cfg.beta * (a + b)),
            );
        }
    }

    let before = bank.flat_params();
    meta_step(&mut bank, &tr, &obj, &cfg, &mut seeded(0, 0)).map_err(|e| e.to_string())?;
    let got = bank.flat_params();
    ensure(got.len() == expected.len(), || {
        format!("{} vs {} parameters", got.len(), expected.len())
    })?;
    let moved = got.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let err = got
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(moved > 1e-4, || {
        format!("step barely moved the parameters ({moved:.1e})")
    })?;
    ensure(err < 1e-10, || format!("max abs error {err:.3e}"))?;
    Ok(format!(
        "max abs error {err:.2e} over {} parameters (max move {moved:.2e})",
        got.len()
    ))
}

/// Raw moment `E[X^k]` of `Beta(a, a0 - a)`.
fn beta_raw_moment(a: f64, a0: f64, k: u32) -> f64 {
    (0..k).map(|r| (a + r as f64) / (a0 + r as f64)).product()
}

fn dirichlet_moments() -> Outcome {
    let n = 100_000;
    let mut worst: f64 = 0.0;
    for (t, alpha) in [vec![0.6, 0.2, 0.2], vec![1.0, 1.0], vec![5.0, 5.0, 5.0]]
        .into_iter()
        .enumerate()
    {
        let params = DirichletParams::new(alpha.clone()).map_err(|e| e.to_string())?;
        let mut rng = seeded(100 + t as u64, 0);
        let k = alpha.len();
        let draws: Vec<Vec<f64>> = (0..n)
            .map(|_| sample_dirichlet(&params, &mut rng).into_inner())
            .collect();
        let a0: f64 = alpha.iter().sum();
        for i in 0..k {
            let m1 = beta_raw_moment(alpha[i], a0, 1);
            let m2 = beta_raw_moment(alpha[i], a0, 2);
            let m3 = beta_raw_moment(alpha[i], a0, 3);
            let m4 = beta_raw_moment(alpha[i], a0, 4);
            let var = m2 - m1 * m1;
            let mu4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4);
            let emp_mean = draws.iter().map(|d| d[i]).sum::<f64>() / n as f64;
            let emp_var = draws.iter().map(|d| (d[i] - emp_mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let z_mean = (emp_mean - m1).abs() / (var / n as f64).sqrt();
            let z_var = (emp_var - var).abs() / ((mu4 - var * var) / n as f64).sqrt();
            worst = worst.max(z_mean).max(z_var);
            ensure(z_mean < 4.0 && z_var < 4.0, || {
                format!("alpha {alpha:?} component {i}: mean z {z_mean:.2}, variance z {z_var:.2}")
            })?;
        }
    }
    Ok(format!("largest deviation {worst:.2} standard errors"))
}

fn mixup_invariants() -> Outcome {
    let mut rng = seeded(3, 0);
    let mut total = 0;
    let mut worst_sum: f64 = 0.0;
    while total < 10_000 {
        let domains = rng.random_range(2..=4);
        let classes = rng.random_range(2..=6);
        let dim = rng.random_range(1..=5);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..domains {
            let rows = rng.random_range(1..=8);
            feats.push(
                Matrix::from_vec(
                    rows,
                    dim,
                    (0..rows * dim).map(|_| rng.random_range(-10.0..10.0)).collect(),
                )
                .unwrap(),
            );
            let mut y = Matrix::zeros(rows, classes);
            for r in 0..rows {
                y.set(r, rng.random_range(0..classes), 1.0);
            }
            labels.push(y);
        }
        let alpha = DirichletParams::new((0..domains).map(|_| rng.random_range(0.05..3.0)).collect()).unwrap();
        let samples = dir_mixup(&feats, &labels, &alpha, 100, &mut rng).map_err(|e| e.to_string())?;
        for s in &samples {
            let sum: f64 = s.soft_label.iter().sum();
            worst_sum = worst_sum.max((sum - 1.0).abs());
            ensure((sum - 1.0).abs() <= 1e-9, || format!("label sum {sum}"))?;
            ensure(s.soft_label.iter().all(|&v| v >= 0.0), || {
                format!("negative label {:?}", s.soft_label)
            })?;
            for c in 0..dim {
                let vals: Vec<f64> = s.rows.iter().enumerate().map(|(d, &r)| feats[d].get(r, c)).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
                ensure(s.feature[c] >= lo - slack && s.feature[c] <= hi + slack, || {
                    format!("coordinate {c} = {} outside [{lo}, {hi}]", s.feature[c])
                })?;
            }
        }
        total += samples.len();
    }
    Ok(format!("{total} samples, max |label sum - 1| {worst_sum:.1e}"))
}

fn open_set_metrics() -> Outcome {
    let mut rng = seeded(5, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (a, u): (f64, f64) = (rng.random(), rng.random());
        let err = (h_score(a, u) - 2.0 * a * u / (a + u)).abs();
        worst = worst.max(err);
        ensure(err <= 1e-12, || format!("h_score({a}, {u}) off by {err:e}"))?;
    }

    let classes = 6;
    let preds: Vec<EnsemblePrediction> = (0..400)
        .map(|_| {
            let raw: Vec<f64> = (0..classes).map(|_| rng.random::<f64>().powi(3)).collect();
            let z: f64 = raw.iter().sum();
            EnsemblePrediction::from_probs(raw.iter().map(|v| v / z).collect())
        })
        .collect();
    let truth: Vec<Label> = (0..400)
        .map(|_| {
            let k = rng.random_range(0..=classes);
            if k == classes {
                Label::Open
            } else {
                Label::Known(k)
            }
        })
        .collect();
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..50 {
        let t = i as f64 / 49.0;
        let r = evaluate_predictions(&preds, &truth, t).map_err(|e| e.to_string())?;
        let (k, u) = (r.acc_known.unwrap(), r.acc_unknown.unwrap());
        if let Some((pk, pu)) = prev {
            ensure(k <= pk && u >= pu, || {
                format!("threshold {t}: ({pk}, {pu}) -> ({k}, {u})")
            })?;
        }
        prev = Some((k, u));
    }
    Ok(format!("h-score max error {worst:.1e}; 50-threshold sweep monotone"))
}

fn frechet_properties() -> Outcome {
    let diag = |mean: Vec<f64>, var: &[f64]| {
        let mut c = Matrix::zeros(var.len(), var.len());
        for (i, v) in var.iter().enumerate() {
            c.set(i, i, *v);
        }
        DomainStats {
            mean,
            covariance: c,
            n: 2,
        }
    };
    let mut rng = seeded(6, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let d = rng.random_range(1..=8);
        let rows = 3 * d + 2;
        let x = Matrix::from_vec(rows, d, (0..rows * d).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
        let y = Matrix::from_vec(rows, d, (0..rows * d).map(|_| rng.random_range(-1.0..4.0)).collect()).unwrap();
        let (a, b) = (fit_stats(&x).unwrap(), fit_stats(&y).unwrap());
        let zero = frechet_distance(&a, &a).map_err(|e| e.to_string())?;
        ensure(zero.abs() <= 1e-8, || format!("self distance {zero:e}"))?;
        let ab = frechet_distance(&a, &b).map_err(|e| e.to_string())?;
        let ba = frechet_distance(&b, &a).map_err(|e| e.to_string())?;
        ensure((ab - ba).abs() <= 1e-8, || format!("asymmetric: {ab} vs {ba}"))?;

        let (m1, m2, s1, s2): (f64, f64, f64, f64) = (
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(0.0..4.0),
            rng.random_range(0.0..4.0),
        );
        let one = frechet_distance(&diag(vec![m1], &[s1 * s1]), &diag(vec![m2], &[s2 * s2])).unwrap();
        let expect = (m1 - m2).powi(2) + (s1 - s2).powi(2);
        ensure((one - expect).abs() <= 1e-8, || format!("1-D: {one} vs {expect}"))?;
        worst = worst.max(zero.abs()).max((ab - ba).abs()).max((one - expect).abs());

        let ma: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mb: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let va: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..3.0)).collect();
        let vb: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..3.0)).collect();
        let got = frechet_distance(&diag(ma.clone(), &va), &diag(mb.clone(), &vb)).unwrap();
        let expect: f64 = (0..d)
            .map(|i| (ma[i] - mb[i]).powi(2) + (va[i].sqrt() - vb[i].sqrt()).powi(2))
            .sum();
        ensure((got - expect).abs() <= 1e-8, || format!("diagonal: {got} vs {expect}"))?;
        worst = worst.max((got - expect).abs());
    }
    Ok(format!("50 random cases, largest deviation {worst:.1e}"))
}

fn benchmark_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        out_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn directional_experiment() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let mut h = Vec::new();
    for method in [Method::Daml, Method::Agg] {
        let cfg = ExperimentConfig {
            method,
            ..benchmark_config(dir.path())
        };
        ensure(cfg.seeds.len() == 5, || "default config must have 5 seeds".into())?;
        let m = cmd_train(&cfg).map_err(|e| e.to_string())?;
        h.push(m.aggregate["h_score"].mean);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 300.0, || format!("took {secs:.0}s"))?;
    ensure(h[0] > h[1], || format!("DAML H-score {:.4} <= AGG {:.4}", h[0], h[1]))?;
    Ok(format!("mean H-score DAML {:.4} > AGG {:.4} ({secs:.1}s)", h[0], h[1]))
}

fn ablation_ordering() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = cmd_ablate(&benchmark_config(dir.path())).map_err(|e| e.to_string())?;
    let acc = |m: Method| {
        report
            .summary
            .iter()
            .find(|s| s.variant == m)
            .map(|s| s.stats["acc_known"].mean)
    };
    let (full, raw) = (
        acc(Method::Daml).ok_or("no daml row")?,
        acc(Method::MetaOnly).ok_or("no meta_only row")?,
    );
    ensure(report.summary.len() == 7, || {
        format!("{} variants", report.summary.len())
    })?;
    ensure(full >= raw, || format!("DAML acc_known {full:.4} < meta-only {raw:.4}"))?;
    Ok(format!("mean acc_known DAML {full:.4} >= meta-only {raw:.4}"))
}

fn file_hash(path: &Path) -> Result<String, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn determinism() -> Outcome {
    let mut hashes = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cfg = ExperimentConfig {
            seeds: vec![3],
            ..benchmark_config(dir.path())
        };
        cmd_train(&cfg).map_err(|e| e.to_string())?;
        let run = seed_dir(dir.path(), "daml", 3);
        hashes.push(
            [CHECKPOINT_FILE, REPORT_FILE, TRAIN_LOG_FILE]
                .iter()
                .map(|f| file_hash(&run.join(f)))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    ensure(hashes[0] == hashes[1], || format!("{:?} vs {:?}", hashes[0], hashes[1]))?;
    Ok(format!(
        "checkpoint {}…, report {}… identical",
        &hashes[0][0][..12],
        &hashes[0][1][..12]
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("gradient correctness", gradient_correctness),
        ("first-order meta-step oracle", meta_step_oracle),
        ("Dirichlet sampler moments", dirichlet_moments),
        ("mixup invariants", mixup_invariants),
        ("open-set metrics", open_set_metrics),
        ("Fréchet distance", frechet_properties),
        ("directional experiment DAML vs AGG", directional_experiment),
        ("ablation ordering", ablation_ordering),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
