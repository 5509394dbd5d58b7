use opendg::cli::{train_seed, ExperimentConfig, ExperimentData, Method};
use opendg::data::{generate_synthetic, SyntheticSpec};
use opendg::meta::{supervised_loss, TrainLog};

fn window_means(log: &TrainLog, width: usize) -> Vec<f64> {
    log.epochs
        .chunks(width)
        .map(|c| c.iter().map(|e| e.mean_l_tr).sum::<f64>() / c.len() as f64)
        .collect()
}

#[test]
fn meta_train_loss_trends_down_over_five_epoch_windows() {
    let cfg = ExperimentConfig::default();
    let data = ExperimentData::load(&cfg).unwrap();
    let (_, log) = train_seed(&cfg, Method::Daml, &data, 0).unwrap();
    let w = window_means(&log, 5);
    assert_eq!(w.len(), 6);
    assert!(w.last().unwrap() < &(0.5 * w[0]), "{w:?}");
    let drops = w.windows(2).filter(|p| p[1] < p[0]).count();
    assert!(drops >= 4, "{w:?}");
}

#[test]
fn five_seeds_train_without_non_finite_values() {
    let cfg = ExperimentConfig {
        epochs: 8,
        decay_epoch: 6,
        ..ExperimentConfig::default()
    };
    let data = ExperimentData::load(&cfg).unwrap();
    for seed in 0..5 {
        let (bank, log) = train_seed(&cfg, Method::Daml, &data, seed).unwrap();
        assert!(bank.flat_params().iter().all(|v| v.is_finite()));
        for r in &log.records {
            assert!(r.l_tr.is_finite() && r.l_obj.unwrap().is_finite() && r.grad_norm.is_finite());
        }
    }
}

#[test]
fn agg_fits_separable_data() {
    let cfg = ExperimentConfig {
        synthetic: SyntheticSpec {
            prototype_scale: 4.0,
            noise_scale: 0.3,
            ..SyntheticSpec::default()
        },
        ..ExperimentConfig::default()
    };
    let data = ExperimentData::load(&cfg).unwrap();
    let (bank, log) = train_seed(&cfg, Method::Agg, &data, 0).unwrap();
    assert_eq!(bank.len(), 1);
    let (train, _) = data.split(cfg.validation_fraction, 0).unwrap();
    let merged = opendg::data::Dataset::merge(&train.iter().collect::<Vec<_>>(), 0).unwrap();
    let ce = supervised_loss(bank.model(0), &merged.to_batch()).unwrap().loss;
    assert!(ce < 0.1, "final train CE {ce}");
    assert!(log.epochs.last().unwrap().mean_l_tr < 0.1);
}

#[test]
fn converged_models_are_accurate_on_their_own_domain() {
    let spec = SyntheticSpec {
        prototype_scale: 4.0,
        noise_scale: 0.3,
        ..SyntheticSpec::default()
    };
    let cfg = ExperimentConfig {
        synthetic: spec.clone(),
        ..ExperimentConfig::default()
    };
    let data = ExperimentData::load(&cfg).unwrap();
    let (bank, _) = train_seed(&cfg, Method::Daml, &data, 0).unwrap();
    let sources = generate_synthetic(&spec).unwrap().sources;
    for (s, d) in sources.iter().enumerate() {
        let own = bank.model(s).predict(d.features()).unwrap();
        let mut hits = 0;
        for (r, l) in d.labels().iter().enumerate() {
            let k = l.known().unwrap();
            let row = own.row(r);
            let best = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            hits += usize::from(best == k);
        }
        assert!(hits as f64 / d.len() as f64 > 0.95, "domain {s}: {hits}/{}", d.len());
    }
}
