use rand::Rng as _;
use serde::Serialize;

use crate::data::{FeatureBatch, Label};
use crate::meta::{
    draw_objective_augmentation, draw_train_augmentation, inner_update, meta_objective_loss_with, meta_train_loss_with,
    FeatureSource, TrainConfig,
};
use crate::models::{Architecture, DomainModel, ModelBank};
use crate::numerics::{LayerGradients, Matrix};
use crate::rng;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    /// Test hook: negates the analytic gradient of this layer index
    /// (extractor layers first, then classifier layers) in every suite.
    pub flip_layer: Option<usize>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            step: 1e-5,
            tolerance: 1e-4,
            flip_layer: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerError {
    pub layer: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub suite: String,
    pub params: usize,
    pub layers: Vec<LayerError>,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub suites: Vec<SuiteResult>,
    pub passed: bool,
}

const DOMAINS: usize = 3;
const CLASSES: usize = 4;

fn tiny_arch() -> Architecture {
    Architecture {
        input_dim: 4,
        hidden_dims: vec![6],
        feature_dim: 5,
        num_classes: CLASSES,
    }
}

fn random_batches(rng: &mut rng::Rng) -> Vec<FeatureBatch> {
    (0..DOMAINS)
        .map(|d| {
            let n = 5 + d;
            let f = Matrix::from_vec(n, 4, (0..n * 4).map(|_| rng.random_range(-1.5..1.5)).collect()).expect("sized");
            let labels = (0..n).map(|_| Label::Known(rng.random_range(0..CLASSES))).collect();
            FeatureBatch::new(d, CLASSES, f, labels)
        })
        .collect()
}

/// Zero biases put a sample whose hidden units are all inactive exactly on
/// the next layer's ReLU kink, where finite differences are meaningless.
fn randomize_biases(bank: &mut ModelBank, rng: &mut rng::Rng) {
    for s in 0..bank.len() {
        let m = bank.model_mut(s);
        for l in m.extractor_mut().layers_mut() {
            l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        for l in m.classifier_mut().layers_mut() {
            l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
    }
}

fn layer_names(model: &DomainModel) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    for (part, mlp) in [("extractor", model.extractor()), ("classifier", model.classifier())] {
        for (i, l) in mlp.layers().iter().enumerate() {
            out.push((format!("{part}.{i}"), l.param_count()));
        }
    }
    out
}

fn check(
    suite: &str,
    model: &DomainModel,
    mut analytic: LayerGradients,
    loss: impl Fn(&DomainModel) -> Result<f64>,
    opts: &GradcheckOptions,
) -> Result<SuiteResult> {
    if let Some(k) = opts.flip_layer {
        if let Some(l) = analytic.layers.get_mut(k) {
            l.weights.scale(-1.0);
            for b in &mut l.bias {
                *b = -*b;
            }
        }
    }
    let g = analytic.flatten();
    let p0 = model.flat_params();
    let mut probe = model.clone();
    let mut layers = Vec::new();
    let mut offset = 0;
    for (name, count) in layer_names(model) {
        let mut worst: f64 = 0.0;
        for i in offset..offset + count {
            let mut p = p0.clone();
            p[i] += opts.step;
            probe.set_flat_params(&p)?;
            let up = loss(&probe)?;
            p[i] -= 2.0 * opts.step;
            probe.set_flat_params(&p)?;
            let down = loss(&probe)?;
            let fd = (up - down) / (2.0 * opts.step);
            let denom = fd.abs().max(g[i].abs()).max(1e-6);
            worst = worst.max((fd - g[i]).abs() / denom);
        }
        offset += count;
        layers.push(LayerError {
            layer: name,
            max_rel_error: worst,
        });
    }
    let max_rel_error = layers.iter().map(|l| l.max_rel_error).fold(0.0, f64::max);
    Ok(SuiteResult {
        suite: suite.to_owned(),
        params: p0.len(),
        layers,
        max_rel_error,
    })
}

/// Central finite differences against the analytic gradients of the
/// meta-training loss (Dir-mixup, two-sample mixup, foreign-extractor
/// features) and the meta-objective, on a randomized three-domain model.
pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut rng = rng::seeded(opts.seed, rng::stream::GRADCHECK);
    let mut bank = ModelBank::new(&tiny_arch(), DOMAINS, &mut rng)?;
    randomize_biases(&mut bank, &mut rng);
    let batches = random_batches(&mut rng);
    let base = TrainConfig::default();
    let train_suites = [
        ("meta_train", base.clone()),
        (
            "meta_train_classic_mixup",
            TrainConfig {
                use_dmix_train: false,
                use_classic_mixup: true,
                ..base.clone()
            },
        ),
        (
            "meta_train_domain_features",
            TrainConfig {
                feature_source: FeatureSource::Domain,
                ..base.clone()
            },
        ),
    ];
    let mut suites = Vec::new();
    for (s, (name, cfg)) in train_suites.iter().enumerate() {
        let aug = draw_train_augmentation(s, &bank, &batches, cfg, &mut rng)?;
        let model = bank.model(s);
        let eval = meta_train_loss_with(model, s, &batches, &aug)?;
        suites.push(check(
            name,
            model,
            eval.grads,
            |m| Ok(meta_train_loss_with(m, s, &batches, &aug)?.loss),
            opts,
        )?);
    }

    let s = 0;
    let aug = draw_train_augmentation(s, &bank, &batches, &base, &mut rng)?;
    let tr = meta_train_loss_with(bank.model(s), s, &batches, &aug)?;
    let theta = inner_update(s, &bank, &tr.grads, base.eta)?;
    let obj_aug = draw_objective_augmentation(s, &bank, &batches, &base, &mut rng)?;
    let obj = meta_objective_loss_with(&theta, s, &batches, &obj_aug)?;
    suites.push(check(
        "meta_objective",
        &theta,
        obj.grads,
        |m| Ok(meta_objective_loss_with(m, s, &batches, &obj_aug)?.loss),
        opts,
    )?);

    let passed = suites.iter().all(|r| r.max_rel_error < opts.tolerance);
    Ok(GradcheckReport {
        tolerance: opts.tolerance,
        suites,
        passed,
    })
}
