//! Meta-training loss and meta-objective.
//!
//! Each loss is split into a draw (mixup plans, distilled targets, frozen
//! foreign features) and a deterministic evaluation of the loss and its exact
//! gradient for a given model. Replaying the same draws makes the evaluation
//! a pure function of the parameters, which is what finite differences need.

use rand::Rng;

use super::config::{FeatureSource, TrainConfig};
use crate::augment::{build_alpha_objective, build_alpha_train, distill_label_matrix, MixupPlan};
use crate::data::FeatureBatch;
use crate::models::{DomainModel, ModelBank};
use crate::numerics::{soft_cross_entropy, softmax_cross_entropy_grad, softmax_rows, LayerGradients, Matrix};
use crate::{Error, Result};

/// A mixup term: the plan, its mixed soft labels, and the features of any
/// domain that do not depend on the model under training.
#[derive(Debug, Clone, PartialEq)]
pub struct MixupTerm {
    pub plan: MixupPlan,
    pub targets: Matrix,
    /// `Some(z_j)` when domain `j`'s features are fixed; `None` when they are
    /// recomputed by the evaluated model's extractor.
    pub frozen: Vec<Option<Matrix>>,
}

/// Random draws behind one meta-training loss.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainAugmentation {
    pub mixup: Option<MixupTerm>,
    /// Distilled soft labels for the domain's own batch.
    pub distill: Option<Matrix>,
}

/// Random draws behind one meta-objective.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectiveAugmentation {
    pub mixup: Option<MixupTerm>,
}

/// A loss value with its gradient over extractor then classifier layers.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub loss: f64,
    pub grads: LayerGradients,
}

fn check_batches(bank: &ModelBank, batches: &[FeatureBatch], s: usize) -> Result<()> {
    if batches.len() != bank.len() {
        return Err(Error::shape(
            "meta loss",
            format!("{} domain batches for {} models", batches.len(), bank.len()),
        ));
    }
    if s >= bank.len() {
        return Err(Error::Parameter(format!(
            "domain {s} out of range for {} models",
            bank.len()
        )));
    }
    if let Some(b) = batches.iter().find(|b| b.is_empty()) {
        return Err(Error::Data(format!("domain {} batch is empty", b.domain_index)));
    }
    Ok(())
}

fn mixup_term(
    s: usize,
    bank: &ModelBank,
    batches: &[FeatureBatch],
    plan: MixupPlan,
    source: FeatureSource,
) -> Result<MixupTerm> {
    let labels: Vec<&Matrix> = batches.iter().map(|b| &b.labels).collect();
    let targets = plan.mix(&labels, "mixup labels")?;
    let frozen = batches
        .iter()
        .enumerate()
        .map(|(j, b)| match source {
            FeatureSource::Domain if j != s => bank.model(j).extract(&b.features).map(Some),
            _ => Ok(None),
        })
        .collect::<Result<_>>()?;
    Ok(MixupTerm { plan, targets, frozen })
}

fn batch_sizes(batches: &[FeatureBatch]) -> Vec<usize> {
    batches.iter().map(FeatureBatch::len).collect()
}

/// Draws the mixup plan and distilled labels for model `s`, in that order.
pub fn draw_train_augmentation<R: Rng + ?Sized>(
    s: usize,
    bank: &ModelBank,
    batches: &[FeatureBatch],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainAugmentation> {
    check_batches(bank, batches, s)?;
    if cfg.use_distill && bank.len() < 2 {
        return Err(Error::Config("distillation needs at least two source domains".into()));
    }
    let n = batches[s].len();
    let sizes = batch_sizes(batches);
    let plan = if cfg.use_dmix_train {
        let alpha = build_alpha_train(s, bank.len(), cfg.alpha_max, cfg.alpha_min)?;
        Some(MixupPlan::dirichlet(&sizes, &alpha, n, rng)?)
    } else if cfg.use_classic_mixup {
        Some(MixupPlan::classic(&sizes, cfg.alpha_max, n, rng)?)
    } else {
        None
    };
    let mixup = plan
        .map(|p| mixup_term(s, bank, batches, p, cfg.feature_source))
        .transpose()?;
    let distill = if cfg.use_distill {
        let teachers: Vec<&DomainModel> = bank.models().iter().filter(|m| m.domain_index() != s).collect();
        Some(distill_label_matrix(&batches[s].features, &teachers, rng)?)
    } else {
        None
    };
    Ok(TrainAugmentation { mixup, distill })
}

/// Draws the meta-objective mixup plan for model `s`.
pub fn draw_objective_augmentation<R: Rng + ?Sized>(
    s: usize,
    bank: &ModelBank,
    batches: &[FeatureBatch],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<ObjectiveAugmentation> {
    check_batches(bank, batches, s)?;
    let mixup = if cfg.use_dmix_obj {
        let alpha = build_alpha_objective(s, bank.len(), cfg.alpha_max, cfg.alpha_min)?;
        let plan = MixupPlan::dirichlet(&batch_sizes(batches), &alpha, batches[s].len(), rng)?;
        Some(mixup_term(s, bank, batches, plan, cfg.feature_source)?)
    } else {
        None
    };
    Ok(ObjectiveAugmentation { mixup })
}

/// `CE(G(F(x_s)), y_s) + CE(G(z_mix), y_mix) + CE(G(F(x_s)), y_distill)`,
/// each term a mean over its rows and present only when drawn.
pub fn meta_train_loss_with(
    model: &DomainModel,
    s: usize,
    batches: &[FeatureBatch],
    aug: &TrainAugmentation,
) -> Result<LossEval> {
    let mut direct = vec![(s, &batches[s].labels)];
    if let Some(d) = &aug.distill {
        direct.push((s, d));
    }
    evaluate(model, batches, &direct, aug.mixup.as_ref())
}

/// `Σ_{j≠s} CE(G'(F'(x_j)), y_j) + CE(G'(z'_mix), y'_mix)` for the updated model.
pub fn meta_objective_loss_with(
    theta_prime: &DomainModel,
    s: usize,
    batches: &[FeatureBatch],
    aug: &ObjectiveAugmentation,
) -> Result<LossEval> {
    let direct: Vec<(usize, &Matrix)> = batches
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != s)
        .map(|(j, b)| (j, &b.labels))
        .collect();
    evaluate(theta_prime, batches, &direct, aug.mixup.as_ref())
}

/// Draws and evaluates the meta-training loss of model `s` in the bank.
pub fn meta_train_loss<R: Rng + ?Sized>(
    s: usize,
    bank: &ModelBank,
    batches: &[FeatureBatch],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(LossEval, TrainAugmentation)> {
    let aug = draw_train_augmentation(s, bank, batches, cfg, rng)?;
    Ok((meta_train_loss_with(bank.model(s), s, batches, &aug)?, aug))
}

/// Draws and evaluates the meta-objective of the updated model `theta_prime`.
pub fn meta_objective_loss<R: Rng + ?Sized>(
    s: usize,
    theta_prime: &DomainModel,
    bank: &ModelBank,
    batches: &[FeatureBatch],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(LossEval, ObjectiveAugmentation)> {
    let aug = draw_objective_augmentation(s, bank, batches, cfg, rng)?;
    Ok((meta_objective_loss_with(theta_prime, s, batches, &aug)?, aug))
}

/// Plain mean cross-entropy of `model` on one batch.
pub fn supervised_loss(model: &DomainModel, batch: &FeatureBatch) -> Result<LossEval> {
    evaluate(model, std::slice::from_ref(batch), &[(0, &batch.labels)], None)
}

/// `θ' = θ − η·g` on a copy of model `s`.
pub fn inner_update(s: usize, bank: &ModelBank, grads: &LayerGradients, eta: f64) -> Result<DomainModel> {
    let mut m = bank.model(s).clone();
    m.sgd_step(grads, eta)?;
    Ok(m)
}

/// Loss and gradient of a sum of cross-entropy terms. Direct terms classify
/// `F(x_j)`; the mixup term classifies the planned mix of per-domain features.
fn evaluate(
    model: &DomainModel,
    batches: &[FeatureBatch],
    direct: &[(usize, &Matrix)],
    mixup: Option<&MixupTerm>,
) -> Result<LossEval> {
    let n_dom = batches.len();
    let mut needed = vec![false; n_dom];
    for &(j, _) in direct {
        needed[j] = true;
    }
    if let Some(m) = mixup {
        if m.frozen.len() != n_dom {
            return Err(Error::Contract(
                "mixup term covers a different number of domains".into(),
            ));
        }
        for (j, f) in m.frozen.iter().enumerate() {
            needed[j] |= f.is_none();
        }
    }

    let mut forward = Vec::with_capacity(n_dom);
    for (j, b) in batches.iter().enumerate() {
        forward.push(if needed[j] {
            Some(model.forward_extractor(&b.features)?)
        } else {
            None
        });
    }
    let mut dz: Vec<Option<Matrix>> = forward
        .iter()
        .map(|f| f.as_ref().map(|(_, z)| Matrix::zeros(z.rows(), z.cols())))
        .collect();
    let mut class_grads = LayerGradients::zeros_like(model.classifier());
    let mut loss = 0.0;

    let mut classify = |z: &Matrix, targets: &Matrix| -> Result<Matrix> {
        let (cache, logits) = model.forward_classifier(z)?;
        let probs = softmax_rows(&logits);
        loss += soft_cross_entropy(&probs, targets)?;
        let back = model.backward_classifier(&cache, &softmax_cross_entropy_grad(&probs, targets)?)?;
        class_grads.add_assign(&back.grads)?;
        Ok(back.input_grad)
    };

    for &(j, targets) in direct {
        let (_, z) = forward[j].as_ref().expect("marked as needed");
        let g = classify(z, targets)?;
        dz[j].as_mut().expect("marked as needed").add_assign(&g)?;
    }
    if let Some(m) = mixup {
        let parts: Vec<&Matrix> = m
            .frozen
            .iter()
            .zip(&forward)
            .map(|(f, fw)| f.as_ref().unwrap_or_else(|| &fw.as_ref().expect("marked as needed").1))
            .collect();
        let z_mix = m.plan.mix(&parts, "mixup features")?;
        let g = classify(&z_mix, &m.targets)?;
        let rows: Vec<usize> = parts.iter().map(|p| p.rows()).collect();
        for (j, gj) in m.plan.scatter(&g, &rows)?.into_iter().enumerate() {
            if m.frozen[j].is_none() {
                dz[j].as_mut().expect("marked as needed").add_assign(&gj)?;
            }
        }
    }

    let mut ext_grads = LayerGradients::zeros_like(model.extractor());
    for (fw, d) in forward.iter().zip(&dz) {
        if let (Some((cache, _)), Some(d)) = (fw, d) {
            ext_grads.add_assign(&model.backward_extractor(cache, d)?.grads)?;
        }
    }
    Ok(LossEval {
        loss,
        grads: ext_grads.concat(class_grads),
    })
}
