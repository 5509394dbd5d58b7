use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::{TrainConfig, UpdateOrder};
use super::loss::{draw_objective_augmentation, inner_update, meta_objective_loss_with, meta_train_loss, LossEval};
use crate::data::FeatureBatch;
use crate::models::{DomainModel, ModelBank};
use crate::numerics::LayerGradients;
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// One training-log line: the losses of one domain at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub domain: usize,
    pub l_tr: f64,
    /// Absent when meta-learning is disabled.
    pub l_obj: Option<f64>,
    /// Norm of the combined outer gradient.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaStepReport {
    pub epoch: usize,
    pub step: usize,
    pub domains: Vec<StepRecord>,
}

/// Position in the run and the outer learning rate to use.
#[derive(Debug, Clone, PartialEq)]
pub struct StepContext {
    pub epoch: usize,
    pub step: usize,
    pub beta: f64,
    /// Order in which domains are processed.
    pub order: Vec<usize>,
}

impl StepContext {
    pub fn new(epoch: usize, step: usize, beta: f64, num_domains: usize) -> Self {
        Self {
            epoch,
            step,
            beta,
            order: (0..num_domains).collect(),
        }
    }
}

struct InnerResult {
    l_tr: f64,
    g_tr: LayerGradients,
    theta_prime: Option<DomainModel>,
}

fn inner(
    s: usize,
    bank: &ModelBank,
    batch_tr: &[FeatureBatch],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<InnerResult> {
    let (LossEval { loss, grads }, _) = meta_train_loss(s, bank, batch_tr, cfg, rng)?;
    let theta_prime = if cfg.use_meta {
        Some(inner_update(s, bank, &grads, cfg.eta)?)
    } else {
        None
    };
    Ok(InnerResult {
        l_tr: loss,
        g_tr: grads,
        theta_prime,
    })
}

/// `g_tr + g_obj`, with `g_obj` taken at `θ'` and used as a gradient at `θ`.
fn outer(
    s: usize,
    inner: InnerResult,
    bank: &ModelBank,
    batch_obj: &[FeatureBatch],
    cfg: &TrainConfig,
    ctx: &StepContext,
    rng: &mut Rng,
) -> Result<(StepRecord, LayerGradients)> {
    let mut grads = inner.g_tr;
    let l_obj = match &inner.theta_prime {
        Some(theta) => {
            let aug = draw_objective_augmentation(s, bank, batch_obj, cfg, rng)?;
            let obj = meta_objective_loss_with(theta, s, batch_obj, &aug)?;
            grads.add_assign(&obj.grads)?;
            Some(obj.loss)
        }
        None => None,
    };
    let record = StepRecord {
        epoch: ctx.epoch,
        step: ctx.step,
        domain: s,
        l_tr: inner.l_tr,
        l_obj,
        grad_norm: grads.norm(),
    };
    let finite = record.l_tr.is_finite() && l_obj.is_none_or(f64::is_finite) && grads.is_finite();
    if !finite {
        return Err(Error::Numeric(format!(
            "non-finite loss or gradient at epoch {} step {} domain {s}: l_tr={} l_obj={:?} grad_norm={}",
            ctx.epoch, ctx.step, record.l_tr, l_obj, record.grad_norm
        )));
    }
    Ok((record, grads))
}

/// One first-order meta step over all domains with `cfg.beta`.
pub fn meta_step(
    bank: &mut ModelBank,
    batch_tr: &[FeatureBatch],
    batch_obj: &[FeatureBatch],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<MetaStepReport> {
    let ctx = StepContext::new(0, 0, cfg.beta, bank.len());
    meta_step_with(bank, batch_tr, batch_obj, cfg, &ctx, rng)
}

/// One first-order meta step. For each domain `s`:
/// `g_tr = ∇L_tr(θ_s)`, `θ' = θ_s − η g_tr`, `g_obj = ∇L_obj(θ')`, and
/// `θ_s ← θ_s − β (g_tr + g_obj)`. Domain `s` draws its augmentation from
/// stream `s` of a per-step seed, so results do not depend on `ctx.order`
/// under [`UpdateOrder::GatherThenApply`].
pub fn meta_step_with(
    bank: &mut ModelBank,
    batch_tr: &[FeatureBatch],
    batch_obj: &[FeatureBatch],
    cfg: &TrainConfig,
    ctx: &StepContext,
    rng: &mut Rng,
) -> Result<MetaStepReport> {
    if !(ctx.beta >= 0.0 && ctx.beta.is_finite()) {
        return Err(Error::Parameter(format!(
            "beta must be finite and >= 0, got {}",
            ctx.beta
        )));
    }
    let mut order = ctx.order.clone();
    order.sort_unstable();
    if order != (0..bank.len()).collect::<Vec<_>>() {
        return Err(Error::Parameter(format!(
            "domain order {:?} is not a permutation of 0..{}",
            ctx.order,
            bank.len()
        )));
    }
    let step_seed: u64 = rng.random();
    let mut streams: Vec<Rng> = (0..bank.len()).map(|s| rng::seeded(step_seed, s as u64)).collect();

    let mut records = Vec::with_capacity(bank.len());
    match cfg.update_order {
        UpdateOrder::GatherThenApply => {
            let mut updates = Vec::with_capacity(bank.len());
            for &s in &ctx.order {
                let rng = &mut streams[s];
                let r = inner(s, bank, batch_tr, cfg, rng)?;
                let (record, grads) = outer(s, r, bank, batch_obj, cfg, ctx, rng)?;
                records.push(record);
                updates.push((s, grads));
            }
            for (s, grads) in updates {
                bank.model_mut(s).sgd_step(&grads, ctx.beta)?;
            }
        }
        UpdateOrder::InLoop => {
            let mut inners = Vec::with_capacity(bank.len());
            for &s in &ctx.order {
                inners.push((s, inner(s, bank, batch_tr, cfg, &mut streams[s])?));
            }
            for (s, r) in inners {
                let (record, grads) = outer(s, r, bank, batch_obj, cfg, ctx, &mut streams[s])?;
                records.push(record);
                bank.model_mut(s).sgd_step(&grads, ctx.beta)?;
            }
        }
    }
    records.sort_by_key(|r| r.domain);
    Ok(MetaStepReport {
        epoch: ctx.epoch,
        step: ctx.step,
        domains: records,
    })
}
