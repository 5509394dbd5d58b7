//! Feature-level mixup across domains.
//!
//! A [`MixupPlan`] records, for every synthetic sample, which row of which
//! domain batch enters the mix and with what weight. Keeping the plan apart
//! from the features lets the training loss recompute the mix (and route its
//! gradient back to the source rows) after features change.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dirichlet::{sample_dirichlet, DirichletParams, MixupWeights};
use crate::numerics::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixupComponent {
    pub domain: usize,
    pub row: usize,
    pub weight: f64,
}

/// Row choices and weights for a batch of mixup samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixupPlan {
    samples: Vec<Vec<MixupComponent>>,
}

/// A mixed feature and its soft label, with the draw that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MixupSample {
    pub feature: Vec<f64>,
    pub soft_label: Vec<f64>,
    pub weights: MixupWeights,
    /// Chosen row of each domain batch, indexed by domain.
    pub rows: Vec<usize>,
}

fn check_sizes(batch_sizes: &[usize]) -> Result<()> {
    if batch_sizes.is_empty() {
        return Err(Error::Data("mixup needs at least one domain batch".into()));
    }
    if let Some(d) = batch_sizes.iter().position(|&n| n == 0) {
        return Err(Error::Data(format!("domain {d} batch is empty")));
    }
    Ok(())
}

impl MixupPlan {
    /// Draws `n_samples` Dir-mixup combinations: one fresh `λ ~ Dirichlet(α)`
    /// per sample and an independent uniform row from every domain batch.
    pub fn dirichlet<R: Rng + ?Sized>(
        batch_sizes: &[usize],
        alpha: &DirichletParams,
        n_samples: usize,
        rng: &mut R,
    ) -> Result<Self> {
        check_sizes(batch_sizes)?;
        if alpha.len() != batch_sizes.len() {
            return Err(Error::shape(
                "dir_mixup",
                format!("{} concentrations for {} domains", alpha.len(), batch_sizes.len()),
            ));
        }
        let samples = (0..n_samples)
            .map(|_| {
                let lambda = sample_dirichlet(alpha, rng);
                batch_sizes
                    .iter()
                    .zip(lambda.as_slice())
                    .enumerate()
                    .map(|(domain, (&n, &weight))| MixupComponent {
                        domain,
                        row: rng.random_range(0..n),
                        weight,
                    })
                    .collect()
            })
            .collect();
        Ok(Self { samples })
    }

    /// Classic two-sample mixup: two arbitrary rows of the pooled batch mixed
    /// with `λ ~ Beta(a, a)`.
    pub fn classic<R: Rng + ?Sized>(
        batch_sizes: &[usize],
        beta_param: f64,
        n_samples: usize,
        rng: &mut R,
    ) -> Result<Self> {
        check_sizes(batch_sizes)?;
        let beta = DirichletParams::symmetric(beta_param, 2)?;
        let total: usize = batch_sizes.iter().sum();
        let locate = |mut flat: usize| {
            for (domain, &n) in batch_sizes.iter().enumerate() {
                if flat < n {
                    return (domain, flat);
                }
                flat -= n;
            }
            unreachable!("flat index below total")
        };
        let samples = (0..n_samples)
            .map(|_| {
                let lambda = sample_dirichlet(&beta, rng);
                lambda
                    .as_slice()
                    .iter()
                    .map(|&weight| {
                        let (domain, row) = locate(rng.random_range(0..total));
                        MixupComponent { domain, row, weight }
                    })
                    .collect()
            })
            .collect();
        Ok(Self { samples })
    }

    /// A plan from explicit per-sample components.
    pub fn from_components(samples: Vec<Vec<MixupComponent>>) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Vec<MixupComponent>] {
        &self.samples
    }

    /// `(Σ λ z, Σ λ y)` for every planned sample.
    pub fn apply(&self, features: &[&Matrix], labels: &[&Matrix]) -> Result<(Matrix, Matrix)> {
        Ok((self.mix(features, "mixup features")?, self.mix(labels, "mixup labels")?))
    }

    /// Weighted row sums of `parts` following the plan.
    pub fn mix(&self, parts: &[&Matrix], what: &'static str) -> Result<Matrix> {
        let width = parts.first().map_or(0, |m| m.cols());
        if parts.iter().any(|m| m.cols() != width) {
            return Err(Error::shape(what, "domain matrices differ in width"));
        }
        let mut out = Matrix::zeros(self.samples.len(), width);
        for (i, comps) in self.samples.iter().enumerate() {
            let dst = out.row_mut(i);
            for c in comps {
                let src = parts
                    .get(c.domain)
                    .filter(|m| c.row < m.rows())
                    .ok_or_else(|| Error::Contract(format!("plan refers to domain {} row {}", c.domain, c.row)))?
                    .row(c.row);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += c.weight * s;
                }
            }
        }
        Ok(out)
    }

    /// Adjoint of [`MixupPlan::mix`]: spreads `d(mixed)` back onto each domain
    /// matrix of shape `(domain_rows[d], width)`.
    pub fn scatter(&self, grad: &Matrix, domain_rows: &[usize]) -> Result<Vec<Matrix>> {
        if grad.rows() != self.samples.len() {
            return Err(Error::shape(
                "MixupPlan::scatter",
                format!("{} gradient rows for {} samples", grad.rows(), self.samples.len()),
            ));
        }
        let mut out: Vec<Matrix> = domain_rows.iter().map(|&n| Matrix::zeros(n, grad.cols())).collect();
        for (i, comps) in self.samples.iter().enumerate() {
            let g = grad.row(i);
            for c in comps {
                let dst = out
                    .get_mut(c.domain)
                    .filter(|m| c.row < m.rows())
                    .ok_or_else(|| Error::Contract(format!("plan refers to domain {} row {}", c.domain, c.row)))?
                    .row_mut(c.row);
                for (d, s) in dst.iter_mut().zip(g) {
                    *d += c.weight * s;
                }
            }
        }
        Ok(out)
    }
}

fn check_domains(features: &[Matrix], labels: &[Matrix]) -> Result<()> {
    if features.len() != labels.len() {
        return Err(Error::shape(
            "dir_mixup",
            format!("{} feature batches and {} label batches", features.len(), labels.len()),
        ));
    }
    for (d, (f, y)) in features.iter().zip(labels).enumerate() {
        if f.rows() == 0 {
            return Err(Error::Data(format!("domain {d} batch is empty")));
        }
        if f.rows() != y.rows() {
            return Err(Error::shape(
                "dir_mixup",
                format!("domain {d} has {} feature rows and {} label rows", f.rows(), y.rows()),
            ));
        }
        if f.cols() != features[0].cols() || y.cols() != labels[0].cols() {
            return Err(Error::shape(
                "dir_mixup",
                format!("domain {d} width differs from domain 0"),
            ));
        }
    }
    Ok(())
}

/// Dir-mixup: for each of `n_samples` outputs draw `λ ~ Dirichlet(α)`, pick one
/// row per domain, and emit `(Σ_s λ_s z_s, Σ_s λ_s y_s)`.
pub fn dir_mixup<R: Rng + ?Sized>(
    features_per_domain: &[Matrix],
    labels_per_domain: &[Matrix],
    alpha: &DirichletParams,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<MixupSample>> {
    check_domains(features_per_domain, labels_per_domain)?;
    let sizes: Vec<usize> = features_per_domain.iter().map(Matrix::rows).collect();
    let plan = MixupPlan::dirichlet(&sizes, alpha, n_samples, rng)?;
    samples_from_plan(&plan, features_per_domain, labels_per_domain)
}

/// Materializes a plan whose samples take one component per domain, in domain order.
pub fn samples_from_plan(
    plan: &MixupPlan,
    features_per_domain: &[Matrix],
    labels_per_domain: &[Matrix],
) -> Result<Vec<MixupSample>> {
    check_domains(features_per_domain, labels_per_domain)?;
    let f: Vec<&Matrix> = features_per_domain.iter().collect();
    let y: Vec<&Matrix> = labels_per_domain.iter().collect();
    let (z, l) = plan.apply(&f, &y)?;
    plan.samples()
        .iter()
        .enumerate()
        .map(|(i, comps)| {
            Ok(MixupSample {
                feature: z.row(i).to_vec(),
                soft_label: l.row(i).to_vec(),
                weights: MixupWeights::new(comps.iter().map(|c| c.weight).collect())?,
                rows: comps.iter().map(|c| c.row).collect(),
            })
        })
        .collect()
}
