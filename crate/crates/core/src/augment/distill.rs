use rand::Rng;

use super::dirichlet::{sample_dirichlet, DirichletParams, MixupWeights};
use crate::models::DomainModel;
use crate::numerics::Matrix;
use crate::{Error, Result};

/// Soft label for one sample: a convex combination of teacher predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct DistilledLabel {
    pub soft_label: Vec<f64>,
    pub weights: MixupWeights,
}

/// Per row of `x`, draws `λ ~ Dirichlet(1, …, 1)` over the teachers and mixes
/// their predictive distributions. Teachers are only read.
pub fn distill_labels<R: Rng + ?Sized>(
    x: &Matrix,
    teachers: &[&DomainModel],
    rng: &mut R,
) -> Result<Vec<DistilledLabel>> {
    let preds = teacher_predictions(x, teachers)?;
    let alpha = DirichletParams::symmetric(1.0, teachers.len())?;
    (0..x.rows())
        .map(|r| {
            let weights = sample_dirichlet(&alpha, rng);
            Ok(DistilledLabel {
                soft_label: combine_row(&preds, r, &weights),
                weights,
            })
        })
        .collect()
}

/// Same draws as [`distill_labels`], returned as an `n × |C|` target matrix.
pub fn distill_label_matrix<R: Rng + ?Sized>(x: &Matrix, teachers: &[&DomainModel], rng: &mut R) -> Result<Matrix> {
    let labels = distill_labels(x, teachers, rng)?;
    let width = teachers[0].num_classes();
    let mut out = Matrix::zeros(labels.len(), width);
    for (r, l) in labels.iter().enumerate() {
        out.row_mut(r).copy_from_slice(&l.soft_label);
    }
    Ok(out)
}

fn teacher_predictions(x: &Matrix, teachers: &[&DomainModel]) -> Result<Vec<Matrix>> {
    if teachers.is_empty() {
        return Err(Error::Config(
            "distillation needs at least two source domains (no teachers given)".into(),
        ));
    }
    let classes = teachers[0].num_classes();
    if teachers.iter().any(|t| t.num_classes() != classes) {
        return Err(Error::shape("distill_labels", "teachers disagree on the label space"));
    }
    teachers.iter().map(|t| t.predict(x)).collect()
}

fn combine_row(preds: &[Matrix], r: usize, weights: &MixupWeights) -> Vec<f64> {
    let mut out = vec![0.0; preds[0].cols()];
    for (p, &w) in preds.iter().zip(weights.as_slice()) {
        for (o, v) in out.iter_mut().zip(p.row(r)) {
            *o += w * v;
        }
    }
    out
}
