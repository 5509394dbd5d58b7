use super::Matrix;
use crate::{Error, Result};

/// Clamp added inside the logarithm of the cross-entropy.
pub const LOG_EPS: f64 = 1e-12;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean over rows of `-Σ_k t_k ln(p_k + ε)`.
pub fn soft_cross_entropy(pred_probs: &Matrix, target_probs: &Matrix) -> Result<f64> {
    check_pair("soft_cross_entropy", pred_probs, target_probs)?;
    let n = pred_probs.rows();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = pred_probs
        .data()
        .iter()
        .zip(target_probs.data())
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| -t * (p + LOG_EPS).ln())
        .sum();
    Ok(total / n as f64)
}

/// Gradient of [`soft_cross_entropy`]`(softmax_rows(logits), targets)` with
/// respect to the logits, given the already computed probabilities.
///
/// With `w_k = t_k p_k / (p_k + ε)` the exact derivative is
/// `(p_j Σ_k w_k − w_j) / n`, which reduces to `(p − t) / n` as ε → 0.
pub fn softmax_cross_entropy_grad(probs: &Matrix, targets: &Matrix) -> Result<Matrix> {
    check_pair("softmax_cross_entropy_grad", probs, targets)?;
    let n = probs.rows();
    let mut grad = Matrix::zeros(n, probs.cols());
    if n == 0 {
        return Ok(grad);
    }
    let inv_n = 1.0 / n as f64;
    let mut w = vec![0.0; probs.cols()];
    for r in 0..n {
        let p = probs.row(r);
        let t = targets.row(r);
        let mut w_sum = 0.0;
        for k in 0..p.len() {
            w[k] = t[k] * p[k] / (p[k] + LOG_EPS);
            w_sum += w[k];
        }
        for (j, g) in grad.row_mut(r).iter_mut().enumerate() {
            *g = (p[j] * w_sum - w[j]) * inv_n;
        }
    }
    Ok(grad)
}

fn check_pair(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!(
                "predictions {}x{} vs targets {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            ),
        ));
    }
    Ok(())
}
