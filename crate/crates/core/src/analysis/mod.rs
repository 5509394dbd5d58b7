//! Gaussian feature statistics per domain and the squared Fréchet distance
//! between them.

mod eigen;

use serde::{Deserialize, Serialize};

pub use eigen::{sqrtm_psd, symmetric_eigen, SymmetricEigen};

use crate::numerics::Matrix;
use crate::{Error, Result};

/// Tolerated negative eigenvalue mass for covariances and the final distance.
pub const PSD_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct DomainStats {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    pub n: usize,
}

/// Sample mean and unbiased sample covariance of the rows.
pub fn fit_stats(features: &Matrix) -> Result<DomainStats> {
    let (n, d) = features.shape();
    if n < 2 {
        return Err(Error::Data(format!("feature statistics need at least 2 rows, got {n}")));
    }
    let mut mean = features.column_sums();
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut centered = features.clone();
    for r in 0..n {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut covariance = centered.t_matmul(&centered)?;
    covariance.scale(1.0 / (n - 1) as f64);
    for i in 0..d {
        for j in i + 1..d {
            let v = covariance.get(i, j);
            covariance.set(j, i, v);
        }
    }
    Ok(DomainStats { mean, covariance, n })
}

/// `|μ_a − μ_b|² + Tr(Σ_a + Σ_b − 2 (Σ_b^{1/2} Σ_a Σ_b^{1/2})^{1/2})`.
///
/// Returns the squared distance, clamped at 0 when rounding leaves it within
/// [`PSD_SLACK`] below zero.
pub fn frechet_distance(a: &DomainStats, b: &DomainStats) -> Result<f64> {
    let d = a.mean.len();
    if b.mean.len() != d || a.covariance.shape() != (d, d) || b.covariance.shape() != (d, d) {
        return Err(Error::shape(
            "frechet_distance",
            format!("dimensions {} and {}", a.mean.len(), b.mean.len()),
        ));
    }
    let mean_sq: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    let root_b = sqrtm_psd(&b.covariance, PSD_SLACK)?;
    let inner = root_b.matmul(&a.covariance)?.matmul(&root_b)?;
    let cross = sqrtm_psd(&inner, PSD_SLACK)?;
    let d2 = mean_sq + a.covariance.trace() + b.covariance.trace() - 2.0 * cross.trace();
    if d2 < -PSD_SLACK {
        return Err(Error::Numeric(format!("squared Fréchet distance {d2} is negative")));
    }
    Ok(d2.max(0.0))
}

/// One row of the Fréchet CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrechetRecord {
    pub method: String,
    pub source_domain: usize,
    pub target_domain: usize,
    pub frechet_sq: f64,
}

impl FrechetRecord {
    pub const CSV_COLUMNS: [&'static str; 4] = ["method", "source_domain", "target_domain", "frechet_sq"];
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn diag_stats(mean: Vec<f64>, var: &[f64]) -> DomainStats {
        let mut c = Matrix::zeros(var.len(), var.len());
        for (i, v) in var.iter().enumerate() {
            c.set(i, i, *v);
        }
        DomainStats {
            mean,
            covariance: c,
            n: 10,
        }
    }

    fn random_stats(d: usize, seed: u64) -> DomainStats {
        let mut rng = seeded(seed, 0);
        let x = Matrix::from_vec(3 * d, d, (0..3 * d * d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        fit_stats(&x).unwrap()
    }

    #[test]
    fn constant_rows_have_zero_covariance() {
        let x = Matrix::from_rows(&vec![vec![1.5, -2.0]; 4]).unwrap();
        let s = fit_stats(&x).unwrap();
        assert_eq!(s.mean, vec![1.5, -2.0]);
        assert_eq!(s.covariance, Matrix::zeros(2, 2));
    }

    #[test]
    fn two_point_formula() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let s = fit_stats(&x).unwrap();
        assert_eq!(s.mean, vec![1.0, 0.0]);
        assert_eq!(
            s.covariance,
            Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.0]]).unwrap()
        );
    }

    #[test]
    fn matches_a_two_pass_scalar_oracle() {
        let mut rng = seeded(4, 0);
        let (n, d) = (17, 4);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let s = fit_stats(&Matrix::from_rows(&rows).unwrap()).unwrap();
        for i in 0..d {
            let mi = rows.iter().map(|r| r[i]).sum::<f64>() / n as f64;
            assert!((s.mean[i] - mi).abs() < 1e-10);
            for j in 0..d {
                let mj = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
                let c = rows.iter().map(|r| (r[i] - mi) * (r[j] - mj)).sum::<f64>() / (n - 1) as f64;
                assert!((s.covariance.get(i, j) - c).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn single_row_is_a_data_error() {
        assert!(matches!(fit_stats(&Matrix::zeros(1, 3)), Err(Error::Data(_))));
    }

    #[test]
    fn one_dimensional_closed_form() {
        let a = diag_stats(vec![0.0], &[1.0]);
        let b = diag_stats(vec![3.0], &[4.0]);
        assert!((frechet_distance(&a, &b).unwrap() - 10.0).abs() < 1e-8);
    }

    #[test]
    fn swapped_diagonal_variances() {
        let a = diag_stats(vec![0.0, 0.0], &[1.0, 4.0]);
        let b = diag_stats(vec![0.0, 0.0], &[4.0, 1.0]);
        assert!((frechet_distance(&a, &b).unwrap() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn random_stats_are_symmetric_psd_and_self_distance_is_zero() {
        for seed in 0..5 {
            let s = random_stats(6, seed);
            assert!(s.covariance.max_abs_diff(&s.covariance.transpose()) < 1e-10);
            let min = symmetric_eigen(&s.covariance)
                .unwrap()
                .values
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-8);
            assert!(frechet_distance(&s, &s).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let a = diag_stats(vec![0.0], &[1.0]);
        let b = diag_stats(vec![0.0, 0.0], &[1.0, 1.0]);
        assert!(matches!(frechet_distance(&a, &b), Err(Error::Shape { .. })));
    }

    proptest! {
        #[test]
        fn diagonal_generic_path_matches_closed_form(
            ma in prop::collection::vec(-3.0f64..3.0, 4),
            mb in prop::collection::vec(-3.0f64..3.0, 4),
            va in prop::collection::vec(0.0f64..5.0, 4),
            vb in prop::collection::vec(0.0f64..5.0, 4),
        ) {
            let a = diag_stats(ma.clone(), &va);
            let b = diag_stats(mb.clone(), &vb);
            let expect: f64 = (0..4)
                .map(|i| (ma[i] - mb[i]).powi(2) + (va[i].sqrt() - vb[i].sqrt()).powi(2))
                .sum();
            prop_assert!((frechet_distance(&a, &b).unwrap() - expect).abs() < 1e-8);
        }

        #[test]
        fn distance_is_symmetric(seed_a in 0u64..1000, seed_b in 0u64..1000) {
            let a = random_stats(5, seed_a);
            let b = random_stats(5, seed_b + 1000);
            let ab = frechet_distance(&a, &b).unwrap();
            let ba = frechet_distance(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-8, "{} vs {}", ab, ba);
        }
    }
}
