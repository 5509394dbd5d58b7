use crate::numerics::Matrix;
use crate::{Error, Result};

const MAX_SWEEPS: usize = 100;
const REL_TOL: f64 = 1e-12;

/// Eigenvalues and column eigenvectors of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector of `values[i]`.
    pub vectors: Matrix,
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a.get(i, j) * a.get(i, j);
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// `1e-12 · ‖A‖_F`, for at most 100 sweeps.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape(
            "symmetric_eigen",
            format!("{}x{} is not square", n, a.cols()),
        ));
    }
    if !a.is_finite() {
        return Err(Error::Numeric("eigendecomposition of a non-finite matrix".into()));
    }
    let scale = a.frobenius_norm();
    let mut m = a.clone();
    // Symmetrize to absorb rounding asymmetry in the input.
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    let mut v = Matrix::identity(n);
    let mut sweeps = 0;
    while off_diagonal_norm(&m) > REL_TOL * scale {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Numeric(format!(
                "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    Ok(SymmetricEigen {
        values: (0..n).map(|i| m.get(i, i)).collect(),
        vectors: v,
    })
}

/// `V diag(f(λ)) Vᵀ`.
fn reassemble(e: &SymmetricEigen, f: impl Fn(f64) -> f64) -> Matrix {
    let n = e.values.len();
    let mut scaled = e.vectors.clone();
    for (j, &lam) in e.values.iter().enumerate() {
        let fl = f(lam);
        for i in 0..n {
            scaled.set(i, j, scaled.get(i, j) * fl);
        }
    }
    scaled.matmul_t(&e.vectors).expect("square factors")
}

/// Principal square root of a symmetric PSD matrix. Eigenvalues are clamped
/// at 0; any below `-slack` are an error.
pub fn sqrtm_psd(a: &Matrix, slack: f64) -> Result<Matrix> {
    let e = symmetric_eigen(a)?;
    if let Some(min) = e.values.iter().copied().reduce(f64::min) {
        if min < -slack {
            return Err(Error::Numeric(format!(
                "matrix is not positive semidefinite (eigenvalue {min})"
            )));
        }
    }
    Ok(reassemble(&e, |l| l.max(0.0).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = seeded(seed, 0);
        let b = Matrix::from_vec(n, n, (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        b.matmul_t(&b).unwrap()
    }

    #[test]
    fn decomposition_reconstructs_the_input() {
        for n in [1, 2, 5, 12] {
            let a = random_symmetric(n, n as u64);
            let e = symmetric_eigen(&a).unwrap();
            assert!(reassemble(&e, |l| l).max_abs_diff(&a) < 1e-10);
            let vtv = e.vectors.t_matmul(&e.vectors).unwrap();
            assert!(vtv.max_abs_diff(&Matrix::identity(n)) < 1e-10);
        }
    }

    #[test]
    fn square_root_squares_back() {
        let a = random_symmetric(6, 9);
        let r = sqrtm_psd(&a, 1e-8).unwrap();
        assert!(r.matmul(&r).unwrap().max_abs_diff(&a) < 1e-9);
    }

    #[test]
    fn diagonal_input_is_already_converged() {
        let a = Matrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 9.0]]).unwrap();
        let r = sqrtm_psd(&a, 0.0).unwrap();
        assert_eq!(r, Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap());
    }

    #[test]
    fn negative_definite_input_is_rejected() {
        let a = Matrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sqrtm_psd(&a, 1e-6), Err(Error::Numeric(_))));
    }
}
