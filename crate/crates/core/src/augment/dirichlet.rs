//! Gamma and Dirichlet variates.
//!
//! `Gamma(a, 1)` for `a >= 1` uses the Marsaglia–Tsang squeeze method. Shapes
//! below one are boosted: `Gamma(a) = Gamma(a + 1) · U^(1/a)`. The boosted
//! variate is kept in log space so that tiny shapes (where `U^(1/a)`
//! underflows) still normalize into a valid Dirichlet draw.

use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Concentration vector of a Dirichlet distribution; every entry is `> 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletParams(Vec<f64>);

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Parameter("Dirichlet needs at least one component".into()));
        }
        if let Some((i, a)) = alpha.iter().enumerate().find(|(_, a)| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::Parameter(format!(
                "Dirichlet concentration {i} is {a}, must be finite and > 0"
            )));
        }
        Ok(Self(alpha))
    }

    /// `len` copies of `value`.
    pub fn symmetric(value: f64, len: usize) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `E[λ_i] = α_i / Σα`.
    pub fn mean(&self) -> Vec<f64> {
        let total: f64 = self.0.iter().sum();
        self.0.iter().map(|a| a / total).collect()
    }

    /// `Var[λ_i] = α_i (Σα − α_i) / ((Σα)² (Σα + 1))`.
    pub fn variance(&self) -> Vec<f64> {
        let total: f64 = self.0.iter().sum();
        self.0
            .iter()
            .map(|a| a * (total - a) / (total * total * (total + 1.0)))
            .collect()
    }
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixupWeights(Vec<f64>);

impl MixupWeights {
    /// Accepts nonnegative weights summing to one within `1e-12`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if weights.is_empty() || weights.iter().any(|w| w.is_nan() || *w < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!("{weights:?} is not on the simplex")));
        }
        Ok(Self(weights))
    }

    /// The simplex vertex `e_i` of dimension `len`.
    pub fn vertex(i: usize, len: usize) -> Self {
        let mut w = vec![0.0; len];
        w[i] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// `ln X` for `X ~ Gamma(shape, 1)`.
pub fn sample_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let u: f64 = Open01.sample(rng);
        sample_gamma_at_least_one(shape + 1.0, rng).ln() + u.ln() / shape
    } else {
        sample_gamma_at_least_one(shape, rng).ln()
    }
}

/// `X ~ Gamma(shape, 1)` for any `shape > 0`.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        sample_log_gamma(shape, rng).exp()
    } else {
        sample_gamma_at_least_one(shape, rng)
    }
}

fn sample_gamma_at_least_one<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape >= 1.0);
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = StandardNormal.sample(rng);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u: f64 = Open01.sample(rng);
        let x2 = x * x;
        // squeeze
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// `λ ~ Dirichlet(α)` by normalizing independent Gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &DirichletParams, rng: &mut R) -> MixupWeights {
    let k = alpha.len();
    if k == 1 {
        return MixupWeights(vec![1.0]);
    }
    let logs: Vec<f64> = alpha.as_slice().iter().map(|&a| sample_log_gamma(a, rng)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    MixupWeights(w)
}

/// Meta-training concentration for domain `s`: `α_min` everywhere except
/// `α_max` at position `s`.
pub fn build_alpha_train(s: usize, num_domains: usize, alpha_max: f64, alpha_min: f64) -> Result<DirichletParams> {
    build_alpha(s, num_domains, alpha_max, alpha_min)
}

/// Meta-objective concentration for domain `s`: `α_max` everywhere except
/// `α_min` at position `s`.
pub fn build_alpha_objective(s: usize, num_domains: usize, alpha_max: f64, alpha_min: f64) -> Result<DirichletParams> {
    build_alpha(s, num_domains, alpha_min, alpha_max)
}

fn build_alpha(s: usize, num_domains: usize, at_s: f64, elsewhere: f64) -> Result<DirichletParams> {
    if s >= num_domains {
        return Err(Error::Parameter(format!(
            "domain index {s} out of range for {num_domains} domains"
        )));
    }
    let mut alpha = vec![elsewhere; num_domains];
    alpha[s] = at_s;
    DirichletParams::new(alpha)
}
