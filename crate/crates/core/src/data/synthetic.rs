//! Synthetic open-domain benchmark.
//!
//! Class prototypes `p_c ~ prototype_scale · N(0, I)` are drawn once. Every
//! domain `d` (sources first, then the target) owns an affine map
//! `x ↦ Q_d x + t_d`, where `Q_d` is the orthonormalized `I + shift_scale · G`
//! with `G_ij ~ N(0, 1/dim)`, and `t_d ~ shift_scale · N(0, I)`. A sample of
//! class `c` in domain `d` is `Q_d p_c + t_d + noise_scale · N(0, I)`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::labels::LabelSetSpec;
use crate::numerics::{dot, Matrix};
use crate::rng::{self, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Number of source domains.
    pub n_domains: usize,
    pub classes_total: usize,
    pub input_dim: usize,
    pub prototype_scale: f64,
    pub shift_scale: f64,
    pub samples_per_class: usize,
    pub noise_scale: f64,
    pub label_sets: LabelSetSpec,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_domains: 3,
            classes_total: 7,
            input_dim: 16,
            prototype_scale: 1.0,
            shift_scale: 0.5,
            samples_per_class: 100,
            noise_scale: 1.0,
            label_sets: LabelSetSpec::pacs_open(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_domains == 0 || self.classes_total == 0 || self.input_dim == 0 || self.samples_per_class == 0 {
            return Err(Error::Config("synthetic: counts must be >= 1".into()));
        }
        for (name, v) in [
            ("prototype_scale", self.prototype_scale),
            ("shift_scale", self.shift_scale),
            ("noise_scale", self.noise_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "synthetic.{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        self.label_sets.validate()?;
        if self.label_sets.num_sources() != self.n_domains {
            return Err(Error::Config(format!(
                "synthetic: label_sets lists {} sources but n_domains is {}",
                self.label_sets.num_sources(),
                self.n_domains
            )));
        }
        let all = self
            .label_sets
            .sources
            .iter()
            .flatten()
            .chain(&self.label_sets.target_known)
            .chain(&self.label_sets.target_open);
        if let Some(c) = all.copied().find(|&c| c >= self.classes_total) {
            return Err(Error::Config(format!(
                "synthetic: label_sets references class {c} but classes_total is {}",
                self.classes_total
            )));
        }
        Ok(())
    }
}

/// Prototypes and per-domain affine maps behind a synthetic benchmark.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    /// `classes_total × input_dim`.
    pub prototypes: Matrix,
    /// One `(Q_d, t_d)` per domain; index `n_domains` is the target.
    pub transforms: Vec<(Matrix, Vec<f64>)>,
}

impl SyntheticWorld {
    /// `Q_d p_c + t_d`: the noiseless location of class `c` in domain `d`.
    pub fn class_center(&self, domain: usize, class: usize) -> Vec<f64> {
        let (q, t) = &self.transforms[domain];
        let p = self.prototypes.row(class);
        (0..q.rows()).map(|i| dot(q.row(i), p) + t[i]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub sources: Vec<Dataset>,
    pub target: Dataset,
}

fn normal_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

/// Modified Gram–Schmidt on the rows. Rows that collapse are left as drawn
/// (probability zero for Gaussian perturbations).
fn orthonormalize_rows(m: &mut Matrix) {
    for i in 0..m.rows() {
        for j in 0..i {
            let proj = dot(m.row(i), m.row(j));
            let rj = m.row(j).to_vec();
            for (a, b) in m.row_mut(i).iter_mut().zip(&rj) {
                *a -= proj * b;
            }
        }
        let norm = dot(m.row(i), m.row(i)).sqrt();
        if norm > 1e-12 {
            for a in m.row_mut(i) {
                *a /= norm;
            }
        }
    }
}

pub fn synthetic_world(spec: &SyntheticSpec) -> Result<SyntheticWorld> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed, rng::stream::SYNTHETIC);
    let dim = spec.input_dim;
    let prototypes = normal_matrix(spec.classes_total, dim, spec.prototype_scale, &mut rng);
    let transforms = (0..=spec.n_domains)
        .map(|_| {
            let mut q = Matrix::identity(dim);
            q.add_assign(&normal_matrix(
                dim,
                dim,
                spec.shift_scale / (dim as f64).sqrt(),
                &mut rng,
            ))
            .expect("square");
            orthonormalize_rows(&mut q);
            let t = (0..dim)
                .map(|_| spec.shift_scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            (q, t)
        })
        .collect();
    Ok(SyntheticWorld { prototypes, transforms })
}

/// Sources carry only their own label-set classes; the target carries its
/// known classes followed by its open classes. Deterministic per seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    let world = synthetic_world(spec)?;
    let map = spec.label_sets.class_map();
    let num_classes = map.num_classes();
    // Noise has its own stream so the world matches `synthetic_world` exactly.
    let mut rng = rng::seeded(spec.seed.wrapping_add(1), rng::stream::SYNTHETIC);

    let mut make = |domain: usize, classes: &[usize]| -> Result<Dataset> {
        let n = classes.len() * spec.samples_per_class;
        let mut features = Matrix::zeros(n, spec.input_dim);
        let mut labels = Vec::with_capacity(n);
        let mut r = 0;
        for &c in classes {
            let center = world.class_center(domain, c);
            let label = map
                .label_of(c)
                .filter(|l| domain == spec.n_domains || !l.is_open())
                .ok_or_else(|| Error::Config(format!("class {c} has no label in domain {domain}")))?;
            for _ in 0..spec.samples_per_class {
                for (v, m) in features.row_mut(r).iter_mut().zip(&center) {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *v = m + spec.noise_scale * e;
                }
                labels.push(label);
                r += 1;
            }
        }
        Dataset::new(domain, num_classes, features, labels)
    };

    let sources = spec
        .label_sets
        .sources
        .iter()
        .enumerate()
        .map(|(d, classes)| make(d, classes))
        .collect::<Result<Vec<_>>>()?;
    let target_classes: Vec<usize> = spec
        .label_sets
        .target_known
        .iter()
        .chain(&spec.label_sets.target_open)
        .copied()
        .collect();
    let target = make(spec.n_domains, &target_classes)?;
    Ok(SyntheticData { sources, target })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;

    #[test]
    fn zero_shift_and_noise_collapse_to_prototypes() {
        let spec = SyntheticSpec {
            shift_scale: 0.0,
            noise_scale: 0.0,
            samples_per_class: 4,
            ..SyntheticSpec::default()
        };
        let world = synthetic_world(&spec).unwrap();
        let data = generate_synthetic(&spec).unwrap();
        let map = spec.label_sets.class_map();
        for d in data.sources.iter().chain(std::iter::once(&data.target)) {
            for (row, l) in d.features().row_iter().zip(d.labels()) {
                let raw = match l {
                    Label::Known(k) => map.raw_of(*k),
                    Label::Open => spec.label_sets.target_open[0],
                };
                assert_eq!(row, world.prototypes.row(raw));
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let spec = SyntheticSpec::default();
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        for (x, y) in a.sources.iter().zip(&b.sources) {
            assert_eq!(x.checksum(), y.checksum());
        }
        assert_eq!(a.target.checksum(), b.target.checksum());
        let c = generate_synthetic(&SyntheticSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.target.checksum(), c.target.checksum());
    }

    #[test]
    fn class_counts_follow_the_label_sets() {
        let spec = SyntheticSpec::default();
        let data = generate_synthetic(&spec).unwrap();
        let map = spec.label_sets.class_map();
        for (d, classes) in data.sources.iter().zip(&spec.label_sets.sources) {
            let counts = d.class_counts();
            assert_eq!(counts.len(), classes.len());
            for &c in classes {
                assert_eq!(counts[&map.label_of(c).unwrap()], spec.samples_per_class);
            }
        }
        let counts = data.target.class_counts();
        assert_eq!(counts.len(), 7);
        assert_eq!(counts[&Label::Open], 100);
        assert_eq!(data.target.domain_index(), 3);
    }

    #[test]
    fn class_means_converge_to_shifted_prototypes() {
        let spec = SyntheticSpec {
            noise_scale: 1e-6,
            samples_per_class: 20,
            ..SyntheticSpec::default()
        };
        let world = synthetic_world(&spec).unwrap();
        let data = generate_synthetic(&spec).unwrap();
        let map = spec.label_sets.class_map();
        for d in &data.sources {
            for (label, idx) in d.indices_by_label() {
                let raw = map.raw_of(label.known().unwrap());
                let center = world.class_center(d.domain_index(), raw);
                for (j, c) in center.iter().enumerate() {
                    let mean = idx.iter().map(|&i| d.features().get(i, j)).sum::<f64>() / idx.len() as f64;
                    assert!((mean - c).abs() < 1e-3);
                }
            }
        }
    }

    #[test]
    fn out_of_range_class_is_a_configuration_error() {
        let spec = SyntheticSpec {
            classes_total: 6,
            ..SyntheticSpec::default()
        };
        assert!(matches!(generate_synthetic(&spec), Err(Error::Config(_))));
    }
}
