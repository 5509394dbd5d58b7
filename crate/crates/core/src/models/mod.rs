//! Per-domain networks: a feature extractor `F_s` and a linear classifier `G_s`.

mod checkpoint;

pub use checkpoint::{Checkpoint, LayerRecord, ModelRecord};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{
    mlp_backward, mlp_forward, softmax_rows, Activation, Backward, ForwardCache, LayerGradients, Matrix, Mlp,
};
use crate::{Error, Result};

/// Layer widths shared by every model in a bank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub num_classes: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            input_dim: 16,
            hidden_dims: vec![64, 64],
            feature_dim: 32,
            num_classes: 6,
        }
    }
}

impl Architecture {
    fn extractor_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.feature_dim);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.feature_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!("layer widths must be positive: {self:?}")));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        Ok(())
    }
}

/// One source domain's extractor and classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainModel {
    domain_index: usize,
    extractor: Mlp,
    classifier: Mlp,
}

/// Deep copy of a [`DomainModel`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSnapshot {
    extractor: Mlp,
    classifier: Mlp,
}

impl DomainModel {
    /// Glorot-initialized model. Extractor layers are all rectified, the
    /// classifier is a single affine map whose logits go through softmax.
    pub fn new<R: Rng + ?Sized>(domain_index: usize, arch: &Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let extractor = Mlp::glorot(&arch.extractor_dims(), Activation::Relu, Activation::Relu, rng)?;
        let classifier = Mlp::glorot(
            &[arch.feature_dim, arch.num_classes],
            Activation::Identity,
            Activation::Identity,
            rng,
        )?;
        Ok(Self {
            domain_index,
            extractor,
            classifier,
        })
    }

    pub fn zeros(domain_index: usize, arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            domain_index,
            extractor: Mlp::zeros(&arch.extractor_dims(), Activation::Relu, Activation::Relu)?,
            classifier: Mlp::zeros(
                &[arch.feature_dim, arch.num_classes],
                Activation::Identity,
                Activation::Identity,
            )?,
        })
    }

    pub fn from_parts(domain_index: usize, extractor: Mlp, classifier: Mlp) -> Result<Self> {
        if extractor.output_dim() != classifier.input_dim() {
            return Err(Error::shape(
                "DomainModel::from_parts",
                format!(
                    "extractor emits {} features, classifier reads {}",
                    extractor.output_dim(),
                    classifier.input_dim()
                ),
            ));
        }
        Ok(Self {
            domain_index,
            extractor,
            classifier,
        })
    }

    pub fn domain_index(&self) -> usize {
        self.domain_index
    }

    pub fn extractor(&self) -> &Mlp {
        &self.extractor
    }

    pub fn classifier(&self) -> &Mlp {
        &self.classifier
    }

    pub fn extractor_mut(&mut self) -> &mut Mlp {
        &mut self.extractor
    }

    pub fn classifier_mut(&mut self) -> &mut Mlp {
        &mut self.classifier
    }

    pub fn input_dim(&self) -> usize {
        self.extractor.input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.extractor.output_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.output_dim()
    }

    pub fn architecture(&self) -> Architecture {
        let layers = self.extractor.layers();
        Architecture {
            input_dim: self.input_dim(),
            hidden_dims: layers[..layers.len() - 1].iter().map(|l| l.out_dim()).collect(),
            feature_dim: self.feature_dim(),
            num_classes: self.num_classes(),
        }
    }

    /// `F_s(x)`.
    pub fn extract(&self, x: &Matrix) -> Result<Matrix> {
        self.extractor.forward(x)
    }

    /// `G_s(z)` as row-stochastic class probabilities.
    pub fn classify(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.feature_dim() {
            return Err(Error::shape(
                "classify",
                format!(
                    "features have {} columns, classifier expects {}",
                    features.cols(),
                    self.feature_dim()
                ),
            ));
        }
        Ok(softmax_rows(&self.classifier.forward(features)?))
    }

    /// `G_s(F_s(x))`.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.classify(&self.extract(x)?)
    }

    pub fn forward_extractor(&self, x: &Matrix) -> Result<(ForwardCache, Matrix)> {
        mlp_forward(&self.extractor, x)
    }

    pub fn forward_classifier(&self, z: &Matrix) -> Result<(ForwardCache, Matrix)> {
        mlp_forward(&self.classifier, z)
    }

    pub fn backward_extractor(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<Backward> {
        mlp_backward(&self.extractor, cache, upstream)
    }

    pub fn backward_classifier(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<Backward> {
        mlp_backward(&self.classifier, cache, upstream)
    }

    /// Zero gradients laid out as extractor layers followed by classifier layers.
    pub fn zero_gradients(&self) -> LayerGradients {
        LayerGradients::zeros_like(&self.extractor).concat(LayerGradients::zeros_like(&self.classifier))
    }

    pub fn param_count(&self) -> usize {
        self.extractor.param_count() + self.classifier.param_count()
    }

    /// Extractor parameters then classifier parameters.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.extractor.flat_params();
        p.extend(self.classifier.flat_params());
        p
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        let ne = self.extractor.param_count();
        if params.len() != self.param_count() {
            return Err(Error::shape(
                "DomainModel::set_flat_params",
                format!("{} values for {} parameters", params.len(), self.param_count()),
            ));
        }
        self.extractor.set_flat_params(&params[..ne])?;
        self.classifier.set_flat_params(&params[ne..])
    }

    /// In-place `p ← p − lr·g`.
    pub fn sgd_step(&mut self, grads: &LayerGradients, lr: f64) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::Parameter(format!("learning rate {lr} must be finite and >= 0")));
        }
        let ne = self.extractor.layers().len();
        if grads.layers.len() != ne + self.classifier.layers().len() {
            return Err(Error::shape(
                "sgd_step",
                format!(
                    "{} gradient layers for a {}-layer model",
                    grads.layers.len(),
                    ne + self.classifier.layers().len()
                ),
            ));
        }
        let (ge, gc) = grads.clone().split_at(ne);
        ge.check_matches(&self.extractor)?;
        gc.check_matches(&self.classifier)?;
        self.extractor.apply_gradients(&ge, lr)?;
        self.classifier.apply_gradients(&gc, lr)
    }

    pub fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            extractor: self.extractor.clone(),
            classifier: self.classifier.clone(),
        }
    }

    pub fn restore(&mut self, snap: &ModelSnapshot) -> Result<()> {
        if !self.extractor.same_structure(&snap.extractor) || !self.classifier.same_structure(&snap.classifier) {
            return Err(Error::Contract(
                "snapshot does not match the model's layer structure".into(),
            ));
        }
        self.extractor.clone_from(&snap.extractor);
        self.classifier.clone_from(&snap.classifier);
        Ok(())
    }
}

impl ModelSnapshot {
    /// Materializes the snapshot as a model with the given index.
    pub fn into_model(self, domain_index: usize) -> DomainModel {
        DomainModel {
            domain_index,
            extractor: self.extractor,
            classifier: self.classifier,
        }
    }
}

/// One model per source domain, all sharing feature width and label space.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBank {
    models: Vec<DomainModel>,
}

impl ModelBank {
    pub fn new<R: Rng + ?Sized>(arch: &Architecture, num_domains: usize, rng: &mut R) -> Result<Self> {
        let models = (0..num_domains)
            .map(|s| DomainModel::new(s, arch, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_models(models)
    }

    pub fn from_models(models: Vec<DomainModel>) -> Result<Self> {
        let Some(first) = models.first() else {
            return Err(Error::Config("a model bank needs at least one model".into()));
        };
        let arch = first.architecture();
        for (i, m) in models.iter().enumerate() {
            if m.domain_index != i {
                return Err(Error::Contract(format!(
                    "model at position {i} carries domain index {}",
                    m.domain_index
                )));
            }
            if m.architecture() != arch {
                return Err(Error::shape(
                    "ModelBank",
                    format!("model {i} architecture differs from model 0"),
                ));
            }
        }
        Ok(Self { models })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.models[0].feature_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.models[0].num_classes()
    }

    pub fn input_dim(&self) -> usize {
        self.models[0].input_dim()
    }

    pub fn architecture(&self) -> Architecture {
        self.models[0].architecture()
    }

    pub fn model(&self, s: usize) -> &DomainModel {
        &self.models[s]
    }

    pub fn model_mut(&mut self, s: usize) -> &mut DomainModel {
        &mut self.models[s]
    }

    pub fn models(&self) -> &[DomainModel] {
        &self.models
    }

    pub fn into_models(self) -> Vec<DomainModel> {
        self.models
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.models.iter().flat_map(DomainModel::flat_params).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn tiny() -> Architecture {
        Architecture {
            input_dim: 3,
            hidden_dims: vec![4],
            feature_dim: 2,
            num_classes: 3,
        }
    }

    fn input() -> Matrix {
        Matrix::from_rows(&[vec![0.3, -1.0, 2.0], vec![1.0, 1.0, -0.5]]).unwrap()
    }

    #[test]
    fn zero_model_is_uniform_and_extracts_zeros() {
        let m = DomainModel::zeros(0, &tiny()).unwrap();
        let p = m.predict(&input()).unwrap();
        assert!(p.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        let z = m.extract(&input()).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_probabilities() {
        let a = DomainModel::new(0, &tiny(), &mut seeded(4, 1)).unwrap();
        let b = DomainModel::new(0, &tiny(), &mut seeded(4, 1)).unwrap();
        assert_eq!(a.predict(&input()).unwrap(), b.predict(&input()).unwrap());
    }

    #[test]
    fn predict_is_forward_then_softmax() {
        let m = DomainModel::new(0, &tiny(), &mut seeded(2, 1)).unwrap();
        let (_, f) = mlp_forward(m.extractor(), &input()).unwrap();
        let (_, logits) = mlp_forward(m.classifier(), &f).unwrap();
        assert_eq!(m.predict(&input()).unwrap(), softmax_rows(&logits));
        assert_eq!(
            m.classify(&m.extract(&input()).unwrap()).unwrap(),
            m.predict(&input()).unwrap()
        );
    }

    #[test]
    fn feature_width_is_independent_of_batch() {
        let m = DomainModel::new(0, &tiny(), &mut seeded(2, 1)).unwrap();
        for n in [1, 5, 17] {
            let z = m.extract(&Matrix::zeros(n, 3)).unwrap();
            assert_eq!(z.shape(), (n, 2));
        }
        assert!(matches!(m.predict(&Matrix::zeros(1, 4)), Err(Error::Shape { .. })));
    }

    #[test]
    fn sgd_step_semantics() {
        let mut m = DomainModel::new(0, &tiny(), &mut seeded(3, 1)).unwrap();
        let before = m.flat_params();
        m.sgd_step(&m.zero_gradients(), 0.1).unwrap();
        assert_eq!(m.flat_params(), before);

        // scalar case: a single parameter p = 2, g = 0.5, lr = 1
        let mut g = m.zero_gradients();
        let mut p = before.clone();
        p[0] = 2.0;
        m.set_flat_params(&p).unwrap();
        g.layers[0].weights.data_mut()[0] = 0.5;
        m.sgd_step(&g, 1.0).unwrap();
        assert_eq!(m.flat_params()[0], 1.5);
    }

    #[test]
    fn two_half_steps_equal_one_full_step() {
        let base = DomainModel::new(0, &tiny(), &mut seeded(6, 1)).unwrap();
        let mut g = base.zero_gradients();
        for (i, l) in g.layers.iter_mut().enumerate() {
            for (j, v) in l.weights.data_mut().iter_mut().enumerate() {
                *v = ((i * 31 + j * 7) % 13) as f64 / 13.0 - 0.5;
            }
        }
        let mut one = base.clone();
        one.sgd_step(&g, 0.2).unwrap();
        let mut two = base.clone();
        two.sgd_step(&g, 0.1).unwrap();
        two.sgd_step(&g, 0.1).unwrap();
        for (a, b) in one.flat_params().iter().zip(two.flat_params()) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut other = DomainModel::new(
            0,
            &Architecture {
                hidden_dims: vec![5],
                ..tiny()
            },
            &mut seeded(6, 1),
        )
        .unwrap();
        assert!(matches!(other.sgd_step(&g, 0.1), Err(Error::Shape { .. })));
    }

    #[test]
    fn snapshot_restore_is_exact_and_deep() {
        let mut m = DomainModel::new(1, &tiny(), &mut seeded(7, 1)).unwrap();
        let original = m.flat_params();
        let snap = m.snapshot();
        let mut g = m.zero_gradients();
        g.layers[1].bias[0] = 3.0;
        m.sgd_step(&g, 1.0).unwrap();
        assert_ne!(m.flat_params(), original);
        assert_eq!(snap.clone().into_model(1).flat_params(), original);
        m.restore(&snap).unwrap();
        assert_eq!(m.flat_params(), original);

        let mut wide = DomainModel::new(
            1,
            &Architecture {
                hidden_dims: vec![8],
                ..tiny()
            },
            &mut seeded(7, 1),
        )
        .unwrap();
        assert!(matches!(wide.restore(&snap), Err(Error::Contract(_))));
    }

    #[test]
    fn bank_rows_are_distributions() {
        let bank = ModelBank::new(&tiny(), 3, &mut seeded(1, 1)).unwrap();
        assert_eq!(bank.len(), 3);
        for m in bank.models() {
            let p = m.predict(&input()).unwrap();
            assert_eq!(p.cols(), 3);
            for r in p.row_iter() {
                assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        let mut models = bank.into_models();
        models.swap(0, 1);
        assert!(ModelBank::from_models(models).is_err());
    }
}
