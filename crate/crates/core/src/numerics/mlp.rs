//! Dense feed-forward stacks with analytic backward passes.
//!
//! A layer computes `a = act(x W + b)` with `W` stored `(in_dim, out_dim)` so a
//! batch of row vectors maps with a single matrix product.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v < 0.0 {
                    0.0
                } else {
                    v
                }
            }
            Activation::Identity => v,
        }
    }

    /// Derivative at the pre-activation; the rectifier uses 0 at 0.
    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else if pre.is_nan() {
                    f64::NAN
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(in_dim, out_dim),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite glorot bound");
        let data = (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect();
        Self {
            weights: Matrix::from_vec(in_dim, out_dim, data).expect("sized above"),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weights.data().len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape(
                    "Mlp::from_layers",
                    format!(
                        "layer {i} emits {} values but layer {} expects {}",
                        pair[0].out_dim(),
                        i + 1,
                        pair[1].in_dim()
                    ),
                ));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::shape(
                    "Mlp::from_layers",
                    format!("layer {i} bias length {} != {}", l.bias.len(), l.out_dim()),
                ));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-initialized stack over `dims = [in, h1, ..., out]`.
    ///
    /// Hidden layers use `hidden`; the last layer uses `output`.
    pub fn glorot<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        Self::build(dims, hidden, output, |i, o, a| Dense::glorot(i, o, a, rng))
    }

    pub fn zeros(dims: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        Self::build(dims, hidden, output, Dense::zeros)
    }

    fn build(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        mut make: impl FnMut(usize, usize, Activation) -> Dense,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!(
                "layer widths {dims:?} must list at least two positive sizes"
            )));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| make(w[0], w[1], if i == last { output } else { hidden }))
            .collect();
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Parameters flattened as `[W_0, b_0, W_1, b_1, ...]`, weights row-major.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::shape(
                "Mlp::set_flat_params",
                format!("{} values for {} parameters", params.len(), self.param_count()),
            ));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.data().len();
            l.weights.data_mut().copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    /// Same layer count, widths and activations.
    pub fn same_structure(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.shape() == b.weights.shape() && a.activation == b.activation)
    }

    /// In-place `p ← p − lr·g` for every parameter.
    pub fn apply_gradients(&mut self, grads: &LayerGradients, lr: f64) -> Result<()> {
        grads.check_matches(self)?;
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            l.weights.axpy(-lr, &g.weights)?;
            for (b, gb) in l.bias.iter_mut().zip(&g.bias) {
                *b -= lr * gb;
            }
        }
        Ok(())
    }

    /// Forward pass without keeping a cache.
    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let mut x = input.clone();
        for l in &self.layers {
            let mut z = x.matmul(&l.weights)?;
            z.add_row_vector(&l.bias)?;
            let act = l.activation;
            for v in z.data_mut() {
                *v = act.apply(*v);
            }
            x = z;
        }
        Ok(x)
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::shape(
                "mlp_forward",
                format!(
                    "input has {} columns, network expects {}",
                    input.cols(),
                    self.input_dim()
                ),
            ));
        }
        Ok(())
    }
}

/// Values kept by [`mlp_forward`] for the matching [`mlp_backward`] call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Matrix>,
    /// Pre-activation of each layer.
    pre_activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Per-layer gradients, in the same order as the owning parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub layers: Vec<LayerGradient>,
}

impl LayerGradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers()
                .iter()
                .map(|l| LayerGradient {
                    weights: Matrix::zeros(l.in_dim(), l.out_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    /// Concatenates layer lists, `self` first.
    pub fn concat(mut self, other: LayerGradients) -> Self {
        self.layers.extend(other.layers);
        self
    }

    /// Splits off the first `n` layers, returning `(head, tail)`.
    pub fn split_at(mut self, n: usize) -> (LayerGradients, LayerGradients) {
        let tail = self.layers.split_off(n);
        (self, LayerGradients { layers: tail })
    }

    pub fn add_assign(&mut self, other: &LayerGradients) -> Result<()> {
        self.check_same(other)?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.add_assign(&b.weights)?;
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.scale(s);
            for b in &mut l.bias {
                *b *= s;
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|v| v.is_finite()))
    }

    pub fn check_matches(&self, mlp: &Mlp) -> Result<()> {
        let ok = self.layers.len() == mlp.layers().len()
            && self
                .layers
                .iter()
                .zip(mlp.layers())
                .all(|(g, l)| g.weights.shape() == l.weights.shape() && g.bias.len() == l.bias.len());
        if ok {
            Ok(())
        } else {
            Err(Error::shape(
                "LayerGradients",
                "gradient layout does not match the parameters",
            ))
        }
    }

    fn check_same(&self, other: &LayerGradients) -> Result<()> {
        let ok = self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.shape() == b.weights.shape() && a.bias.len() == b.bias.len());
        if ok {
            Ok(())
        } else {
            Err(Error::shape("LayerGradients", "layouts differ"))
        }
    }
}

/// Parameter gradients plus the gradient with respect to the network input.
#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: LayerGradients,
    pub input_grad: Matrix,
}

pub fn mlp_forward(mlp: &Mlp, input: &Matrix) -> Result<(ForwardCache, Matrix)> {
    mlp.check_input(input)?;
    let n = mlp.layers.len();
    let mut inputs = Vec::with_capacity(n);
    let mut pre_activations = Vec::with_capacity(n);
    let mut x = input.clone();
    for l in &mlp.layers {
        let mut z = x.matmul(&l.weights)?;
        z.add_row_vector(&l.bias)?;
        let mut a = z.clone();
        let act = l.activation;
        for v in a.data_mut() {
            *v = act.apply(*v);
        }
        inputs.push(x);
        pre_activations.push(z);
        x = a;
    }
    Ok((
        ForwardCache {
            inputs,
            pre_activations,
        },
        x,
    ))
}

/// Back-propagates `upstream = dL/d(output)` through the cached forward pass.
pub fn mlp_backward(mlp: &Mlp, cache: &ForwardCache, upstream: &Matrix) -> Result<Backward> {
    let layers = mlp.layers();
    let consistent = cache.inputs.len() == layers.len()
        && cache.pre_activations.len() == layers.len()
        && cache
            .inputs
            .iter()
            .zip(&cache.pre_activations)
            .zip(layers)
            .all(|((x, z), l)| x.cols() == l.in_dim() && z.cols() == l.out_dim());
    if !consistent {
        return Err(Error::Contract("forward cache was not produced by this network".into()));
    }
    if upstream.shape() != (cache.batch_size(), mlp.output_dim()) {
        return Err(Error::Contract(format!(
            "upstream gradient is {}x{}, cached output is {}x{}",
            upstream.rows(),
            upstream.cols(),
            cache.batch_size(),
            mlp.output_dim()
        )));
    }

    let mut grads = Vec::with_capacity(layers.len());
    let mut delta = upstream.clone();
    for (i, l) in layers.iter().enumerate().rev() {
        let z = &cache.pre_activations[i];
        if l.activation != Activation::Identity {
            for (d, &pre) in delta.data_mut().iter_mut().zip(z.data()) {
                *d *= l.activation.derivative(pre);
            }
        }
        let dw = cache.inputs[i].t_matmul(&delta)?;
        let db = delta.column_sums();
        let dx = delta.matmul_t(&l.weights)?;
        grads.push(LayerGradient { weights: dw, bias: db });
        delta = dx;
    }
    grads.reverse();
    Ok(Backward {
        grads: LayerGradients { layers: grads },
        input_grad: delta,
    })
}
