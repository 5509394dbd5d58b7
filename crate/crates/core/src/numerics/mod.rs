//! Dense matrices, softmax cross-entropy and small multilayer perceptrons.
//!
//! Everything here is a pure function over value types.

mod loss;
mod matrix;
mod mlp;

pub use loss::{soft_cross_entropy, softmax_cross_entropy_grad, softmax_rows, LOG_EPS};
pub(crate) use matrix::dot;
pub use matrix::{matmul, Matrix};
pub use mlp::{
    mlp_backward, mlp_forward, Activation, Backward, Dense, ForwardCache, LayerGradient, LayerGradients, Mlp,
};
