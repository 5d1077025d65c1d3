//! Dense `f64` kernels with hand-derived backward passes.

mod grads;
mod matrix;
mod ops;

pub use grads::Gradients;
pub use matrix::{argmax, dot, l2_norm, Matrix};
pub use ops::{
    activation_backward, activation_forward, layer_norm_backward, layer_norm_forward,
    linear_forward, log_softmax_rows, softmax_cross_entropy, softmax_rows, Activation, LayerNorm,
    LayerNormCache, LayerNormGrads, Linear, LinearGrads, LN_EPS,
};
pub(crate) use ops::check_targets;
