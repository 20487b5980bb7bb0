//! Minimal deterministic layer library with hand-written backward passes.
//!
//! Everything is generic over the float type: production models run in f32
//! (the checkpoint and wire precision), while gradient-check tests instantiate
//! the same code in f64 against central finite differences. All operations are
//! single-threaded with a fixed evaluation order, so a (seed, input) pair
//! reproduces bit-identical results.

pub mod act;
pub mod adam;
pub mod conv;
pub mod loss;
pub mod norm;

use ndarray::{ArrayD, NdFloat};

pub use act::{
    draw_dropout_mask, leaky_relu_backward, leaky_relu_forward, tanh_backward, tanh_forward,
};
pub use adam::Adam;
pub use conv::{
    conv2d_backward, conv2d_forward, conv_out_size, conv_transpose2d_backward,
    conv_transpose2d_forward, tconv_out_size,
};
pub use loss::{bce_logits_grad, bce_logits_mean, l1_grad, l1_mean};
pub use norm::{instance_norm_backward, instance_norm_forward};

/// A named trainable tensor.
#[derive(Debug, Clone)]
pub struct ParamTensor<F> {
    pub name: String,
    pub value: ArrayD<F>,
}

impl<F: NdFloat> ParamTensor<F> {
    pub fn new(name: impl Into<String>, value: ArrayD<F>) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

/// Casts an f64 into the working float type.
#[inline]
pub fn cast<F: NdFloat>(x: f64) -> F {
    F::from(x).expect("f64 -> float cast")
}
