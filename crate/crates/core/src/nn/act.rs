//! Elementwise activations and inverted dropout.

use ndarray::{Array4, NdFloat};
use rand::Rng;
use rand_pcg::Pcg64Mcg;

use super::cast;

/// LeakyReLU with slope `alpha` for negative inputs; `alpha = 0` is ReLU.
pub fn leaky_relu_forward<F: NdFloat>(x: &Array4<F>, alpha: f64) -> Array4<F> {
    let a = cast::<F>(alpha);
    x.mapv(|v| if v > F::zero() { v } else { v * a })
}

/// Uses the forward output to recover the sign mask (valid for alpha >= 0).
pub fn leaky_relu_backward<F: NdFloat>(y: &Array4<F>, gy: &Array4<F>, alpha: f64) -> Array4<F> {
    let a = cast::<F>(alpha);
    let mut gx = gy.clone();
    gx.zip_mut_with(y, |g, &v| {
        if v <= F::zero() {
            *g *= a;
        }
    });
    gx
}

pub fn tanh_forward<F: NdFloat>(x: &Array4<F>) -> Array4<F> {
    x.mapv(|v| v.tanh())
}

pub fn tanh_backward<F: NdFloat>(y: &Array4<F>, gy: &Array4<F>) -> Array4<F> {
    let mut gx = gy.clone();
    gx.zip_mut_with(y, |g, &v| *g *= F::one() - v * v);
    gx
}

/// Inverted-dropout mask: entries are 0 with probability `rate`, else
/// 1/(1 - rate). Applying the mask is a plain elementwise product, so the
/// backward pass reuses the same mask.
pub fn draw_dropout_mask<F: NdFloat>(
    shape: (usize, usize, usize, usize),
    rate: f64,
    rng: &mut Pcg64Mcg,
) -> Array4<F> {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0,1)");
    let keep = 1.0 - rate;
    let scale = cast::<F>(1.0 / keep);
    let mut mask = Array4::<F>::zeros(shape);
    for v in mask.iter_mut() {
        *v = if rng.gen::<f64>() < keep { scale } else { F::zero() };
    }
    mask
}
