//! Instance normalization (per-sample, per-channel, no affine parameters).
//!
//! Chosen over batch statistics because training runs at batch size 1, where
//! batch norm degenerates.

use ndarray::{Array2, Array4, NdFloat};

use super::cast;

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Normalizes each (n, c) plane to zero mean and unit variance.
/// Returns (y, istd) where y doubles as the normalized activations needed by
/// the backward pass.
pub fn instance_norm_forward<F: NdFloat>(x: &Array4<F>) -> (Array4<F>, Array2<F>) {
    let (n, c, h, w) = x.dim();
    let m = cast::<F>((h * w) as f64);
    let eps = cast::<F>(INSTANCE_NORM_EPS);
    let mut y = x.clone();
    let mut istd = Array2::<F>::zeros((n, c));
    let ys = y.as_slice_mut().expect("contiguous");
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * h * w;
            let plane = &mut ys[base..base + h * w];
            let mut mean = F::zero();
            for &v in plane.iter() {
                mean += v;
            }
            mean /= m;
            let mut var = F::zero();
            for &v in plane.iter() {
                let d = v - mean;
                var += d * d;
            }
            var /= m;
            let inv = F::one() / (var + eps).sqrt();
            for v in plane.iter_mut() {
                *v = (*v - mean) * inv;
            }
            istd[(ni, ci)] = inv;
        }
    }
    (y, istd)
}

/// gx = istd * (gy - mean(gy) - xhat * mean(gy * xhat)) per (n, c) plane.
pub fn instance_norm_backward<F: NdFloat>(
    xhat: &Array4<F>,
    istd: &Array2<F>,
    gy: &Array4<F>,
) -> Array4<F> {
    let (n, c, h, w) = xhat.dim();
    let m = cast::<F>((h * w) as f64);
    let mut gx = Array4::<F>::zeros((n, c, h, w));
    let xs = xhat.as_slice().expect("contiguous");
    let gys = gy.as_slice().expect("contiguous");
    let gxs = gx.as_slice_mut().expect("contiguous");
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * h * w;
            let xh = &xs[base..base + h * w];
            let g = &gys[base..base + h * w];
            let mut g_mean = F::zero();
            let mut gx_dot = F::zero();
            for i in 0..h * w {
                g_mean += g[i];
                gx_dot += g[i] * xh[i];
            }
            g_mean /= m;
            gx_dot /= m;
            let inv = istd[(ni, ci)];
            let out = &mut gxs[base..base + h * w];
            for i in 0..h * w {
                out[i] = inv * (g[i] - g_mean - xh[i] * gx_dot);
            }
        }
    }
    gx
}
