//! pix2pix loss pieces: binary cross-entropy on raw logits and mean absolute
//! error. BCE is computed in the log-sum-exp form so large logits cannot
//! overflow.

use ndarray::{Array4, NdFloat};

/// mean over elements of max(z,0) - z*t + ln(1 + exp(-|z|)) with constant
/// target t in {0, 1}.
pub fn bce_logits_mean<F: NdFloat>(z: &Array4<F>, target_is_one: bool) -> F {
    let m = F::from(z.len()).expect("len");
    let mut acc = F::zero();
    for &v in z.iter() {
        let pos = if v > F::zero() { v } else { F::zero() };
        let t_term = if target_is_one { v } else { F::zero() };
        acc = acc + pos - t_term + (F::one() + (-v.abs()).exp()).ln();
    }
    acc / m
}

/// d/dz of [`bce_logits_mean`], scaled by `scale`: scale * (sigmoid(z) - t) / M.
pub fn bce_logits_grad<F: NdFloat>(z: &Array4<F>, target_is_one: bool, scale: F) -> Array4<F> {
    let m = F::from(z.len()).expect("len");
    let t = if target_is_one { F::one() } else { F::zero() };
    z.mapv(|v| {
        let sig = F::one() / (F::one() + (-v).exp());
        scale * (sig - t) / m
    })
}

/// mean |a - b|
pub fn l1_mean<F: NdFloat>(a: &Array4<F>, b: &Array4<F>) -> F {
    debug_assert_eq!(a.dim(), b.dim());
    let m = F::from(a.len()).expect("len");
    let mut acc = F::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        acc += (x - y).abs();
    }
    acc / m
}

/// d/da of [`l1_mean`], scaled: scale * sign(a - b) / M.
pub fn l1_grad<F: NdFloat>(a: &Array4<F>, b: &Array4<F>, scale: F) -> Array4<F> {
    let m = F::from(a.len()).expect("len");
    let mut g = a.clone();
    g.zip_mut_with(b, |x, &y| {
        let d = *x - y;
        *x = if d > F::zero() {
            scale / m
        } else if d < F::zero() {
            -scale / m
        } else {
            F::zero()
        };
    });
    g
}
