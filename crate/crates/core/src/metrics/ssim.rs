//! Structural similarity with Gaussian-weighted local statistics (11x11
//! window, sigma 1.5), computed over valid window positions in f64.

use ndarray::Array2;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range L of the stored images; 1.0 for [0,1] data.
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    /// Normalized 1-D Gaussian taps; the separable 2-D window sums to 1.
    pub fn kernel(&self) -> Vec<f64> {
        let half = (self.window - 1) as f64 / 2.0;
        let s2 = 2.0 * self.sigma * self.sigma;
        let mut k: Vec<f64> = (0..self.window)
            .map(|i| (-(i as f64 - half).powi(2) / s2).exp())
            .collect();
        let sum: f64 = k.iter().sum();
        for v in &mut k {
            *v /= sum;
        }
        k
    }
}

/// Valid-mode separable convolution with a 1-D kernel applied along both axes.
fn local_mean(img: &Array2<f64>, k: &[f64]) -> Array2<f64> {
    let (h, w) = img.dim();
    let kw = k.len();
    let mut horiz = Array2::<f64>::zeros((h, w - kw + 1));
    for y in 0..h {
        for x in 0..w - kw + 1 {
            let mut acc = 0.0;
            for (j, &kj) in k.iter().enumerate() {
                acc += kj * img[(y, x + j)];
            }
            horiz[(y, x)] = acc;
        }
    }
    let mut out = Array2::<f64>::zeros((h - kw + 1, w - kw + 1));
    for y in 0..h - kw + 1 {
        for x in 0..w - kw + 1 {
            let mut acc = 0.0;
            for (j, &kj) in k.iter().enumerate() {
                acc += kj * horiz[(y + j, x)];
            }
            out[(y, x)] = acc;
        }
    }
    out
}

/// Mean SSIM over all valid window positions; symmetric in (a, b), and in
/// [-1, 1] with 1 exactly when a == b.
pub fn ssim(a: &Array2<f32>, b: &Array2<f32>, params: &SsimParams) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(CoreError::ShapeMismatch(format!(
            "ssim inputs {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let (h, w) = a.dim();
    if h < params.window || w < params.window {
        return Err(CoreError::ShapeMismatch(format!(
            "image {h}x{w} smaller than ssim window {}",
            params.window
        )));
    }
    let af = a.mapv(f64::from);
    let bf = b.mapv(f64::from);
    let k = params.kernel();

    let mu_a = local_mean(&af, &k);
    let mu_b = local_mean(&bf, &k);
    let e_aa = local_mean(&(&af * &af), &k);
    let e_bb = local_mean(&(&bf * &bf), &k);
    let e_ab = local_mean(&(&af * &bf), &k);

    let c1 = (params.k1 * params.dynamic_range).powi(2);
    let c2 = (params.k2 * params.dynamic_range).powi(2);

    let mut total = 0.0;
    let mut count = 0usize;
    for (idx, &ma) in mu_a.indexed_iter() {
        let mb = mu_b[idx];
        let va = e_aa[idx] - ma * ma;
        let vb = e_bb[idx] - mb * mb;
        let cov = e_ab[idx] - ma * mb;
        let v = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        total += v;
        count += 1;
    }
    Ok(total / count as f64)
}
