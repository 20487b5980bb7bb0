//! Paired-slice data: synthetic two-site phantom generation and a PNG-based
//! loader for pre-registered real corpora. Stored images live in [0, 1]; the
//! model range is [-1, 1] via the affine maps below.

mod loader;
mod phantom;

pub use loader::{load_paired_dataset, write_corpus, LoadedCorpus, ManifestEntry};
pub use phantom::{
    generate_phantom_pair, generate_phantom_pair_detailed, generate_site_dataset, PhantomMasks,
};

use ndarray::{Array2, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// One registered (source, target) grayscale pair with values in [0, 1].
#[derive(Debug, Clone)]
pub struct SlicePair {
    pub source: Array2<f32>,
    pub target: Array2<f32>,
    pub pair_id: String,
    pub site_id: String,
}

impl SlicePair {
    pub fn new(
        source: Array2<f32>,
        target: Array2<f32>,
        pair_id: impl Into<String>,
        site_id: impl Into<String>,
    ) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(CoreError::ShapeMismatch(format!(
                "source {:?} vs target {:?}",
                source.dim(),
                target.dim()
            )));
        }
        for (label, img) in [("source", &source), ("target", &target)] {
            if img.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
                return Err(CoreError::NonFinite(format!(
                    "{label} image values must be finite and in [0,1]"
                )));
            }
        }
        Ok(Self {
            source,
            target,
            pair_id: pair_id.into(),
            site_id: site_id.into(),
        })
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.source.dim()
    }
}

/// Image orientation of a site; 90-degree rotation is an exact pixel
/// permutation, so it never leaves [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Orientation {
    Deg0,
    Deg90,
}

impl TryFrom<u32> for Orientation {
    type Error = String;
    fn try_from(v: u32) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Orientation::Deg0),
            90 => Ok(Orientation::Deg90),
            other => Err(format!("orientation must be 0 or 90, got {other}")),
        }
    }
}

impl From<Orientation> for u32 {
    fn from(o: Orientation) -> u32 {
        match o {
            Orientation::Deg0 => 0,
            Orientation::Deg90 => 90,
        }
    }
}

/// Acquisition profile of one synthetic institution. Contrast, orientation,
/// noise, and the anatomy seed pool are the domain-shift knobs; the
/// suppression factor parameterizes the source->target transform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteProfile {
    pub site_id: String,
    pub contrast_gamma: f64,
    pub orientation: Orientation,
    pub noise_sigma: f64,
    pub anatomy_seed_start: u64,
    pub anatomy_seed_end: u64,
    pub suppression_factor: f64,
}

impl SiteProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast_gamma > 0.0 && self.contrast_gamma.is_finite()) {
            return Err(CoreError::InvalidConfig(format!(
                "contrast_gamma must be positive, got {}",
                self.contrast_gamma
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(CoreError::InvalidConfig(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.suppression_factor) {
            return Err(CoreError::InvalidConfig(format!(
                "suppression_factor must be in [0,1], got {}",
                self.suppression_factor
            )));
        }
        if self.anatomy_seed_end <= self.anatomy_seed_start {
            return Err(CoreError::InvalidConfig("empty anatomy seed range".into()));
        }
        Ok(())
    }

    pub fn seed_range_len(&self) -> u64 {
        self.anatomy_seed_end - self.anatomy_seed_start
    }
}

/// [0,1] -> [-1,1]
pub fn to_model_range(x: f32) -> f32 {
    2.0 * x - 1.0
}

/// [-1,1] -> [0,1]
pub fn from_model_range(y: f32) -> f32 {
    (y + 1.0) / 2.0
}

/// Stored image to a (1, 1, H, W) batch in model range.
pub fn image_to_batch(img: &Array2<f32>) -> Array4<f32> {
    let (h, w) = img.dim();
    let mut out = Array4::zeros((1, 1, h, w));
    out.index_axis_mut(ndarray::Axis(0), 0)
        .index_axis_mut(ndarray::Axis(0), 0)
        .assign(&img.mapv(to_model_range));
    out
}

/// (1, 1, H, W) model-range batch back to a stored [0,1] image.
pub fn batch_to_image(batch: &Array4<f32>) -> Array2<f32> {
    let (n, c, _, _) = batch.dim();
    debug_assert_eq!((n, c), (1, 1));
    batch
        .index_axis(ndarray::Axis(0), 0)
        .index_axis(ndarray::Axis(0), 0)
        .mapv(from_model_range)
}
