//! Per-pair SSIM evaluation of a synthesis model on a test corpus.

use ndarray::Array2;

use crate::data::{batch_to_image, image_to_batch, SlicePair};
use crate::error::{CoreError, Result};
use crate::models::UNetGenerator;

use super::{ssim, SsimParams};

/// Anything that maps a stored [0,1] source image to a synthetic [0,1]
/// target. The generator implements this by round-tripping through model
/// range; test oracles (identity, constant) implement it directly.
pub trait Synthesizer {
    fn synthesize(&self, source: &Array2<f32>) -> Result<Array2<f32>>;
}

impl Synthesizer for UNetGenerator<f32> {
    fn synthesize(&self, source: &Array2<f32>) -> Result<Array2<f32>> {
        let batch = image_to_batch(source);
        let out = self.forward(&batch)?;
        Ok(batch_to_image(&out))
    }
}

/// SSIM of synthesize(source) against the ground-truth target for every pair,
/// in input order (the pairing basis for the signed-rank test).
pub fn evaluate_model<S: Synthesizer>(
    model: &S,
    test: &[SlicePair],
    params: &SsimParams,
) -> Result<Vec<f64>> {
    if test.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    test.iter()
        .map(|pair| {
            let synth = model.synthesize(&pair.source)?;
            ssim(&synth, &pair.target, params)
        })
        .collect()
}
