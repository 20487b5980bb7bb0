//! Qualitative montage: one row per test pair — source, ground-truth target,
//! then each model's synthetic output.

use std::path::Path;

use image::{ImageBuffer, Luma};
use ndarray::Array2;

use fedpix_core::data::SlicePair;
use fedpix_core::metrics::Synthesizer;
use fedpix_core::models::UNetGenerator;
use fedpix_core::report::ModelKind;

const GAP: usize = 2;

fn to_u8(img: &Array2<f32>) -> Vec<u8> {
    img.iter()
        .map(|&v| (f64::from(v).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// Writes the grid PNG: rows are test pairs, columns are
/// [source | target | four synthetic outputs].
pub fn write_montage(
    path: &Path,
    models: &[(ModelKind, &UNetGenerator)],
    rows: &[SlicePair],
) -> anyhow::Result<()> {
    anyhow::ensure!(!rows.is_empty(), "montage needs at least one row");
    let (h, w) = rows[0].resolution();
    let cols = 2 + models.len();
    let total_w = cols * w + (cols - 1) * GAP;
    let total_h = rows.len() * h + (rows.len() - 1) * GAP;
    let mut canvas: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_pixel(total_w as u32, total_h as u32, Luma([255u8]));

    let mut blit = |cell: &[u8], row: usize, col: usize| {
        let x0 = col * (w + GAP);
        let y0 = row * (h + GAP);
        for y in 0..h {
            for x in 0..w {
                canvas.put_pixel((x0 + x) as u32, (y0 + y) as u32, Luma([cell[y * w + x]]));
            }
        }
    };

    for (ri, pair) in rows.iter().enumerate() {
        blit(&to_u8(&pair.source), ri, 0);
        blit(&to_u8(&pair.target), ri, 1);
        for (ci, (_, gen)) in models.iter().enumerate() {
            let synth = gen.synthesize(&pair.source)?;
            blit(&to_u8(&synth), ri, 2 + ci);
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    canvas.save(path)?;
    Ok(())
}
