//! Disk corpus format: `root/source/*.png` and `root/target/*.png` with
//! matching filenames (8- or 16-bit grayscale), plus a `manifest.csv` listing
//! pair id, site, relative paths, and a content checksum.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};
use ndarray::Array2;

use crate::error::{CoreError, Result};
use crate::util::fnv1a64;

use super::SlicePair;

/// Result of loading a paired corpus. Unmatched files are skipped (and
/// reported); constant images normalize to all zeros (and are reported).
#[derive(Debug)]
pub struct LoadedCorpus {
    pub pairs: Vec<SlicePair>,
    pub skipped_unmatched: Vec<String>,
    pub constant_images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub pair_id: String,
    pub site_id: String,
    pub source_path: String,
    pub target_path: String,
    pub checksum: String,
}

fn png_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("png") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

fn load_gray(path: &Path) -> Result<(Array2<f32>, bool)> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw: Vec<f32> = match img {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| f32::from(p.0[0])).collect(),
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| f32::from(p.0[0])).collect(),
        other => {
            return Err(CoreError::Format {
                path: path.to_path_buf(),
                reason: format!("expected 8- or 16-bit grayscale, got {:?}", other.color()),
            })
        }
    };
    let arr = Array2::from_shape_vec((h, w), raw).expect("pixel count matches dims");
    let min = arr.iter().copied().fold(f32::INFINITY, f32::min);
    let max = arr.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if max > min {
        let span = max - min;
        Ok((arr.mapv(|v| (v - min) / span), false))
    } else {
        // degenerate range (constant slice, e.g. a volume edge)
        Ok((Array2::zeros((h, w)), true))
    }
}

/// Loads a paired corpus, matching source and target files by name. Pairs are
/// sorted by filename; each image is independently min-max normalized to
/// [0, 1].
pub fn load_paired_dataset(root: &Path, site_id: &str) -> Result<LoadedCorpus> {
    let sources = png_stems(&root.join("source"))?;
    let targets = png_stems(&root.join("target"))?;

    let mut skipped_unmatched = Vec::new();
    let mut constant_images = Vec::new();
    let mut pairs = Vec::new();

    for (stem, src_path) in &sources {
        let Some(tgt_path) = targets.get(stem) else {
            skipped_unmatched.push(format!("source/{stem}.png"));
            continue;
        };
        let (src, src_const) = load_gray(src_path)?;
        let (tgt, tgt_const) = load_gray(tgt_path)?;
        if src.dim() != tgt.dim() {
            return Err(CoreError::ShapeMismatch(format!(
                "pair `{stem}`: source {:?} vs target {:?}",
                src.dim(),
                tgt.dim()
            )));
        }
        if src_const {
            constant_images.push(format!("source/{stem}.png"));
        }
        if tgt_const {
            constant_images.push(format!("target/{stem}.png"));
        }
        pairs.push(SlicePair::new(src, tgt, stem.clone(), site_id)?);
    }
    for stem in targets.keys() {
        if !sources.contains_key(stem) {
            skipped_unmatched.push(format!("target/{stem}.png"));
        }
    }

    if pairs.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    Ok(LoadedCorpus {
        pairs,
        skipped_unmatched,
        constant_images,
    })
}

fn save_png16(path: &Path, img: &Array2<f32>) -> Result<()> {
    let (h, w) = img.dim();
    let buf: Vec<u16> = img
        .iter()
        .map(|&v| (f64::from(v).clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let png: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, buf).expect("buffer size matches");
    png.save(path)?;
    Ok(())
}

/// Writes a corpus to `root` in the loader layout and returns the manifest,
/// which is also persisted as `root/manifest.csv`.
pub fn write_corpus(root: &Path, pairs: &[SlicePair]) -> Result<Vec<ManifestEntry>> {
    std::fs::create_dir_all(root.join("source"))?;
    std::fs::create_dir_all(root.join("target"))?;
    let mut manifest = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let source_rel = format!("source/{}.png", pair.pair_id);
        let target_rel = format!("target/{}.png", pair.pair_id);
        save_png16(&root.join(&source_rel), &pair.source)?;
        save_png16(&root.join(&target_rel), &pair.target)?;
        let mut bytes = std::fs::read(root.join(&source_rel))?;
        bytes.extend(std::fs::read(root.join(&target_rel))?);
        manifest.push(ManifestEntry {
            pair_id: pair.pair_id.clone(),
            site_id: pair.site_id.clone(),
            source_path: source_rel,
            target_path: target_rel,
            checksum: format!("{:016x}", fnv1a64(&bytes)),
        });
    }
    let mut csv = String::from("pair_id,site_id,source,target,checksum\n");
    for e in &manifest {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            e.pair_id, e.site_id, e.source_path, e.target_path, e.checksum
        ));
    }
    std::fs::write(root.join("manifest.csv"), csv)?;
    Ok(manifest)
}
