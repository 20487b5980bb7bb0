//! Procedural "joint" phantoms: nested ellipses with a bright rim (the fat
//! analogue), interior fluid pockets, and a dark joint line. The target is a
//! known deterministic transform of the source — rim intensity scaled by
//! (1 - suppression_factor), fluid pockets brightened — after which per-site
//! gamma, orientation, and noise are applied to both images alike.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg64Mcg;

use crate::error::{CoreError, Result};
use crate::util::{rng_for, tag};

use super::{Orientation, SiteProfile, SlicePair};

const BACKGROUND: f64 = 0.06;
const JOINT_LINE: f64 = 0.14;
const FLUID_BRIGHTEN: f64 = 0.55;
const FLUID_TARGET_CAP: f64 = 0.92;

/// Region masks of a generated phantom, in the same (post-rotation)
/// orientation as the images. The exact target transform is a deterministic
/// function of the source and these masks.
#[derive(Debug, Clone)]
pub struct PhantomMasks {
    pub rim: Array2<bool>,
    pub fluid: Array2<bool>,
    pub interior: Array2<bool>,
}

struct Geometry {
    cx: f64,
    cy: f64,
    ax: f64,
    ay: f64,
    rim_t: f64,
    interior_v: f64,
    rim_v: f64,
    joint_half: f64,
    pockets: Vec<(f64, f64, f64, f64)>, // (px, py, pa, pb)
    fluid_v: f64,
}

fn sample_geometry(rng: &mut Pcg64Mcg) -> Geometry {
    let cx = rng.gen_range(0.46..0.54);
    let cy = rng.gen_range(0.46..0.54);
    let ax = rng.gen_range(0.30..0.40);
    let ay = rng.gen_range(0.26..0.36);
    let rim_t = rng.gen_range(0.07..0.11);
    let interior_v = rng.gen_range(0.38..0.46);
    let rim_v = rng.gen_range(0.84..0.92);
    let joint_half = rng.gen_range(0.015..0.03);
    let n_fluid = rng.gen_range(0..=3u32);
    let mut pockets = Vec::new();
    for _ in 0..n_fluid {
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let rho = rng.gen_range(0.15..0.60);
        let pa = rng.gen_range(0.045..0.085);
        let pb = rng.gen_range(0.045..0.085);
        let px = cx + rho * (ax - rim_t - pa) * theta.cos();
        let py = cy + rho * (ay - rim_t - pb) * theta.sin();
        pockets.push((px, py, pa, pb));
    }
    let fluid_v = rng.gen_range(0.26..0.34);
    Geometry {
        cx,
        cy,
        ax,
        ay,
        rim_t,
        interior_v,
        rim_v,
        joint_half,
        pockets,
        fluid_v,
    }
}

fn inside(u: f64, v: f64, cx: f64, cy: f64, a: f64, b: f64) -> bool {
    let du = (u - cx) / a;
    let dv = (v - cy) / b;
    du * du + dv * dv <= 1.0
}

fn rotate90<T: Copy + Default>(img: &Array2<T>) -> Array2<T> {
    let (h, w) = img.dim();
    let mut out = Array2::default((w, h));
    for y in 0..h {
        for x in 0..w {
            out[(x, h - 1 - y)] = img[(y, x)];
        }
    }
    out
}

/// Generates one phantom pair plus its region masks.
pub fn generate_phantom_pair_detailed(
    rng: &mut Pcg64Mcg,
    profile: &SiteProfile,
    resolution: usize,
) -> Result<(SlicePair, PhantomMasks)> {
    profile.validate()?;
    let geo = sample_geometry(rng);
    let r = resolution;
    let mut source = Array2::<f32>::zeros((r, r));
    let mut target = Array2::<f32>::zeros((r, r));
    let mut rim_mask = Array2::<bool>::default((r, r));
    let mut fluid_mask = Array2::<bool>::default((r, r));
    let mut interior_mask = Array2::<bool>::default((r, r));

    let s = profile.suppression_factor;
    for y in 0..r {
        let v = (y as f64 + 0.5) / r as f64;
        for x in 0..r {
            let u = (x as f64 + 0.5) / r as f64;
            let in_outer = inside(u, v, geo.cx, geo.cy, geo.ax, geo.ay);
            let in_inner = inside(u, v, geo.cx, geo.cy, geo.ax - geo.rim_t, geo.ay - geo.rim_t);
            let in_fluid = geo
                .pockets
                .iter()
                .any(|&(px, py, pa, pb)| inside(u, v, px, py, pa, pb));
            let in_joint = in_inner && (v - geo.cy).abs() <= geo.joint_half;

            let (src, tgt) = if in_inner && in_fluid {
                fluid_mask[(y, x)] = true;
                (
                    geo.fluid_v,
                    (geo.fluid_v + FLUID_BRIGHTEN).min(FLUID_TARGET_CAP),
                )
            } else if in_joint {
                (JOINT_LINE, JOINT_LINE)
            } else if in_outer && !in_inner {
                rim_mask[(y, x)] = true;
                (geo.rim_v, geo.rim_v * (1.0 - s))
            } else if in_inner {
                interior_mask[(y, x)] = true;
                (geo.interior_v, geo.interior_v)
            } else {
                (BACKGROUND, BACKGROUND)
            };
            source[(y, x)] = src as f32;
            target[(y, x)] = tgt as f32;
        }
    }

    // per-site contrast curve, applied identically to both images
    let gamma = profile.contrast_gamma as f32;
    if (gamma - 1.0).abs() > f32::EPSILON {
        source.mapv_inplace(|v| v.powf(gamma));
        target.mapv_inplace(|v| v.powf(gamma));
    }

    let (mut source, mut target, rim_mask, fluid_mask, interior_mask) = match profile.orientation {
        Orientation::Deg0 => (source, target, rim_mask, fluid_mask, interior_mask),
        Orientation::Deg90 => (
            rotate90(&source),
            rotate90(&target),
            rotate90(&rim_mask),
            rotate90(&fluid_mask),
            rotate90(&interior_mask),
        ),
    };

    if profile.noise_sigma > 0.0 {
        let normal = Normal::new(0.0f64, profile.noise_sigma).expect("sigma >= 0");
        for img in [&mut source, &mut target] {
            for v in img.iter_mut() {
                let noisy = f64::from(*v) + normal.sample(rng);
                *v = noisy.clamp(0.0, 1.0) as f32;
            }
        }
    }

    let pair = SlicePair::new(source, target, "", profile.site_id.clone())?;
    Ok((
        pair,
        PhantomMasks {
            rim: rim_mask,
            fluid: fluid_mask,
            interior: interior_mask,
        },
    ))
}

/// Generates one phantom pair (masks discarded).
pub fn generate_phantom_pair(
    rng: &mut Pcg64Mcg,
    profile: &SiteProfile,
    resolution: usize,
) -> Result<SlicePair> {
    Ok(generate_phantom_pair_detailed(rng, profile, resolution)?.0)
}

/// Builds a site corpus with disjoint anatomy seeds between train and test.
/// Fully determined by (seed, profile, n_train, n_test, resolution).
pub fn generate_site_dataset(
    profile: &SiteProfile,
    n_train: usize,
    n_test: usize,
    resolution: usize,
    seed: u64,
) -> Result<(Vec<SlicePair>, Vec<SlicePair>)> {
    profile.validate()?;
    let total = n_train + n_test;
    let available = profile.seed_range_len() as usize;
    if total > available {
        return Err(CoreError::SeedRangeExhausted {
            needed: total,
            available,
        });
    }
    let mut pick_rng = rng_for(seed, &[tag("anatomy"), tag(&profile.site_id)]);
    let mut chosen = Vec::with_capacity(total);
    let mut seen = std::collections::HashSet::new();
    while chosen.len() < total {
        let s = pick_rng.gen_range(profile.anatomy_seed_start..profile.anatomy_seed_end);
        if seen.insert(s) {
            chosen.push(s);
        }
    }

    let make = |anatomy_seed: u64, split: &str| -> Result<SlicePair> {
        let mut rng = rng_for(anatomy_seed, &[tag("phantom"), tag(&profile.site_id)]);
        let mut pair = generate_phantom_pair(&mut rng, profile, resolution)?;
        pair.pair_id = format!("{}-{}-{:08}", profile.site_id, split, anatomy_seed);
        Ok(pair)
    };

    let mut train = Vec::with_capacity(n_train);
    for &s in &chosen[..n_train] {
        train.push(make(s, "train")?);
    }
    let mut test = Vec::with_capacity(n_test);
    for &s in &chosen[n_train..] {
        test.push(make(s, "test")?);
    }
    Ok((train, test))
}
