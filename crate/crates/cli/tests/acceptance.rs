//! Acceptance suite: every release criterion runs here at its stated
//! tolerance and prints one pass/fail line. Oracles in this file are
//! independent re-derivations (closed forms, brute-force enumeration,
//! finite differences), not calls back into the code paths they check.
//!
//! Run with `cargo test -p fedpix-cli --test acceptance -- --nocapture`
//! to see the per-criterion lines.

use ndarray::{Array2, Array4, ArrayD};
use rand::Rng;

use fedpix_core::data::{generate_site_dataset, Orientation, SiteProfile};
use fedpix_core::federation::{
    fedgan_aggregate, run_experiment_matrix, run_federated_training, ClientState, MatrixSetup,
    WeightingMode,
};
use fedpix_core::metrics::{
    ssim, wilcoxon_signed_rank, wilcoxon_signed_rank_approx, SsimParams, WilcoxonMethod,
};
use fedpix_core::models::{
    build_discriminator, build_generator, DiscriminatorConfig, GeneratorConfig, PatchDiscriminator,
    UNetGenerator,
};
use fedpix_core::nn::{bce_logits_grad, bce_logits_mean, l1_grad, l1_mean, Adam};
use fedpix_core::params::{ParamEntry, ParameterSet};
use fedpix_core::report::ModelKind;
use fedpix_core::training::{
    lr_schedule, rng_for_epoch, train_epochs, train_local_epoch, Hyperparams,
};
use fedpix_core::util::rng_for;

fn verdict(criterion: usize, name: &str, pass: bool, detail: String) {
    println!(
        "acceptance {criterion} ({name}): {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "acceptance {criterion} ({name}) failed: {detail}");
}

// ----------------------------------------------------------------- shared cfg

fn desk_site_a() -> SiteProfile {
    SiteProfile {
        site_id: "site-a".into(),
        contrast_gamma: 0.85,
        orientation: Orientation::Deg0,
        noise_sigma: 0.01,
        anatomy_seed_start: 0,
        anatomy_seed_end: 500_000,
        suppression_factor: 0.85,
    }
}

fn desk_site_b() -> SiteProfile {
    SiteProfile {
        site_id: "site-b".into(),
        contrast_gamma: 1.6,
        orientation: Orientation::Deg90,
        noise_sigma: 0.04,
        anatomy_seed_start: 1_000_000,
        anatomy_seed_end: 1_500_000,
        suppression_factor: 0.85,
    }
}

// ------------------------------------------------------------- criterion 1

#[test]
fn criterion_1_generalizability_ordering() {
    let resolution = 64usize;
    let rounds = 60usize;
    let seed = 42u64;
    let (train_a, test_a) =
        generate_site_dataset(&desk_site_a(), 80, 20, resolution, seed).unwrap();
    let (train_b, test_b) =
        generate_site_dataset(&desk_site_b(), 80, 20, resolution, seed).unwrap();

    let gen_cfg = GeneratorConfig {
        resolution,
        base_channels: 12,
        channel_cap: 96,
        ..Default::default()
    };
    let disc_cfg = DiscriminatorConfig {
        base_channels: 12,
        ..Default::default()
    };
    let hyper = Hyperparams {
        total_epochs: rounds,
        seed,
        ..Default::default()
    };
    let setup = MatrixSetup::new(gen_cfg, disc_cfg, hyper);
    let t0 = std::time::Instant::now();
    let report = run_experiment_matrix(&train_a, &train_b, &test_a, &test_b, &setup).unwrap();
    let elapsed = t0.elapsed();

    let mut pass = true;
    let mut detail = format!("matrix wall time {elapsed:.0?}; ");
    for (ts, local, cross) in [
        (&report.test_sets[0], ModelKind::BaselineA, ModelKind::BaselineB),
        (&report.test_sets[1], ModelKind::BaselineB, ModelKind::BaselineA),
    ] {
        let fl = ts.cell(ModelKind::Federated).mean;
        let l = ts.cell(local).mean;
        let c = ts.cell(ModelKind::Central).mean;
        let x = ts.cell(cross).mean;
        let p_flx = ts.p(ModelKind::Federated, cross);
        let p_flc = ts.p(ModelKind::Federated, ModelKind::Central);
        let ok = (fl - l).abs() <= 0.05
            && (fl - c).abs() <= 0.05
            && fl - x >= 0.10
            && p_flx < 0.05
            && p_flc > 0.05;
        detail.push_str(&format!(
            "{}: FL {fl:.3} L {l:.3} C {c:.3} X {x:.3} p(FL,X) {p_flx:.2e} p(FL,C) {p_flc:.3}; ",
            ts.test_set
        ));
        pass &= ok;
    }
    verdict(1, "generalizability ordering", pass, detail);
}

// ------------------------------------------------------------- criterion 2

#[test]
fn criterion_2_aggregation_algebra() {
    let mut rng = rng_for(1002, &[]);
    let mut pass = true;
    let mut detail = String::new();

    // exact weighted-mean agreement with an independent elementwise oracle
    for case in 0..200 {
        let k = rng.gen_range(1..=4usize);
        let len = rng.gen_range(1..=8usize);
        let sets: Vec<ParameterSet> = (0..k)
            .map(|_| {
                let vals: Vec<f32> = (0..len).map(|_| (rng.gen::<f32>() - 0.5) * 8.0).collect();
                ParameterSet::new(vec![ParamEntry::new("w", vec![len], vals)]).unwrap()
            })
            .collect();
        let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let out = fedgan_aggregate(&sets, &weights).unwrap();
        for i in 0..len {
            let mut acc = 0.0f64;
            for (s, &w) in sets.iter().zip(&weights) {
                acc += w * f64::from(s.entries()[0].values[i]);
            }
            let expect = acc as f32;
            let got = out.entries()[0].values[i];
            if expect.to_bits() != got.to_bits() {
                pass = false;
                detail = format!("case {case} element {i}: {got} vs oracle {expect}");
            }
        }
    }

    // bit-identity for identical inputs
    for _ in 0..100 {
        let len = rng.gen_range(1..=8usize);
        let vals: Vec<f32> = (0..len).map(|_| (rng.gen::<f32>() - 0.5) * 8.0).collect();
        let set = ParameterSet::new(vec![ParamEntry::new("w", vec![len], vals)]).unwrap();
        let k = rng.gen_range(1..=5usize);
        let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let out = fedgan_aggregate(&vec![set.clone(); k], &weights).unwrap();
        if out.content_hash() != set.content_hash() {
            pass = false;
            detail = "identical inputs not bit-identical".into();
        }
    }

    // convexity on 1000 random cases
    for case in 0..1000 {
        let k = rng.gen_range(2..=4usize);
        let len = rng.gen_range(1..=6usize);
        let sets: Vec<ParameterSet> = (0..k)
            .map(|_| {
                let vals: Vec<f32> = (0..len).map(|_| (rng.gen::<f32>() - 0.5) * 20.0).collect();
                ParameterSet::new(vec![ParamEntry::new("w", vec![len], vals)]).unwrap()
            })
            .collect();
        let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let out = fedgan_aggregate(&sets, &weights).unwrap();
        for i in 0..len {
            let vals: Vec<f32> = sets.iter().map(|s| s.entries()[0].values[i]).collect();
            let lo = vals.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = vals.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let v = out.entries()[0].values[i];
            if !(v >= lo && v <= hi) {
                pass = false;
                detail = format!("case {case}: {v} outside [{lo}, {hi}]");
            }
        }
    }
    verdict(2, "aggregation algebra", pass, detail);
}

// ------------------------------------------------------------- criterion 3

#[test]
fn criterion_3_fl_degeneracy() {
    let gen_cfg = GeneratorConfig {
        resolution: 16,
        base_channels: 4,
        channel_cap: 16,
        ..Default::default()
    };
    let disc_cfg = DiscriminatorConfig {
        base_channels: 4,
        num_strided_layers: 2,
        ..Default::default()
    };
    let profile = SiteProfile {
        anatomy_seed_end: 10_000,
        ..desk_site_a()
    };
    let (data, _) = generate_site_dataset(&profile, 4, 1, 16, 77).unwrap();

    let mut pass = true;
    let mut detail = String::new();
    for n in [1usize, 3, 10] {
        let hyper = Hyperparams {
            total_epochs: 10,
            seed: 55,
            ..Default::default()
        };
        let mut gen = build_generator(&gen_cfg, hyper.seed).unwrap();
        let mut disc = build_discriminator(&disc_cfg, hyper.seed).unwrap();
        let mut opt_g = Adam::new(gen.params(), hyper.beta1, hyper.beta2);
        let mut opt_d = Adam::new(disc.params(), hyper.beta1, hyper.beta2);
        train_epochs(
            &mut gen, &mut disc, &mut opt_g, &mut opt_d, &data, &hyper, 0..n, |_| Ok(()),
        )
        .unwrap();

        let mut clients = vec![ClientState::new(
            "solo",
            data.clone(),
            &gen_cfg,
            &disc_cfg,
            hyper.clone(),
            hyper.seed,
        )
        .unwrap()];
        let ((fg, fd), _) =
            run_federated_training(&mut clients, n, WeightingMode::SizeProportional, false)
                .unwrap();
        let ok = fg.content_hash() == gen.export_parameters().content_hash()
            && fd.content_hash() == disc.export_parameters().content_hash();
        if !ok {
            pass = false;
            detail.push_str(&format!("n={n}: parameters diverged; "));
        }
    }
    verdict(3, "FL degeneracy (1 client == centralized)", pass, detail);
}

// ------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_receptive_field_and_patch_map() {
    let mut pass = true;
    let mut detail = String::new();

    let cfg256 = DiscriminatorConfig {
        base_channels: 8,
        ..Default::default()
    };
    let d = build_discriminator(&cfg256, 5).unwrap();
    let mut rng = rng_for(1004, &[]);
    let x = Array4::from_shape_simple_fn((1, 2, 256, 256), || rng.gen::<f32>() * 2.0 - 1.0);
    let tape = d.forward_tape(&x).unwrap();
    if tape.logits().dim() != (1, 1, 30, 30) {
        pass = false;
        detail.push_str(&format!("patch map at 256 is {:?}; ", tape.logits().dim()));
    }
    let x64 = Array4::from_shape_simple_fn((1, 2, 64, 64), || rng.gen::<f32>() * 2.0 - 1.0);
    let map64 = d.forward(&x64).unwrap();
    if map64.dim() != (1, 1, 6, 6) {
        pass = false;
        detail.push_str(&format!("patch map at 64 is {:?}; ", map64.dim()));
    }
    if cfg256.receptive_field() != 70 {
        pass = false;
        detail.push_str("closed-form receptive field != 70; ");
    }

    // gradient support of single output units against the 70x70 window
    for &(uy, ux) in &[(15usize, 15usize), (0, 0), (29, 29)] {
        let mut gy = Array4::<f32>::zeros((1, 1, 30, 30));
        gy[(0, 0, uy, ux)] = 1.0;
        let (_, gx) = d.backward(&tape, &gy, true);
        let gx = gx.unwrap();
        let (ly, hy) = cfg256.receptive_window(uy);
        let (lx, hx) = cfg256.receptive_window(ux);
        let mut inside = 0.0f64;
        for ((_, _, y, xp), &v) in gx.indexed_iter() {
            let covered = (y as isize) >= ly
                && (y as isize) <= hy
                && (xp as isize) >= lx
                && (xp as isize) <= hx;
            if covered {
                inside += f64::from(v.abs());
            } else if f64::from(v.abs()) > 1e-12 {
                pass = false;
                detail.push_str(&format!("unit ({uy},{ux}) leaks {v} at ({y},{xp}); "));
            }
        }
        if inside == 0.0 {
            pass = false;
            detail.push_str(&format!("unit ({uy},{ux}) window has no gradient; "));
        }
        if hy - ly + 1 != 70 {
            pass = false;
            detail.push_str("window width != 70; ");
        }
    }
    verdict(4, "receptive field / patch map", pass, detail);
}

// ------------------------------------------------------------- criterion 5

fn ssim_brute(a: &Array2<f32>, b: &Array2<f32>) -> f64 {
    let w = 11usize;
    let sigma = 1.5f64;
    let c1 = 1e-4;
    let c2 = 9e-4;
    let half = (w - 1) as f64 / 2.0;
    let mut weights = vec![vec![0.0f64; w]; w];
    let mut sum = 0.0;
    for (j, row) in weights.iter_mut().enumerate() {
        for (i, wt) in row.iter_mut().enumerate() {
            *wt = (-((j as f64 - half).powi(2) + (i as f64 - half).powi(2))
                / (2.0 * sigma * sigma))
                .exp();
            sum += *wt;
        }
    }
    for row in weights.iter_mut() {
        for wt in row.iter_mut() {
            *wt /= sum;
        }
    }
    let (h, wd) = a.dim();
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - w {
        for x0 in 0..=wd - w {
            let (mut mu_a, mut mu_b) = (0.0, 0.0);
            for j in 0..w {
                for i in 0..w {
                    mu_a += weights[j][i] * f64::from(a[(y0 + j, x0 + i)]);
                    mu_b += weights[j][i] * f64::from(b[(y0 + j, x0 + i)]);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for j in 0..w {
                for i in 0..w {
                    let da = f64::from(a[(y0 + j, x0 + i)]) - mu_a;
                    let db = f64::from(b[(y0 + j, x0 + i)]) - mu_b;
                    va += weights[j][i] * da * da;
                    vb += weights[j][i] * db * db;
                    cov += weights[j][i] * da * db;
                }
            }
            total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn criterion_5_ssim_correctness() {
    let params = SsimParams::default();
    let mut pass = true;
    let mut detail = String::new();

    let mut worst = 0.0f64;
    for case in 0..50u64 {
        let mut rng = rng_for(20_000 + case, &[]);
        let a = Array2::from_shape_simple_fn((64, 64), || rng.gen::<f32>());
        let b = if case % 2 == 0 {
            Array2::from_shape_simple_fn((64, 64), || rng.gen::<f32>())
        } else {
            a.mapv(|v| (0.75 * v + 0.2).clamp(0.0, 1.0))
        };
        worst = worst.max((ssim(&a, &b, &params).unwrap() - ssim_brute(&a, &b)).abs());
    }
    if worst >= 1e-6 {
        pass = false;
        detail.push_str(&format!("oracle deviation {worst}; "));
    }

    let mut rng = rng_for(21_000, &[]);
    let x = Array2::from_shape_simple_fn((48, 48), || rng.gen::<f32>());
    let self_sim = ssim(&x, &x, &params).unwrap();
    if (self_sim - 1.0).abs() > 1e-9 {
        pass = false;
        detail.push_str(&format!("ssim(x,x) = {self_sim}; "));
    }

    let zero = Array2::<f32>::zeros((32, 32));
    let one = Array2::<f32>::from_elem((32, 32), 1.0);
    let const_case = ssim(&zero, &one, &params).unwrap();
    let closed_form = 1e-4 / 1.0001;
    if (const_case - closed_form).abs() > 1e-12 {
        pass = false;
        detail.push_str(&format!("constant case {const_case} vs {closed_form}; "));
    }
    verdict(5, "SSIM correctness", pass, detail);
}

// ------------------------------------------------------------- criterion 6

fn wilcoxon_brute(a: &[f64], b: &[f64]) -> (f64, f64, usize) {
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|v| *v != 0.0)
        .collect();
    let n = d.len();
    if n == 0 {
        return (0.0, 1.0, 0);
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let mut doubled = vec![0u64; n];
    for i in 0..n {
        let less = abs.iter().filter(|&&v| v < abs[i]).count();
        let equal = abs.iter().filter(|&&v| v == abs[i]).count();
        doubled[i] = (2 * less + equal + 1) as u64;
    }
    let w2p: u64 = doubled
        .iter()
        .zip(&d)
        .filter(|(_, &di)| di > 0.0)
        .map(|(&r, _)| r)
        .sum();
    let w2t: u64 = doubled.iter().sum();
    let stat = w2p.min(w2t - w2p) as f64 / 2.0;
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let s: u64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| doubled[i]).sum();
        if s <= w2p {
            le += 1;
        }
        if s >= w2p {
            ge += 1;
        }
    }
    let p = (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0);
    (stat, p, n)
}

#[test]
fn criterion_6_wilcoxon_correctness() {
    let mut rng = rng_for(1006, &[]);
    let mut pass = true;
    let mut detail = String::new();

    for case in 0..100 {
        let n = rng.gen_range(1..=12usize);
        let a: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..7u32)) * 0.25).collect();
        let b: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..7u32)) * 0.25).collect();
        let ours = wilcoxon_signed_rank(&a, &b).unwrap();
        let (w, p, n_eff) = wilcoxon_brute(&a, &b);
        if ours.statistic != w || ours.p_value != p || ours.n_effective != n_eff {
            pass = false;
            detail.push_str(&format!(
                "case {case}: ({}, {}, {}) vs brute ({w}, {p}, {n_eff}); ",
                ours.statistic, ours.p_value, ours.n_effective
            ));
        }
    }

    let mut worst = 0.0f64;
    for _ in 0..80 {
        let n = rng.gen_range(15..=25usize);
        let a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0 + 0.2).collect();
        let exact = wilcoxon_signed_rank(&a, &b).unwrap();
        let approx = wilcoxon_signed_rank_approx(&a, &b).unwrap();
        if exact.method != WilcoxonMethod::Exact || approx.method != WilcoxonMethod::NormalApproximation
        {
            pass = false;
            detail.push_str("method selection wrong; ");
        }
        worst = worst.max((exact.p_value - approx.p_value).abs());
    }
    if worst >= 0.01 {
        pass = false;
        detail.push_str(&format!("approximation off by {worst}; "));
    }
    verdict(6, "Wilcoxon correctness", pass, detail);
}

// ------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_training_sanity() {
    let mut pass = true;
    let mut detail = String::new();

    // lr schedule endpoints, exactly
    let hyper200 = Hyperparams::default();
    if lr_schedule(0, &hyper200).unwrap() != 5e-4 {
        pass = false;
        detail.push_str("lr(0) != 5e-4; ");
    }
    if lr_schedule(199, &hyper200).unwrap() != 2.5e-6 {
        pass = false;
        detail.push_str("lr(199) != 2.5e-6; ");
    }

    // tiny 8x8 instance: endpoint-to-endpoint L1 improvement
    let profile = SiteProfile {
        noise_sigma: 0.005,
        anatomy_seed_end: 10_000,
        ..desk_site_a()
    };
    let pairs: Vec<_> = (0..4)
        .map(|i| {
            let mut rng = rng_for(600 + i, &[]);
            fedpix_core::data::generate_phantom_pair(&mut rng, &profile, 8).unwrap()
        })
        .collect();
    let mut gen = UNetGenerator::micro(3, 8, 13);
    let disc_cfg = DiscriminatorConfig {
        base_channels: 4,
        num_strided_layers: 1,
        ..Default::default()
    };
    let mut disc = build_discriminator(&disc_cfg, 13).unwrap();
    let hyper = Hyperparams {
        total_epochs: 30,
        seed: 13,
        ..Default::default()
    };
    let mut opt_g = Adam::new(gen.params(), hyper.beta1, hyper.beta2);
    let mut opt_d = Adam::new(disc.params(), hyper.beta1, hyper.beta2);
    let (mut first, mut last) = (0.0f64, 0.0f64);
    for epoch in 0..30 {
        let mut rng = rng_for_epoch(hyper.seed, epoch);
        let stats = train_local_epoch(
            &mut gen, &mut disc, &mut opt_g, &mut opt_d, &pairs, &hyper, epoch, &mut rng,
        )
        .unwrap();
        if epoch == 0 {
            first = stats.mean_l1;
        }
        if epoch == 29 {
            last = stats.mean_l1;
        }
    }
    if last >= first {
        pass = false;
        detail.push_str(&format!("L1 did not improve: {first} -> {last}; "));
    }

    // gradient check on the f64 micro pair (g_loss and d_loss), rel err < 1e-3
    let (worst_g, worst_d) = micro_gradient_check();
    if worst_g >= 1e-3 || worst_d >= 1e-3 {
        pass = false;
        detail.push_str(&format!("gradient rel err g {worst_g} d {worst_d}; "));
    }
    verdict(7, "training sanity", pass, detail);
}

#[allow(clippy::needless_range_loop)]
/// Finite-difference check of g_loss and d_loss parameter gradients on f64
/// micro models (4x4 generator; 8x8 discriminator). Returns worst relative
/// errors (generator, discriminator).
fn micro_gradient_check() -> (f64, f64) {
    const H: f64 = 1e-6;
    fn rel(analytic: &ArrayD<f64>, numeric: &ArrayD<f64>) -> f64 {
        let diff: f64 = analytic
            .iter()
            .zip(numeric.iter())
            .map(|(a, n)| (a - n) * (a - n))
            .sum::<f64>()
            .sqrt();
        let na: f64 = analytic.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
        if na.max(nn) < 1e-7 {
            0.0
        } else {
            diff / na.max(nn)
        }
    }

    let mut rng = rng_for(7001, &[]);
    let src4 = Array4::from_shape_simple_fn((1, 1, 4, 4), || rng.gen::<f64>() - 0.5);
    let real4 = Array4::from_shape_simple_fn((1, 1, 4, 4), || rng.gen::<f64>() - 0.5);
    let lambda = 5.0;

    // generator side through a frozen k=3 micro discriminator
    let mut gen = UNetGenerator::<f64>::micro(2, 2, 70);
    assert!(gen.param_count() <= 500);
    let dcfg3 = DiscriminatorConfig {
        base_channels: 2,
        num_strided_layers: 1,
        kernel: 3,
        ..Default::default()
    };
    let disc3 = PatchDiscriminator::<f64>::build(&dcfg3, 71);
    let mut mask_rng = rng_for(72, &[]);
    let tape0 = gen.forward_train(&src4, &mut mask_rng).unwrap();
    let masks: Vec<Option<Array4<f64>>> = tape0.masks().to_vec();
    let g_loss = |g: &UNetGenerator<f64>| -> f64 {
        let tape = g.forward_with_masks(&src4, &masks).unwrap();
        let x = disc3.concat_pair(&src4, tape.output()).unwrap();
        bce_logits_mean(&disc3.forward(&x).unwrap(), true) + lambda * l1_mean(tape.output(), &real4)
    };
    let tape = gen.forward_with_masks(&src4, &masks).unwrap();
    let fake = tape.output().clone();
    let x = disc3.concat_pair(&src4, &fake).unwrap();
    let dtape = disc3.forward_tape(&x).unwrap();
    let (_, gx) = disc3.backward(&dtape, &bce_logits_grad(dtape.logits(), true, 1.0), true);
    let mut gfake = gx.unwrap().slice(ndarray::s![.., 1.., .., ..]).to_owned();
    gfake = &gfake + &l1_grad(&fake, &real4, lambda);
    let analytic_g = gen.backward(&tape, &gfake);
    let mut worst_g = 0.0f64;
    for pi in 0..gen.params().len() {
        let mut numeric = ArrayD::<f64>::zeros(gen.params()[pi].value.raw_dim());
        for idx in 0..numeric.len() {
            let orig = gen.params_mut()[pi].value.as_slice_mut().unwrap()[idx];
            gen.params_mut()[pi].value.as_slice_mut().unwrap()[idx] = orig + H;
            let up = g_loss(&gen);
            gen.params_mut()[pi].value.as_slice_mut().unwrap()[idx] = orig - H;
            let down = g_loss(&gen);
            gen.params_mut()[pi].value.as_slice_mut().unwrap()[idx] = orig;
            numeric.as_slice_mut().unwrap()[idx] = (up - down) / (2.0 * H);
        }
        worst_g = worst_g.max(rel(&analytic_g[pi], &numeric));
    }

    // discriminator side at 8x8 with the default kernel
    let mut r301 = rng_for(301, &[]);
    let src8 = Array4::from_shape_simple_fn((1, 1, 8, 8), || r301.gen::<f64>() * 1.6 - 0.8);
    let mut r302 = rng_for(302, &[]);
    let real8 = Array4::from_shape_simple_fn((1, 1, 8, 8), || r302.gen::<f64>() * 1.6 - 0.8);
    let mut r303 = rng_for(303, &[]);
    let fake8 = Array4::from_shape_simple_fn((1, 1, 8, 8), || r303.gen::<f64>() * 1.6 - 0.8);
    let dcfg4 = DiscriminatorConfig {
        base_channels: 2,
        num_strided_layers: 1,
        init_scale: 0.05,
        ..Default::default()
    };
    let mut disc = PatchDiscriminator::<f64>::build(&dcfg4, 21);
    assert!(disc.param_count() <= 500);
    let d_loss = |d: &PatchDiscriminator<f64>| -> f64 {
        let xr = d.concat_pair(&src8, &real8).unwrap();
        let xf = d.concat_pair(&src8, &fake8).unwrap();
        0.5 * (bce_logits_mean(&d.forward(&xr).unwrap(), true)
            + bce_logits_mean(&d.forward(&xf).unwrap(), false))
    };
    let xr = disc.concat_pair(&src8, &real8).unwrap();
    let xf = disc.concat_pair(&src8, &fake8).unwrap();
    let tr = disc.forward_tape(&xr).unwrap();
    let tf = disc.forward_tape(&xf).unwrap();
    let (mut analytic_d, _) = disc.backward(&tr, &bce_logits_grad(tr.logits(), true, 0.5), false);
    let (af, _) = disc.backward(&tf, &bce_logits_grad(tf.logits(), false, 0.5), false);
    for (x, y) in analytic_d.iter_mut().zip(&af) {
        *x = &*x + y;
    }
    let mut worst_d = 0.0f64;
    for pi in 0..disc.params().len() {
        let mut numeric = ArrayD::<f64>::zeros(disc.params()[pi].value.raw_dim());
        for idx in 0..numeric.len() {
            let orig = disc.params_mut()[pi].value.as_slice_mut().unwrap()[idx];
            disc.params_mut()[pi].value.as_slice_mut().unwrap()[idx] = orig + H;
            let up = d_loss(&disc);
            disc.params_mut()[pi].value.as_slice_mut().unwrap()[idx] = orig - H;
            let down = d_loss(&disc);
            disc.params_mut()[pi].value.as_slice_mut().unwrap()[idx] = orig;
            numeric.as_slice_mut().unwrap()[idx] = (up - down) / (2.0 * H);
        }
        worst_d = worst_d.max(rel(&analytic_d[pi], &numeric));
    }
    (worst_g, worst_d)
}

// ------------------------------------------------------------- criterion 8

#[test]
fn criterion_8_end_to_end_determinism() {
    let base = tempfile::tempdir().unwrap();
    let csvs: Vec<Vec<u8>> = (0..2)
        .map(|run| {
            let out = base.path().join(format!("run{run}"));
            let config = write_tiny_config(base.path(), &out, run);
            let overrides = fedpix_cli::config::Overrides::default();
            let cfg = fedpix_cli::config::ExperimentConfig::load(&config, &overrides).unwrap();
            fedpix_cli::cmd_generate_data(&cfg).unwrap();
            for kind in ModelKind::ALL {
                fedpix_cli::cmd_train(&cfg, kind).unwrap();
            }
            fedpix_cli::cmd_compare(&cfg).unwrap();
            std::fs::read(cfg.report_dir().join("per_pair_ssim.csv")).unwrap()
        })
        .collect();
    let pass = csvs[0] == csvs[1] && !csvs[0].is_empty();
    verdict(
        8,
        "end-to-end determinism",
        pass,
        format!("csv lengths {} vs {}", csvs[0].len(), csvs[1].len()),
    );
}

fn write_tiny_config(dir: &std::path::Path, out: &std::path::Path, run: usize) -> std::path::PathBuf {
    let text = format!(
        r#"
resolution = 32
seed = 9
out_dir = "{}"
checkpoint_every = 2
montage_rows = 2

[model]
base_channels = 4
channel_cap = 16
disc_base_channels = 4
disc_strided_layers = 2

[hyper]
epochs = 2

[data]
train_per_site = 3
test_per_site = 3

[site_a]
site_id = "site-a"
contrast_gamma = 0.85
orientation = 0
noise_sigma = 0.01
suppression_factor = 0.85
anatomy_seed_start = 0
anatomy_seed_end = 100000

[site_b]
site_id = "site-b"
contrast_gamma = 1.6
orientation = 90
noise_sigma = 0.04
suppression_factor = 0.85
anatomy_seed_start = 1000000
anatomy_seed_end = 1100000
"#,
        out.display()
    );
    let path = dir.join(format!("config{run}.toml"));
    std::fs::write(&path, text).unwrap();
    path
}
