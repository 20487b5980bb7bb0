// scratch: full criterion-1 dry run — four-model matrix on the synthetic
// two-site corpora, printing every acceptance condition.
use fedpix_core::data::{generate_site_dataset, Orientation, SiteProfile};
use fedpix_core::federation::{run_experiment_matrix, MatrixSetup};
use fedpix_core::models::{DiscriminatorConfig, GeneratorConfig};
use fedpix_core::report::ModelKind;
use fedpix_core::training::Hyperparams;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let base: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(42);

    let res = 64usize;
    let site_a = SiteProfile {
        site_id: "site-a".into(),
        contrast_gamma: 0.85,
        orientation: Orientation::Deg0,
        noise_sigma: 0.01,
        anatomy_seed_start: 0,
        anatomy_seed_end: 500_000,
        suppression_factor: 0.85,
    };
    let site_b = SiteProfile {
        site_id: "site-b".into(),
        contrast_gamma: 1.6,
        orientation: Orientation::Deg90,
        noise_sigma: 0.02,
        anatomy_seed_start: 1_000_000,
        anatomy_seed_end: 1_500_000,
        suppression_factor: 0.85,
    };
    let (train_a, test_a) = generate_site_dataset(&site_a, 80, 20, res, seed).unwrap();
    let (train_b, test_b) = generate_site_dataset(&site_b, 80, 20, res, seed).unwrap();

    let gen_cfg = GeneratorConfig {
        resolution: res,
        base_channels: base,
        channel_cap: base * 8,
        ..Default::default()
    };
    let disc_cfg = DiscriminatorConfig {
        base_channels: base,
        ..Default::default()
    };
    let hyper = Hyperparams {
        total_epochs: epochs,
        initial_lr: 1e-3,
        seed,
        ..Default::default()
    };
    let setup = MatrixSetup::new(gen_cfg, disc_cfg, hyper);
    let t0 = std::time::Instant::now();
    let report = run_experiment_matrix(&train_a, &train_b, &test_a, &test_b, &setup).unwrap();
    println!("matrix wall time: {:.1?}  (base {base}, epochs {epochs}, seed {seed})", t0.elapsed());

    for (ts, local, cross) in [
        (&report.test_sets[0], ModelKind::BaselineA, ModelKind::BaselineB),
        (&report.test_sets[1], ModelKind::BaselineB, ModelKind::BaselineA),
    ] {
        let fl = ts.cell(ModelKind::Federated);
        let l = ts.cell(local);
        let c = ts.cell(ModelKind::Central);
        let x = ts.cell(cross);
        println!("== {} ==", ts.test_set);
        println!(
            "  means: L {:.3}±{:.3}  X {:.3}±{:.3}  C {:.3}±{:.3}  FL {:.3}±{:.3}",
            l.mean, l.sd, x.mean, x.sd, c.mean, c.sd, fl.mean, fl.sd
        );
        let p_flx = ts.p(ModelKind::Federated, cross);
        let p_flc = ts.p(ModelKind::Federated, ModelKind::Central);
        let p_fll = ts.p(ModelKind::Federated, local);
        println!(
            "  |FL-L| {:.3} (<=0.05? {})   |FL-C| {:.3} (<=0.05? {})   FL-X {:.3} (>=0.10? {})",
            (fl.mean - l.mean).abs(),
            (fl.mean - l.mean).abs() <= 0.05,
            (fl.mean - c.mean).abs(),
            (fl.mean - c.mean).abs() <= 0.05,
            fl.mean - x.mean,
            fl.mean - x.mean >= 0.10
        );
        println!(
            "  p(FL,X) {:.2e} (<0.05? {})   p(FL,C) {:.3} (>0.05? {})   p(FL,L) {:.3}",
            p_flx,
            p_flx < 0.05,
            p_flc,
            p_flc > 0.05,
            p_fll
        );
    }
}
