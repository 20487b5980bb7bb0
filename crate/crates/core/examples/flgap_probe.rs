// scratch: FL-vs-Central per-pair gap structure under different recipes.
use fedpix_core::data::{generate_site_dataset, Orientation, SiteProfile};
use fedpix_core::federation::{run_federated_training_with, ClientState, WeightingMode};
use fedpix_core::metrics::{evaluate_model, mean_sd, wilcoxon_signed_rank, SsimParams};
use fedpix_core::models::{
    build_discriminator, build_generator, DiscriminatorConfig, GeneratorConfig,
};
use fedpix_core::nn::Adam;
use fedpix_core::training::{train_epochs, DecaySchedule, Hyperparams};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let base: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let dropout: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let decay_start: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0);
    let seed: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(42);

    let res = 64usize;
    let site_a = SiteProfile {
        site_id: "site-a".into(),
        contrast_gamma: 0.85,
        orientation: Orientation::Deg0,
        noise_sigma: 0.05,
        anatomy_seed_start: 0,
        anatomy_seed_end: 500_000,
        suppression_factor: 0.85,
    };
    let site_b = SiteProfile {
        site_id: "site-b".into(),
        contrast_gamma: 1.6,
        orientation: Orientation::Deg0,
        noise_sigma: 0.05,
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
        dropout_rate: dropout,
        ..Default::default()
    };
    let disc_cfg = DiscriminatorConfig {
        base_channels: base,
        ..Default::default()
    };
    let hyper = Hyperparams {
        total_epochs: 60,
        initial_lr: lr,
        seed,
        decay: if decay_start > 0 {
            DecaySchedule::ConstantThenLinear { decay_start }
        } else {
            DecaySchedule::LinearFromStart
        },
        ..Default::default()
    };

    let t0 = std::time::Instant::now();
    // central
    let mut central = build_generator(&gen_cfg, hyper.seed).unwrap();
    let mut cdisc = build_discriminator(&disc_cfg, hyper.seed).unwrap();
    let mut og = Adam::new(central.params(), hyper.beta1, hyper.beta2);
    let mut od = Adam::new(cdisc.params(), hyper.beta1, hyper.beta2);
    let mut pooled = train_a.clone();
    pooled.extend_from_slice(&train_b);
    train_epochs(
        &mut central, &mut cdisc, &mut og, &mut od, &pooled, &hyper, 0..60, |_| Ok(()),
    )
    .unwrap();

    // federated
    let mk = |id: &str, data: Vec<fedpix_core::data::SlicePair>| {
        ClientState::new(id, data, &gen_cfg, &disc_cfg, hyper.clone(), hyper.seed).unwrap()
    };
    let mut clients = vec![mk("client-a", train_a), mk("client-b", train_b)];
    let (fg, _) = run_federated_training_with(
        &mut clients,
        60,
        WeightingMode::SizeProportional,
        false,
        |_| Ok(()),
    )
    .unwrap();
    let mut fl = build_generator(&gen_cfg, hyper.seed).unwrap();
    fl.import_parameters(&fg).unwrap();
    println!(
        "trained central+fl in {:.0?} (base {base} lr {lr} dropout {dropout} decay_start {decay_start} seed {seed})",
        t0.elapsed()
    );

    // quick cross-gap check: a single-site model on the other site
    let mut ba = build_generator(&gen_cfg, hyper.seed).unwrap();
    let mut bad = build_discriminator(&disc_cfg, hyper.seed).unwrap();
    let mut og2 = Adam::new(ba.params(), hyper.beta1, hyper.beta2);
    let mut od2 = Adam::new(bad.params(), hyper.beta1, hyper.beta2);
    let (train_a2, _) = generate_site_dataset(&site_a, 80, 1, res, seed).unwrap();
    train_epochs(&mut ba, &mut bad, &mut og2, &mut od2, &train_a2, &hyper, 0..60, |_| Ok(())).unwrap();

    let p = SsimParams::default();
    {
        let on_a = evaluate_model(&ba, &test_a, &p).unwrap();
        let on_b = evaluate_model(&ba, &test_b, &p).unwrap();
        let (ma, _) = mean_sd(&on_a).unwrap();
        let (mb, _) = mean_sd(&on_b).unwrap();
        println!("baseline-a: on A {ma:.3}, on B {mb:.3} (cross gap vs FL below)");
    }
    for (name, test) in [("A", &test_a), ("B", &test_b)] {
        let sc = evaluate_model(&central, test, &p).unwrap();
        let sf = evaluate_model(&fl, test, &p).unwrap();
        let (mc, _) = mean_sd(&sc).unwrap();
        let (mf, _) = mean_sd(&sf).unwrap();
        let w = wilcoxon_signed_rank(&sf, &sc).unwrap();
        let signs: String = sf
            .iter()
            .zip(&sc)
            .map(|(f, c)| if f > c { '+' } else { '-' })
            .collect();
        let diffs: Vec<f64> = sf.iter().zip(&sc).map(|(f, c)| ((f - c) * 1e3).round() / 1e3).collect();
        println!("test {name}: C {mc:.3} FL {mf:.3} p {:.4} signs {signs}", w.p_value);
        println!("   FL-C diffs (x1e3): {:?}", diffs.iter().map(|d| (d * 1e3) as i64).collect::<Vec<_>>());
    }
}
