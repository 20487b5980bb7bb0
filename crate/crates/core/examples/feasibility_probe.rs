// scratch: criterion-1 feasibility — track local vs cross-site SSIM of a
// single-site model during training at desk scale, and measure step cost.
use fedpix_core::data::{generate_site_dataset, Orientation, SiteProfile};
use fedpix_core::metrics::{evaluate_model, mean_sd, SsimParams};
use fedpix_core::models::{
    build_discriminator, build_generator, DiscriminatorConfig, GeneratorConfig,
};
use fedpix_core::nn::Adam;
use fedpix_core::training::{rng_for_epoch, train_local_epoch, Hyperparams};

fn main() {
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
        noise_sigma: 0.04,
        anatomy_seed_start: 1_000_000,
        anatomy_seed_end: 1_500_000,
        suppression_factor: 0.85,
    };
    let t0 = std::time::Instant::now();
    let (train_a, test_a) = generate_site_dataset(&site_a, 80, 20, res, 42).unwrap();
    let (_, test_b) = generate_site_dataset(&site_b, 1, 20, res, 42).unwrap();
    println!("datagen: {:.1?}", t0.elapsed());

    let gen_cfg = GeneratorConfig {
        resolution: res,
        base_channels: 16,
        channel_cap: 128,
        ..Default::default()
    };
    let disc_cfg = DiscriminatorConfig {
        base_channels: 16,
        ..Default::default()
    };
    let hyper = Hyperparams {
        total_epochs: 60,
        seed: 42,
        ..Default::default()
    };
    let mut gen = build_generator(&gen_cfg, hyper.seed).unwrap();
    let mut disc = build_discriminator(&disc_cfg, hyper.seed).unwrap();
    println!("gen params: {}, disc params: {}", gen.param_count(), disc.param_count());
    let mut opt_g = Adam::new(gen.params(), hyper.beta1, hyper.beta2);
    let mut opt_d = Adam::new(disc.params(), hyper.beta1, hyper.beta2);

    let ssim_p = SsimParams::default();
    for epoch in 0..hyper.total_epochs {
        let t = std::time::Instant::now();
        let mut rng = rng_for_epoch(hyper.seed, epoch);
        let stats = train_local_epoch(
            &mut gen, &mut disc, &mut opt_g, &mut opt_d, &train_a, &hyper, epoch, &mut rng,
        )
        .unwrap();
        let dt = t.elapsed();
        if epoch % 5 == 4 || epoch == 0 {
            let sa = evaluate_model(&gen, &test_a, &ssim_p).unwrap();
            let sb = evaluate_model(&gen, &test_b, &ssim_p).unwrap();
            let (ma, _) = mean_sd(&sa).unwrap();
            let (mb, _) = mean_sd(&sb).unwrap();
            println!(
                "epoch {:2}: l1 {:.4} g {:.3} d {:.3} | ssim A {:.3} B {:.3} | {:.1?}/epoch",
                epoch, stats.mean_l1, stats.mean_g_loss, stats.mean_d_loss, ma, mb, dt
            );
        }
    }
}
