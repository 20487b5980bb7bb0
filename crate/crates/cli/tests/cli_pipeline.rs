//! End-to-end pipeline behavior: exit codes, corpus idempotence, report
//! artifacts, montage geometry, and checkpoint-resume equivalence.

use std::path::{Path, PathBuf};
use std::process::Command;

use fedpix_cli::config::{ExperimentConfig, Overrides};
use fedpix_cli::{cmd_compare, cmd_generate_data, cmd_train};
use fedpix_core::report::ModelKind;

fn tiny_config_text(out: &Path, epochs: usize, cadence: usize) -> String {
    format!(
        r#"
resolution = 32
seed = 5
out_dir = "{}"
checkpoint_every = {cadence}
montage_rows = 5

[model]
base_channels = 4
channel_cap = 16
disc_base_channels = 4
disc_strided_layers = 2

[hyper]
epochs = {epochs}

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
noise_sigma = 0.03
suppression_factor = 0.85
anatomy_seed_start = 1000000
anatomy_seed_end = 1100000
"#,
        out.display()
    )
}

fn write_config(dir: &Path, name: &str, out: &Path, epochs: usize, cadence: usize) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, tiny_config_text(out, epochs, cadence)).unwrap();
    path
}

fn load(path: &Path) -> ExperimentConfig {
    ExperimentConfig::load(path, &Overrides::default()).unwrap()
}

fn fedpix_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fedpix"))
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = write_config(dir.path(), "config.toml", &out, 1, 1);

    // validation failure: zero test pairs
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        tiny_config_text(&out, 1, 1).replace("test_per_site = 3", "test_per_site = 0"),
    )
    .unwrap();
    let status = fedpix_bin()
        .args(["generate-data", "--config"])
        .arg(&bad)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1), "validation errors exit 1");

    // bad mode name is a validation failure
    let status = fedpix_bin()
        .args(["train", "--mode", "no-such-model", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    // runtime failure: compare before anything was trained
    let status = fedpix_bin()
        .args(["compare", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2), "runtime errors exit 2");

    // success
    let status = fedpix_bin()
        .args(["generate-data", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn generate_data_is_idempotent_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = write_config(dir.path(), "config.toml", &out, 1, 1);
    let cfg = load(&config);
    cmd_generate_data(&cfg).unwrap();
    let manifest_path = cfg.corpus_dir("site-a", "train").join("manifest.csv");
    let first = std::fs::read_to_string(&manifest_path).unwrap();
    assert_eq!(first.lines().count(), 1 + 3, "header + one line per pair");
    cmd_generate_data(&cfg).unwrap();
    let second = std::fs::read_to_string(&manifest_path).unwrap();
    assert_eq!(first, second, "identical seed reproduces identical checksums");
}

#[test]
fn full_pipeline_writes_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = write_config(dir.path(), "config.toml", &out, 2, 2);
    let cfg = load(&config);
    cmd_generate_data(&cfg).unwrap();
    for kind in ModelKind::ALL {
        cmd_train(&cfg, kind).unwrap();
    }
    let report = cmd_compare(&cfg).unwrap();

    // 8 mean/sd cells and two 4x4 p matrices
    assert_eq!(report.test_sets.len(), 2);
    for ts in &report.test_sets {
        assert_eq!(ts.cells.len(), 4);
        assert_eq!(ts.p_values.len(), 4);
        assert_eq!(ts.pair_ids.len(), 3);
    }

    let rd = cfg.report_dir();
    for file in ["report.json", "report.txt", "per_pair_ssim.csv"] {
        assert!(rd.join(file).exists(), "{file} missing");
    }
    let csv = std::fs::read_to_string(rd.join("per_pair_ssim.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);

    // montage rows = min(configured 5, test size 3); 32px cells, 2px gaps
    let montage = image::open(rd.join("montage_test-site-a.png")).unwrap();
    assert_eq!(montage.height(), 3 * 32 + 2 * 2);
    assert_eq!(montage.width(), (2 + 4) as u32 * 32 + 5 * 2);

    // comparing again is byte-identical
    let first = std::fs::read(rd.join("per_pair_ssim.csv")).unwrap();
    cmd_compare(&cfg).unwrap();
    let second = std::fs::read(rd.join("per_pair_ssim.csv")).unwrap();
    assert_eq!(first, second);

    // round log exists with one record per round
    let rounds = std::fs::read_to_string(cfg.logs_dir().join("federated_rounds.jsonl")).unwrap();
    assert_eq!(rounds.lines().count(), 2);

    // epoch logs have a header plus one line per epoch
    let log = std::fs::read_to_string(cfg.logs_dir().join("central.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 2);
    assert!(log.starts_with("epoch,lr,g_loss,d_loss,l1"));
}

#[test]
fn interrupted_training_resumes_identically() {
    let dir = tempfile::tempdir().unwrap();

    // straight-through reference
    let out1 = dir.path().join("straight");
    let cfg1 = load(&write_config(dir.path(), "c1.toml", &out1, 6, 2));
    cmd_generate_data(&cfg1).unwrap();
    cmd_train(&cfg1, ModelKind::Central).unwrap();
    let (final1, _) =
        fedpix_core::params::read_checkpoint(&cfg1.checkpoint_dir("central").join("gen_final.fpk"))
            .unwrap();
    let log1 = std::fs::read_to_string(cfg1.logs_dir().join("central.csv")).unwrap();

    // interrupted run: train fully, then wind the run state back to epoch 2
    let out2 = dir.path().join("resumed");
    let cfg2 = load(&write_config(dir.path(), "c2.toml", &out2, 6, 2));
    cmd_generate_data(&cfg2).unwrap();
    cmd_train(&cfg2, ModelKind::Central).unwrap();
    let ckpt = cfg2.checkpoint_dir("central");
    std::fs::remove_file(ckpt.join("gen_final.fpk")).unwrap();
    std::fs::remove_file(ckpt.join("disc_final.fpk")).unwrap();
    std::fs::remove_dir_all(ckpt.join("state").join("epoch_00004")).unwrap();
    cmd_train(&cfg2, ModelKind::Central).unwrap();

    let (final2, _) = fedpix_core::params::read_checkpoint(&ckpt.join("gen_final.fpk")).unwrap();
    assert_eq!(
        final1.content_hash(),
        final2.content_hash(),
        "resumed run must be bit-identical"
    );

    // the resumed epochs appended to the log match the straight-through stats
    let log2 = std::fs::read_to_string(cfg2.logs_dir().join("central.csv")).unwrap();
    let straight: Vec<&str> = log1.lines().collect();
    let resumed: Vec<&str> = log2.lines().collect();
    assert_eq!(resumed.len(), 1 + 6 + 4, "header + 6 original + 4 resumed lines");
    for (i, line) in resumed[7..].iter().enumerate() {
        assert_eq!(*line, straight[3 + i], "resumed epoch {} stats differ", 2 + i);
    }
}

#[test]
fn federated_training_is_reproducible_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let hash_of_run = |name: &str| {
        let out = dir.path().join(name);
        let cfg = load(&write_config(dir.path(), &format!("{name}.toml"), &out, 2, 1));
        cmd_generate_data(&cfg).unwrap();
        cmd_train(&cfg, ModelKind::Federated).unwrap();
        let (params, _) = fedpix_core::params::read_checkpoint(
            &cfg.checkpoint_dir("federated").join("gen_final.fpk"),
        )
        .unwrap();
        params.content_hash()
    };
    assert_eq!(hash_of_run("fed1"), hash_of_run("fed2"));
}
