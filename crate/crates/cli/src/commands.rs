//! The three pipeline commands: corpus generation, model training (four
//! modes, resumable), and the four-model comparison report.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};

use fedpix_core::data::{generate_site_dataset, load_paired_dataset, write_corpus, SlicePair};
use fedpix_core::federation::{evaluate_matrix, run_round, ClientState, RoundRecord};
use fedpix_core::metrics::SsimParams;
use fedpix_core::models::{build_discriminator, build_generator, PatchDiscriminator, UNetGenerator};
use fedpix_core::nn::Adam;
use fedpix_core::params::{read_checkpoint, write_checkpoint, CheckpointMeta};
use fedpix_core::report::{ComparisonReport, ModelKind};
use fedpix_core::training::{rng_for_epoch, train_local_epoch, EpochStats};

use crate::config::ExperimentConfig;
use crate::montage;
use crate::report_io;

/// Generates both site corpora (train + test splits) and their manifests.
/// Idempotent for a fixed seed: re-running rewrites identical files.
pub fn cmd_generate_data(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    for profile in [&cfg.site_a, &cfg.site_b] {
        let (train, test) = generate_site_dataset(
            profile,
            cfg.data.train_per_site,
            cfg.data.test_per_site,
            cfg.resolution,
            cfg.seed,
        )?;
        for (split, pairs) in [("train", &train), ("test", &test)] {
            let dir = cfg.corpus_dir(&profile.site_id, split);
            let manifest = write_corpus(&dir, pairs)?;
            println!(
                "wrote {} pairs to {} (manifest {} lines)",
                pairs.len(),
                dir.display(),
                manifest.len()
            );
        }
    }
    Ok(())
}

fn load_split(cfg: &ExperimentConfig, site_id: &str, split: &str) -> anyhow::Result<Vec<SlicePair>> {
    let dir = cfg.corpus_dir(site_id, split);
    let corpus = load_paired_dataset(&dir, site_id)
        .with_context(|| format!("loading corpus {}", dir.display()))?;
    if !corpus.skipped_unmatched.is_empty() {
        eprintln!(
            "warning: {} unmatched file(s) skipped in {}: {:?}",
            corpus.skipped_unmatched.len(),
            dir.display(),
            corpus.skipped_unmatched
        );
    }
    for name in &corpus.constant_images {
        eprintln!("warning: constant image normalized to zeros: {name}");
    }
    Ok(corpus.pairs)
}

fn train_data_for(cfg: &ExperimentConfig, mode: ModelKind) -> anyhow::Result<Vec<SlicePair>> {
    Ok(match mode {
        ModelKind::BaselineA => load_split(cfg, &cfg.site_a.site_id, "train")?,
        ModelKind::BaselineB => load_split(cfg, &cfg.site_b.site_id, "train")?,
        ModelKind::Central => {
            let mut all = load_split(cfg, &cfg.site_a.site_id, "train")?;
            all.extend(load_split(cfg, &cfg.site_b.site_id, "train")?);
            all
        }
        ModelKind::Federated => bail!("federated mode holds per-client data"),
    })
}

struct SingleRun {
    gen: UNetGenerator,
    disc: PatchDiscriminator,
    opt_g: Adam<f32>,
    opt_d: Adam<f32>,
    start_epoch: usize,
}

fn state_files(dir: &Path) -> [PathBuf; 4] {
    [
        dir.join("gen.fpk"),
        dir.join("disc.fpk"),
        dir.join("opt_g.fpk"),
        dir.join("opt_d.fpk"),
    ]
}

/// Latest `<prefix>_NNNNN` subdirectory holding a complete state.
fn latest_state_dir(root: &Path, prefix: &str) -> Option<(usize, PathBuf)> {
    let mut best: Option<(usize, PathBuf)> = None;
    let entries = std::fs::read_dir(root).ok()?;
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(num) = name.strip_prefix(&format!("{prefix}_")) {
            if let Ok(n) = num.parse::<usize>() {
                if best.as_ref().map(|(b, _)| n > *b).unwrap_or(true) {
                    best = Some((n, entry.path()));
                }
            }
        }
    }
    best
}

fn save_single_state(
    cfg: &ExperimentConfig,
    run: &SingleRun,
    dir: &Path,
    completed_epochs: usize,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let [gen_p, disc_p, og_p, od_p] = state_files(dir);
    let meta = CheckpointMeta::new(completed_epochs as u64, cfg.seed, cfg.echo_json());
    write_checkpoint(&gen_p, &run.gen.export_parameters(), &meta)?;
    write_checkpoint(&disc_p, &run.disc.export_parameters(), &meta)?;
    let mut opt_meta = meta.clone();
    opt_meta.opt_step = Some(run.opt_g.step_count());
    write_checkpoint(&og_p, &run.opt_g.export_state(run.gen.params()), &opt_meta)?;
    let mut opt_meta = meta;
    opt_meta.opt_step = Some(run.opt_d.step_count());
    write_checkpoint(&od_p, &run.opt_d.export_state(run.disc.params()), &opt_meta)?;
    Ok(())
}

fn load_single_state(cfg: &ExperimentConfig, dir: &Path, epoch: usize) -> anyhow::Result<SingleRun> {
    let hyper = cfg.hyperparams();
    let mut gen = build_generator(&cfg.gen_config(), cfg.seed)?;
    let mut disc = build_discriminator(&cfg.disc_config(), cfg.seed)?;
    let mut opt_g = Adam::new(gen.params(), hyper.beta1, hyper.beta2);
    let mut opt_d = Adam::new(disc.params(), hyper.beta1, hyper.beta2);
    let [gen_p, disc_p, og_p, od_p] = state_files(dir);
    let (g_params, _) = read_checkpoint(&gen_p)?;
    gen.import_parameters(&g_params)?;
    let (d_params, _) = read_checkpoint(&disc_p)?;
    disc.import_parameters(&d_params)?;
    let (og_state, og_meta) = read_checkpoint(&og_p)?;
    opt_g.import_state(gen.params(), &og_state, og_meta.opt_step.unwrap_or(0))?;
    let (od_state, od_meta) = read_checkpoint(&od_p)?;
    opt_d.import_state(disc.params(), &od_state, od_meta.opt_step.unwrap_or(0))?;
    Ok(SingleRun {
        gen,
        disc,
        opt_g,
        opt_d,
        start_epoch: epoch,
    })
}

fn open_epoch_log(path: &Path, fresh: bool) -> anyhow::Result<std::fs::File> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut opts = std::fs::OpenOptions::new();
    if fresh {
        opts.write(true).create(true).truncate(true);
    } else {
        opts.append(true).create(true);
    }
    let mut file = opts.open(path)?;
    if fresh {
        writeln!(file, "{}", EpochStats::csv_header())?;
    }
    Ok(file)
}

fn train_single(cfg: &ExperimentConfig, mode: ModelKind) -> anyhow::Result<()> {
    let data = train_data_for(cfg, mode)?;
    let hyper = cfg.hyperparams();
    let ckpt_dir = cfg.checkpoint_dir(mode.label());
    let state_root = ckpt_dir.join("state");

    let mut run = match latest_state_dir(&state_root, "epoch") {
        Some((epoch, dir)) if epoch < hyper.total_epochs => {
            println!("resuming {} from completed epoch {epoch}", mode.label());
            load_single_state(cfg, &dir, epoch)?
        }
        Some((epoch, dir)) if epoch >= hyper.total_epochs => {
            println!("training already complete at epoch {epoch}; rewriting final checkpoint");
            load_single_state(cfg, &dir, epoch)?
        }
        _ => SingleRun {
            gen: build_generator(&cfg.gen_config(), cfg.seed)?,
            disc: build_discriminator(&cfg.disc_config(), cfg.seed)?,
            opt_g: Adam::new(
                build_generator(&cfg.gen_config(), cfg.seed)?.params(),
                hyper.beta1,
                hyper.beta2,
            ),
            opt_d: Adam::new(
                build_discriminator(&cfg.disc_config(), cfg.seed)?.params(),
                hyper.beta1,
                hyper.beta2,
            ),
            start_epoch: 0,
        },
    };

    let log_path = cfg.logs_dir().join(format!("{}.csv", mode.label()));
    let mut log = open_epoch_log(&log_path, run.start_epoch == 0)?;

    for epoch in run.start_epoch..hyper.total_epochs {
        let mut rng = rng_for_epoch(hyper.seed, epoch);
        let stats = train_local_epoch(
            &mut run.gen,
            &mut run.disc,
            &mut run.opt_g,
            &mut run.opt_d,
            &data,
            &hyper,
            epoch,
            &mut rng,
        )?;
        writeln!(log, "{}", stats.csv_line())?;
        let completed = epoch + 1;
        if completed % cfg.checkpoint_every == 0 && completed < hyper.total_epochs {
            let dir = state_root.join(format!("epoch_{completed:05}"));
            save_single_state(cfg, &run, &dir, completed)?;
        }
    }
    log.flush()?;

    let meta = CheckpointMeta::new(hyper.total_epochs as u64, cfg.seed, cfg.echo_json());
    write_checkpoint(&ckpt_dir.join("gen_final.fpk"), &run.gen.export_parameters(), &meta)?;
    write_checkpoint(&ckpt_dir.join("disc_final.fpk"), &run.disc.export_parameters(), &meta)?;
    println!(
        "{}: trained to epoch {} ({} parameters)",
        mode.label(),
        hyper.total_epochs,
        run.gen.param_count()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct RoundLogLine {
    round_index: usize,
    client_ids: Vec<String>,
    weights: Vec<f64>,
    client_g_hashes: Vec<String>,
    client_d_hashes: Vec<String>,
    aggregate_g_hash: String,
    aggregate_d_hash: String,
}

impl RoundLogLine {
    fn from_record(r: &RoundRecord) -> Self {
        Self {
            round_index: r.round_index,
            client_ids: r.client_ids.clone(),
            weights: r.weights.clone(),
            client_g_hashes: r.client_g_hashes.iter().map(|h| format!("{h:016x}")).collect(),
            client_d_hashes: r.client_d_hashes.iter().map(|h| format!("{h:016x}")).collect(),
            aggregate_g_hash: format!("{:016x}", r.aggregated_g.content_hash()),
            aggregate_d_hash: format!("{:016x}", r.aggregated_d.content_hash()),
        }
    }
}

fn train_federated(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let hyper = cfg.hyperparams();
    let ckpt_dir = cfg.checkpoint_dir(ModelKind::Federated.label());
    let state_root = ckpt_dir.join("state");
    let site_ids = [cfg.site_a.site_id.clone(), cfg.site_b.site_id.clone()];

    let mut clients = Vec::with_capacity(2);
    for site_id in &site_ids {
        clients.push(ClientState::new(
            format!("client-{site_id}"),
            load_split(cfg, site_id, "train")?,
            &cfg.gen_config(),
            &cfg.disc_config(),
            hyper.clone(),
            cfg.seed,
        )?);
    }

    let mut start_round = 0usize;
    if let Some((round, dir)) = latest_state_dir(&state_root, "round") {
        if round <= hyper.total_epochs {
            println!("resuming federated run from completed round {round}");
            for client in clients.iter_mut() {
                let cdir = dir.join(&client.client_id);
                let [gen_p, disc_p, og_p, od_p] = state_files(&cdir);
                let (g, _) = read_checkpoint(&gen_p)?;
                client.generator.import_parameters(&g)?;
                let (d, _) = read_checkpoint(&disc_p)?;
                client.discriminator.import_parameters(&d)?;
                let (og, og_meta) = read_checkpoint(&og_p)?;
                client
                    .opt_g
                    .import_state(client.generator.params(), &og, og_meta.opt_step.unwrap_or(0))?;
                let (od, od_meta) = read_checkpoint(&od_p)?;
                client.opt_d.import_state(
                    client.discriminator.params(),
                    &od,
                    od_meta.opt_step.unwrap_or(0),
                )?;
            }
            start_round = round;
        }
    }

    let mut logs = Vec::new();
    for client in &clients {
        let path = cfg.logs_dir().join(format!("federated_{}.csv", client.client_id));
        logs.push(open_epoch_log(&path, start_round == 0)?);
    }
    let rounds_path = cfg.logs_dir().join("federated_rounds.jsonl");
    let mut rounds_log = {
        let mut opts = std::fs::OpenOptions::new();
        if start_round == 0 {
            opts.write(true).create(true).truncate(true);
        } else {
            opts.append(true).create(true);
        }
        opts.open(&rounds_path)?
    };

    let mut last: Option<RoundRecord> = None;
    for round_index in start_round..hyper.total_epochs {
        let record = run_round(
            &mut clients,
            round_index,
            cfg.aggregation,
            !cfg.deterministic,
        )?;
        for (log, stats) in logs.iter_mut().zip(&record.client_stats) {
            writeln!(log, "{}", stats.csv_line())?;
        }
        writeln!(rounds_log, "{}", serde_json::to_string(&RoundLogLine::from_record(&record))?)?;
        let completed = round_index + 1;
        if completed % cfg.checkpoint_every == 0 && completed < hyper.total_epochs {
            let dir = state_root.join(format!("round_{completed:05}"));
            let meta = CheckpointMeta::new(completed as u64, cfg.seed, cfg.echo_json());
            for client in &clients {
                let cdir = dir.join(&client.client_id);
                std::fs::create_dir_all(&cdir)?;
                let [gen_p, disc_p, og_p, od_p] = state_files(&cdir);
                write_checkpoint(&gen_p, &client.generator.export_parameters(), &meta)?;
                write_checkpoint(&disc_p, &client.discriminator.export_parameters(), &meta)?;
                let mut m = meta.clone();
                m.opt_step = Some(client.opt_g.step_count());
                write_checkpoint(&og_p, &client.opt_g.export_state(client.generator.params()), &m)?;
                let mut m = meta.clone();
                m.opt_step = Some(client.opt_d.step_count());
                write_checkpoint(
                    &od_p,
                    &client.opt_d.export_state(client.discriminator.params()),
                    &m,
                )?;
            }
        }
        last = Some(record);
    }
    rounds_log.flush()?;

    let last = last.ok_or_else(|| anyhow!("no rounds executed (already complete?)"))?;
    let meta = CheckpointMeta::new(hyper.total_epochs as u64, cfg.seed, cfg.echo_json());
    write_checkpoint(&ckpt_dir.join("gen_final.fpk"), &last.aggregated_g, &meta)?;
    write_checkpoint(&ckpt_dir.join("disc_final.fpk"), &last.aggregated_d, &meta)?;
    println!(
        "federated: {} rounds over clients {:?}",
        hyper.total_epochs, last.client_ids
    );
    Ok(())
}

/// Trains the selected model; resumable from the last periodic state in
/// deterministic mode.
pub fn cmd_train(cfg: &ExperimentConfig, mode: ModelKind) -> anyhow::Result<()> {
    match mode {
        ModelKind::Federated => train_federated(cfg),
        _ => train_single(cfg, mode),
    }
}

fn load_final_generator(cfg: &ExperimentConfig, mode: ModelKind) -> anyhow::Result<UNetGenerator> {
    let path = cfg.checkpoint_dir(mode.label()).join("gen_final.fpk");
    let (params, _) = read_checkpoint(&path)
        .with_context(|| format!("missing checkpoint for `{}`: {}", mode.label(), path.display()))?;
    let mut gen = build_generator(&cfg.gen_config(), cfg.seed)?;
    gen.import_parameters(&params)?;
    Ok(gen)
}

/// Evaluates all four trained models on both test sets and writes the report
/// (JSON + text + per-pair CSV) and one montage image per test set.
pub fn cmd_compare(cfg: &ExperimentConfig) -> anyhow::Result<ComparisonReport> {
    let generators: Vec<(ModelKind, UNetGenerator)> = ModelKind::ALL
        .iter()
        .map(|&kind| Ok((kind, load_final_generator(cfg, kind)?)))
        .collect::<anyhow::Result<_>>()?;
    let model_refs: Vec<(ModelKind, &UNetGenerator)> =
        generators.iter().map(|(k, g)| (*k, g)).collect();

    let test_a = load_split(cfg, &cfg.site_a.site_id, "test")?;
    let test_b = load_split(cfg, &cfg.site_b.site_id, "test")?;
    let label_a = format!("test-{}", cfg.site_a.site_id);
    let label_b = format!("test-{}", cfg.site_b.site_id);

    let test_sets = evaluate_matrix(
        &model_refs,
        &[(label_a.as_str(), &test_a), (label_b.as_str(), &test_b)],
        &SsimParams::default(),
    )?;
    let report = ComparisonReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_echo: cfg.echo_json(),
        test_sets,
    };

    let dir = cfg.report_dir();
    std::fs::create_dir_all(&dir)?;
    report_io::write_report_json(&dir.join("report.json"), &report)?;
    report_io::write_report_txt(&dir.join("report.txt"), &report)?;
    report_io::write_per_pair_csv(&dir.join("per_pair_ssim.csv"), &report)?;

    for (label, test) in [(&label_a, &test_a), (&label_b, &test_b)] {
        let rows = cfg.montage_rows.min(test.len());
        let path = dir.join(format!("montage_{label}.png"));
        montage::write_montage(&path, &model_refs, &test[..rows])?;
    }
    println!("report written to {}", dir.display());
    Ok(report)
}
