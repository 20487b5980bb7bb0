//! Federated training: FedGAN weighted parameter averaging across clients,
//! one local epoch per round, with aggregated generator and discriminator
//! broadcast back to every client after each round. Optimizer moments are
//! never aggregated; they persist locally per client.

pub mod transport;

use ndarray::Array2;
use serde::Serialize;

use crate::data::SlicePair;
use crate::error::{CoreError, Result};
use crate::metrics::{evaluate_model, mean_sd, wilcoxon_signed_rank, SsimParams};
use crate::models::{
    build_discriminator, build_generator, DiscriminatorConfig, GeneratorConfig,
    PatchDiscriminator, UNetGenerator,
};
use crate::nn::Adam;
use crate::params::{ParamEntry, ParameterSet};
use crate::report::{ComparisonReport, EvalCell, ModelKind, TestSetReport};
use crate::training::{rng_for_epoch, train_local_epoch, EpochStats, Hyperparams};

/// How per-client aggregation weights are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
#[derive(Default)]
pub enum WeightingMode {
    /// Weights proportional to client dataset sizes (federated-averaging
    /// convention).
    #[default]
    SizeProportional,
    Equal,
}


/// One federation participant: local data, models, optimizer state.
pub struct ClientState {
    pub client_id: String,
    pub dataset: Vec<SlicePair>,
    pub generator: UNetGenerator,
    pub discriminator: PatchDiscriminator,
    pub opt_g: Adam<f32>,
    pub opt_d: Adam<f32>,
    pub hyper: Hyperparams,
}

impl ClientState {
    pub fn new(
        client_id: impl Into<String>,
        dataset: Vec<SlicePair>,
        gen_cfg: &GeneratorConfig,
        disc_cfg: &DiscriminatorConfig,
        hyper: Hyperparams,
        init_seed: u64,
    ) -> Result<Self> {
        if dataset.is_empty() {
            return Err(CoreError::EmptyDataset);
        }
        hyper.validate()?;
        let generator = build_generator(gen_cfg, init_seed)?;
        let discriminator = build_discriminator(disc_cfg, init_seed)?;
        let opt_g = Adam::new(generator.params(), hyper.beta1, hyper.beta2);
        let opt_d = Adam::new(discriminator.params(), hyper.beta1, hyper.beta2);
        Ok(Self {
            client_id: client_id.into(),
            dataset,
            generator,
            discriminator,
            opt_g,
            opt_d,
            hyper,
        })
    }

    pub fn dataset_size(&self) -> usize {
        self.dataset.len()
    }

    /// One local epoch with the per-(seed, round) RNG stream.
    pub fn train_round(&mut self, round_index: usize) -> Result<EpochStats> {
        let mut rng = rng_for_epoch(self.hyper.seed, round_index);
        train_local_epoch(
            &mut self.generator,
            &mut self.discriminator,
            &mut self.opt_g,
            &mut self.opt_d,
            &self.dataset,
            &self.hyper,
            round_index,
            &mut rng,
        )
        .map_err(|e| CoreError::Client {
            client_id: self.client_id.clone(),
            source: Box::new(e),
        })
    }
}

/// One synchronization cycle's outcome.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub round_index: usize,
    pub client_ids: Vec<String>,
    pub weights: Vec<f64>,
    pub client_g_hashes: Vec<u64>,
    pub client_d_hashes: Vec<u64>,
    pub aggregated_g: ParameterSet,
    pub aggregated_d: ParameterSet,
    pub client_stats: Vec<EpochStats>,
}

/// Normalized aggregation weights from dataset sizes.
pub fn derive_weights(sizes: &[usize], mode: WeightingMode) -> Vec<f64> {
    match mode {
        WeightingMode::SizeProportional => {
            let total: usize = sizes.iter().sum();
            sizes.iter().map(|&s| s as f64 / total as f64).collect()
        }
        WeightingMode::Equal => vec![1.0 / sizes.len() as f64; sizes.len()],
    }
}

/// Entry-wise convex combination of shape-compatible parameter sets:
/// out[i] = sum_k weights[k] * params_k[i], accumulated in f64.
pub fn fedgan_aggregate(sets: &[ParameterSet], weights: &[f64]) -> Result<ParameterSet> {
    if sets.is_empty() {
        return Err(CoreError::InvalidWeights("no parameter sets to aggregate".into()));
    }
    if sets.len() != weights.len() {
        return Err(CoreError::InvalidWeights(format!(
            "{} sets vs {} weights",
            sets.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| **w < 0.0 || !w.is_finite()) {
        return Err(CoreError::InvalidWeights(format!("negative or non-finite weight {w}")));
    }
    let sum: f64 = weights.iter().sum();
    if sum == 0.0 {
        return Err(CoreError::InvalidWeights("weights sum to zero".into()));
    }
    if (sum - 1.0).abs() > 1e-12 {
        return Err(CoreError::InvalidWeights(format!(
            "weights must sum to 1 within 1e-12, got {sum}"
        )));
    }
    for other in &sets[1..] {
        sets[0].check_compatible(other)?;
    }
    let entries = sets[0]
        .entries()
        .iter()
        .enumerate()
        .map(|(ei, first)| {
            let mut out = vec![0.0f64; first.values.len()];
            for (set, &w) in sets.iter().zip(weights) {
                for (acc, &v) in out.iter_mut().zip(&set.entries()[ei].values) {
                    *acc += w * f64::from(v);
                }
            }
            ParamEntry::new(
                first.name.clone(),
                first.shape.clone(),
                out.into_iter().map(|v| v as f32).collect(),
            )
        })
        .collect();
    ParameterSet::new(entries)
}

/// Runs one round: every client trains one local epoch, the server
/// aggregates generators and discriminators separately with weights from
/// `mode`, and the aggregates are imported back into every client.
pub fn run_round(
    clients: &mut [ClientState],
    round_index: usize,
    mode: WeightingMode,
    parallel: bool,
) -> Result<RoundRecord> {
    if clients.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    let client_stats: Vec<EpochStats> = if parallel && clients.len() > 1 {
        let results: Vec<Result<EpochStats>> = std::thread::scope(|scope| {
            let handles: Vec<_> = clients
                .iter_mut()
                .map(|c| scope.spawn(move || c.train_round(round_index)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("client thread")).collect()
        });
        results.into_iter().collect::<Result<Vec<_>>>()?
    } else {
        clients
            .iter_mut()
            .map(|c| c.train_round(round_index))
            .collect::<Result<Vec<_>>>()?
    };

    let g_sets: Vec<ParameterSet> = clients.iter().map(|c| c.generator.export_parameters()).collect();
    let d_sets: Vec<ParameterSet> =
        clients.iter().map(|c| c.discriminator.export_parameters()).collect();
    let sizes: Vec<usize> = clients.iter().map(|c| c.dataset_size()).collect();
    let weights = derive_weights(&sizes, mode);
    let aggregated_g = fedgan_aggregate(&g_sets, &weights)?;
    let aggregated_d = fedgan_aggregate(&d_sets, &weights)?;

    for c in clients.iter_mut() {
        c.generator.import_parameters(&aggregated_g)?;
        c.discriminator.import_parameters(&aggregated_d)?;
    }

    Ok(RoundRecord {
        round_index,
        client_ids: clients.iter().map(|c| c.client_id.clone()).collect(),
        weights,
        client_g_hashes: g_sets.iter().map(|s| s.content_hash()).collect(),
        client_d_hashes: d_sets.iter().map(|s| s.content_hash()).collect(),
        aggregated_g,
        aggregated_d,
        client_stats,
    })
}

/// Streaming federated training: the sink sees each round's record (for
/// logging or checkpointing) and records are not retained. Returns the final
/// aggregated (generator, discriminator) parameters.
pub fn run_federated_training_with(
    clients: &mut [ClientState],
    num_rounds: usize,
    mode: WeightingMode,
    parallel: bool,
    mut sink: impl FnMut(&RoundRecord) -> Result<()>,
) -> Result<(ParameterSet, ParameterSet)> {
    if num_rounds == 0 {
        return Err(CoreError::InvalidConfig("num_rounds must be >= 1".into()));
    }
    let mut last: Option<(ParameterSet, ParameterSet)> = None;
    for round_index in 0..num_rounds {
        let record = run_round(clients, round_index, mode, parallel)?;
        last = Some((record.aggregated_g.clone(), record.aggregated_d.clone()));
        sink(&record)?;
    }
    Ok(last.expect("at least one round"))
}

/// Collecting variant: returns the final parameters plus every round record.
pub fn run_federated_training(
    clients: &mut [ClientState],
    num_rounds: usize,
    mode: WeightingMode,
    parallel: bool,
) -> Result<((ParameterSet, ParameterSet), Vec<RoundRecord>)> {
    let mut rounds = Vec::with_capacity(num_rounds);
    let finals = run_federated_training_with(clients, num_rounds, mode, parallel, |r| {
        rounds.push(r.clone());
        Ok(())
    })?;
    Ok((finals, rounds))
}

/// Full configuration of the four-model experiment.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixSetup {
    pub gen_cfg: GeneratorConfig,
    pub disc_cfg: DiscriminatorConfig,
    pub hyper: Hyperparams,
    pub weighting: WeightingMode,
    /// Deterministic mode forces sequential client execution in client order.
    pub deterministic: bool,
    #[serde(skip)]
    pub ssim: SsimParams,
}

impl MatrixSetup {
    pub fn new(gen_cfg: GeneratorConfig, disc_cfg: DiscriminatorConfig, hyper: Hyperparams) -> Self {
        Self {
            gen_cfg,
            disc_cfg,
            hyper,
            weighting: WeightingMode::SizeProportional,
            deterministic: true,
            ssim: SsimParams::default(),
        }
    }
}

fn check_same_resolution(sets: &[&[SlicePair]]) -> Result<(usize, usize)> {
    let mut dims: Option<(usize, usize)> = None;
    for set in sets {
        if set.is_empty() {
            return Err(CoreError::EmptyDataset);
        }
        for pair in set.iter() {
            let d = pair.resolution();
            match dims {
                None => dims = Some(d),
                Some(existing) if existing != d => {
                    return Err(CoreError::ShapeMismatch(format!(
                        "mixed resolutions {existing:?} and {d:?} across corpora"
                    )))
                }
                _ => {}
            }
        }
    }
    Ok(dims.expect("non-empty"))
}

/// Trains one single-site (or central) model to completion and returns the
/// generator.
fn train_single(
    data: &[SlicePair],
    setup: &MatrixSetup,
) -> Result<UNetGenerator> {
    let mut gen = build_generator(&setup.gen_cfg, setup.hyper.seed)?;
    let mut disc = build_discriminator(&setup.disc_cfg, setup.hyper.seed)?;
    let mut opt_g = Adam::new(gen.params(), setup.hyper.beta1, setup.hyper.beta2);
    let mut opt_d = Adam::new(disc.params(), setup.hyper.beta1, setup.hyper.beta2);
    crate::training::train_epochs(
        &mut gen,
        &mut disc,
        &mut opt_g,
        &mut opt_d,
        data,
        &setup.hyper,
        0..setup.hyper.total_epochs,
        |_| Ok(()),
    )?;
    Ok(gen)
}

fn train_federated_pair(
    site_a: &[SlicePair],
    site_b: &[SlicePair],
    setup: &MatrixSetup,
) -> Result<UNetGenerator> {
    let mut clients = vec![
        ClientState::new(
            "client-a",
            site_a.to_vec(),
            &setup.gen_cfg,
            &setup.disc_cfg,
            setup.hyper.clone(),
            setup.hyper.seed,
        )?,
        ClientState::new(
            "client-b",
            site_b.to_vec(),
            &setup.gen_cfg,
            &setup.disc_cfg,
            setup.hyper.clone(),
            setup.hyper.seed,
        )?,
    ];
    let ((final_g, _), _) = {
        let mut sinkless = |_: &RoundRecord| Ok(());
        let finals = run_federated_training_with(
            &mut clients,
            setup.hyper.total_epochs,
            setup.weighting,
            !setup.deterministic,
            &mut sinkless,
        )?;
        (finals, ())
    };
    let mut gen = build_generator(&setup.gen_cfg, setup.hyper.seed)?;
    gen.import_parameters(&final_g)?;
    Ok(gen)
}

/// Builds the per-test-set report block for four trained generators.
pub fn evaluate_matrix(
    models: &[(ModelKind, &UNetGenerator)],
    test_sets: &[(&str, &[SlicePair])],
    ssim: &SsimParams,
) -> Result<Vec<TestSetReport>> {
    let mut out = Vec::with_capacity(test_sets.len());
    for (name, test) in test_sets {
        let mut cells = Vec::with_capacity(models.len());
        for (kind, gen) in models {
            let per_pair = evaluate_model(*gen, test, ssim)?;
            let (mean, sd) = mean_sd(&per_pair)?;
            cells.push(EvalCell {
                model: *kind,
                mean,
                sd,
                per_pair,
            });
        }
        let k = cells.len();
        let mut p_values = vec![vec![1.0; k]; k];
        let mut p_methods = vec![vec![crate::metrics::WilcoxonMethod::Degenerate; k]; k];
        for i in 0..k {
            for j in 0..k {
                let r = wilcoxon_signed_rank(&cells[i].per_pair, &cells[j].per_pair)?;
                p_values[i][j] = r.p_value;
                p_methods[i][j] = r.method;
            }
        }
        out.push(TestSetReport {
            test_set: name.to_string(),
            pair_ids: test.iter().map(|p| p.pair_id.clone()).collect(),
            cells,
            p_values,
            p_methods,
        });
    }
    Ok(out)
}

/// Trains the four-model matrix — Baseline-A, Baseline-B, Central (pooled
/// data), and a 2-client federation — and evaluates every model on both test
/// sets.
pub fn run_experiment_matrix(
    site_a_train: &[SlicePair],
    site_b_train: &[SlicePair],
    test_a: &[SlicePair],
    test_b: &[SlicePair],
    setup: &MatrixSetup,
) -> Result<ComparisonReport> {
    check_same_resolution(&[site_a_train, site_b_train, test_a, test_b])?;

    let baseline_a = train_single(site_a_train, setup)?;
    let baseline_b = train_single(site_b_train, setup)?;
    let mut central_data = site_a_train.to_vec();
    central_data.extend_from_slice(site_b_train);
    let central = train_single(&central_data, setup)?;
    let federated = train_federated_pair(site_a_train, site_b_train, setup)?;

    let models: Vec<(ModelKind, &UNetGenerator)> = vec![
        (ModelKind::BaselineA, &baseline_a),
        (ModelKind::BaselineB, &baseline_b),
        (ModelKind::Central, &central),
        (ModelKind::Federated, &federated),
    ];
    let label_a = format!("test-{}", test_a[0].site_id);
    let label_b = format!("test-{}", test_b[0].site_id);
    let test_sets = evaluate_matrix(
        &models,
        &[(label_a.as_str(), test_a), (label_b.as_str(), test_b)],
        &setup.ssim,
    )?;

    Ok(ComparisonReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_echo: serde_json::to_value(setup).unwrap_or(serde_json::Value::Null),
        test_sets,
    })
}

/// Mean absolute difference of a site-mean image between two corpora; used to
/// confirm the domain-shift knobs are live.
pub fn corpus_mean_gap(a: &[SlicePair], b: &[SlicePair]) -> f64 {
    let mean_img = |ps: &[SlicePair]| {
        let mut acc = Array2::<f64>::zeros(ps[0].source.dim());
        for p in ps {
            acc = acc + p.source.mapv(f64::from);
        }
        acc / ps.len() as f64
    };
    (mean_img(a) - mean_img(b)).mapv(f64::abs).mean().unwrap_or(0.0)
}
