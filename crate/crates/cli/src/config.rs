//! Experiment configuration: one TOML file, flag overrides, explicit seeds.
//! The resolved config is echoed into every run artifact.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use fedpix_core::data::SiteProfile;
use fedpix_core::federation::WeightingMode;
use fedpix_core::models::{DiscriminatorConfig, GeneratorConfig};
use fedpix_core::training::{DecaySchedule, Hyperparams};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_base_channels")]
    pub base_channels: usize,
    #[serde(default = "default_channel_cap")]
    pub channel_cap: usize,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default = "default_base_channels")]
    pub disc_base_channels: usize,
    #[serde(default = "default_disc_layers")]
    pub disc_strided_layers: usize,
    #[serde(default = "default_disc_kernel")]
    pub disc_kernel: usize,
    #[serde(default = "default_leaky_slope")]
    pub leaky_slope: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields defaulted")
    }
}

fn default_base_channels() -> usize {
    64
}
fn default_channel_cap() -> usize {
    512
}
fn default_dropout() -> f64 {
    0.5
}
fn default_init_scale() -> f64 {
    0.02
}
fn default_disc_layers() -> usize {
    3
}
fn default_disc_kernel() -> usize {
    4
}
fn default_leaky_slope() -> f64 {
    0.2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub initial_lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_l1")]
    pub l1_weight: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default)]
    pub decay: DecaySchedule,
}

impl Default for HyperSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields defaulted")
    }
}

fn default_epochs() -> usize {
    200
}
fn default_lr() -> f64 {
    5e-4
}
fn default_batch() -> usize {
    1
}
fn default_l1() -> f64 {
    100.0
}
fn default_beta1() -> f64 {
    0.5
}
fn default_beta2() -> f64 {
    0.999
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default = "default_train_n")]
    pub train_per_site: usize,
    #[serde(default = "default_test_n")]
    pub test_per_site: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields defaulted")
    }
}

fn default_train_n() -> usize {
    80
}
fn default_test_n() -> usize {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default = "default_true")]
    pub deterministic: bool,
    #[serde(default = "default_cadence")]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub aggregation: WeightingMode,
    #[serde(default = "default_montage_rows")]
    pub montage_rows: usize,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub hyper: HyperSection,
    #[serde(default)]
    pub data: DataSection,
    pub site_a: SiteProfile,
    pub site_b: SiteProfile,
}

fn default_resolution() -> usize {
    256
}
fn default_true() -> bool {
    true
}
fn default_cadence() -> usize {
    20
}
fn default_montage_rows() -> usize {
    5
}

/// Flag overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub resolution: Option<usize>,
    pub epochs: Option<usize>,
    pub deterministic: Option<bool>,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(resolution) = overrides.resolution {
            cfg.resolution = resolution;
        }
        if let Some(epochs) = overrides.epochs {
            cfg.hyper.epochs = epochs;
        }
        if let Some(d) = overrides.deterministic {
            cfg.deterministic = d;
        }
        if let Some(out) = &overrides.out_dir {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.gen_config()
            .validate()
            .context("generator configuration")?;
        self.disc_config()
            .validate()
            .context("discriminator configuration")?;
        self.hyperparams().validate().context("hyperparameters")?;
        if self.data.train_per_site == 0 {
            bail!("data.train_per_site must be >= 1");
        }
        if self.data.test_per_site == 0 {
            bail!("data.test_per_site must be >= 1");
        }
        if self.checkpoint_every == 0 {
            bail!("checkpoint_every must be >= 1");
        }
        if self.montage_rows == 0 {
            bail!("montage_rows must be >= 1");
        }
        for profile in [&self.site_a, &self.site_b] {
            profile
                .validate()
                .with_context(|| format!("site `{}`", profile.site_id))?;
        }
        if self.site_a.site_id == self.site_b.site_id {
            bail!("site_a and site_b must have distinct site_id values");
        }
        Ok(())
    }

    pub fn gen_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            input_channels: 1,
            output_channels: 1,
            resolution: self.resolution,
            base_channels: self.model.base_channels,
            channel_cap: self.model.channel_cap,
            dropout_rate: self.model.dropout_rate,
            init_scale: self.model.init_scale,
        }
    }

    pub fn disc_config(&self) -> DiscriminatorConfig {
        DiscriminatorConfig {
            input_channels: 2,
            base_channels: self.model.disc_base_channels,
            num_strided_layers: self.model.disc_strided_layers,
            kernel: self.model.disc_kernel,
            leaky_slope: self.model.leaky_slope,
            init_scale: self.model.init_scale,
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            total_epochs: self.hyper.epochs,
            initial_lr: self.hyper.initial_lr,
            batch_size: self.hyper.batch_size,
            l1_weight: self.hyper.l1_weight,
            beta1: self.hyper.beta1,
            beta2: self.hyper.beta2,
            seed: self.seed,
            decay: self.hyper.decay,
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out_dir.join("data")
    }

    pub fn corpus_dir(&self, site_id: &str, split: &str) -> PathBuf {
        self.data_dir().join(site_id).join(split)
    }

    pub fn checkpoint_dir(&self, mode: &str) -> PathBuf {
        self.out_dir.join("checkpoints").join(mode)
    }

    pub fn logs_dir(&self) -> PathBuf {
        self.out_dir.join("logs")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out_dir.join("report")
    }

    /// Resolved config as JSON for artifact embedding.
    pub fn echo_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7
out_dir = "/tmp/fedpix-test"
resolution = 64

[site_a]
site_id = "site-a"
contrast_gamma = 0.85
orientation = 0
noise_sigma = 0.01
suppression_factor = 0.85
anatomy_seed_start = 0
anatomy_seed_end = 500000

[site_b]
site_id = "site-b"
contrast_gamma = 1.6
orientation = 90
noise_sigma = 0.04
suppression_factor = 0.85
anatomy_seed_start = 1000000
anatomy_seed_end = 1500000
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.hyper.epochs, 200);
        assert_eq!(cfg.hyper.initial_lr, 5e-4);
        assert_eq!(cfg.hyper.batch_size, 1);
        assert_eq!(cfg.hyper.l1_weight, 100.0);
        assert_eq!(cfg.data.train_per_site, 80);
        assert_eq!(cfg.data.test_per_site, 20);
        assert_eq!(cfg.model.base_channels, 64);
        assert!(cfg.deterministic);
    }

    #[test]
    fn zero_test_count_is_rejected() {
        let text = format!("{MINIMAL}\n[data]\ntest_per_site = 0\n");
        let cfg: ExperimentConfig = toml::from_str(&text.replace("[data]\ntest_per_site = 0", "")).unwrap();
        cfg.validate().unwrap();
        let mut bad = cfg;
        bad.data.test_per_site = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("not_a_field = 1\n{MINIMAL}");
        assert!(toml::from_str::<ExperimentConfig>(&text).is_err());
    }

    #[test]
    fn config_roundtrips_through_toml() {
        let cfg: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(serde_json::to_value(&cfg).unwrap(), serde_json::to_value(&back).unwrap());
    }
}
