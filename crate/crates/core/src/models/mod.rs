//! pix2pix model pair: U-Net generator and PatchGAN discriminator, with
//! deterministic construction and ParameterSet export/import for federation.

mod patchgan;
mod unet;

pub use patchgan::{DiscTape, PatchDiscriminator};
pub use unet::{GenTape, UNetGenerator};

use ndarray::Array4;

use crate::error::{CoreError, Result};
use crate::params::ParameterSet;

/// U-Net generator configuration. Encoder depth is log2(resolution), so the
/// bottleneck is always 1x1 and desk-scale resolutions are first-class.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeneratorConfig {
    pub input_channels: usize,
    pub output_channels: usize,
    pub resolution: usize,
    pub base_channels: usize,
    pub channel_cap: usize,
    pub dropout_rate: f64,
    pub init_scale: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            input_channels: 1,
            output_channels: 1,
            resolution: 256,
            base_channels: 64,
            channel_cap: 512,
            dropout_rate: 0.5,
            init_scale: 0.02,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.resolution.is_power_of_two() || self.resolution < 16 {
            return Err(CoreError::InvalidConfig(format!(
                "resolution must be a power of two >= 16, got {}",
                self.resolution
            )));
        }
        if self.input_channels == 0 || self.output_channels == 0 || self.base_channels == 0 {
            return Err(CoreError::InvalidConfig("channel counts must be >= 1".into()));
        }
        if self.channel_cap < self.base_channels {
            return Err(CoreError::InvalidConfig(format!(
                "channel_cap {} < base_channels {}",
                self.channel_cap, self.base_channels
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(CoreError::InvalidConfig(format!(
                "dropout_rate must be in [0,1), got {}",
                self.dropout_rate
            )));
        }
        if self.init_scale <= 0.0 {
            return Err(CoreError::InvalidConfig("init_scale must be > 0".into()));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.resolution.trailing_zeros() as usize
    }
}

/// PatchGAN discriminator configuration. Defaults give the 3-layer, 70x70
/// receptive-field patch discriminator.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiscriminatorConfig {
    /// source channels + target channels of the conditional pair
    pub input_channels: usize,
    pub base_channels: usize,
    pub num_strided_layers: usize,
    pub kernel: usize,
    pub leaky_slope: f64,
    pub init_scale: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            input_channels: 2,
            base_channels: 64,
            num_strided_layers: 3,
            kernel: 4,
            leaky_slope: 0.2,
            init_scale: 0.02,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.base_channels == 0 {
            return Err(CoreError::InvalidConfig("channel counts must be >= 1".into()));
        }
        if self.num_strided_layers == 0 {
            return Err(CoreError::InvalidConfig("need at least one strided layer".into()));
        }
        if self.kernel < 2 {
            return Err(CoreError::InvalidConfig("kernel must be >= 2".into()));
        }
        if self.init_scale <= 0.0 {
            return Err(CoreError::InvalidConfig("init_scale must be > 0".into()));
        }
        Ok(())
    }

    /// (kernel, stride) per conv layer, in forward order.
    pub fn layer_geometry(&self) -> Vec<(usize, usize)> {
        let mut layers = vec![(self.kernel, 2); self.num_strided_layers];
        layers.push((self.kernel, 1));
        layers.push((self.kernel, 1));
        layers
    }

    /// Spatial size of the patch logit map for a square input.
    pub fn patch_map_size(&self, input: usize) -> usize {
        let mut n = input;
        for (k, s) in self.layer_geometry() {
            n = crate::nn::conv_out_size(n, k, s, 1);
        }
        n
    }

    /// Theoretical receptive field of one output unit, from the standard
    /// recurrence r <- r + (k - 1) * prod(previous strides).
    pub fn receptive_field(&self) -> usize {
        let mut r = 1usize;
        let mut jump = 1usize;
        for (k, s) in self.layer_geometry() {
            r += (k - 1) * jump;
            jump *= s;
        }
        r
    }

    /// Unclipped input-index interval covered by output position `idx`
    /// along one axis. Composes [lo, hi] <- [lo*s - p, hi*s - p + k - 1]
    /// through the layers from output back to input; pad is 1 everywhere.
    pub fn receptive_window(&self, idx: usize) -> (isize, isize) {
        let mut lo = idx as isize;
        let mut hi = idx as isize;
        for (k, s) in self.layer_geometry().into_iter().rev() {
            lo = lo * s as isize - 1;
            hi = hi * s as isize - 1 + (k as isize - 1);
        }
        (lo, hi)
    }
}

/// Builds the generator; errors on invalid configuration (non-power-of-two or
/// sub-16 resolution among others).
pub fn build_generator(config: &GeneratorConfig, seed: u64) -> Result<UNetGenerator> {
    config.validate()?;
    Ok(UNetGenerator::build(config, seed))
}

/// Synthesizes a target batch from a source batch in model range [-1, 1].
pub fn generator_forward(model: &UNetGenerator, source: &Array4<f32>) -> Result<Array4<f32>> {
    model.forward(source)
}

pub fn build_discriminator(config: &DiscriminatorConfig, seed: u64) -> Result<PatchDiscriminator> {
    config.validate()?;
    Ok(PatchDiscriminator::build(config, seed))
}

/// Patch logits for a conditional (source, target) pair.
pub fn discriminator_forward(
    model: &PatchDiscriminator,
    source: &Array4<f32>,
    target: &Array4<f32>,
) -> Result<Array4<f32>> {
    model.forward_pair(source, target)
}

pub fn export_parameters(model: &UNetGenerator) -> ParameterSet {
    model.export_parameters()
}

pub fn import_parameters(model: &mut UNetGenerator, params: &ParameterSet) -> Result<()> {
    model.import_parameters(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_configs_validate() {
        GeneratorConfig::default().validate().unwrap();
        DiscriminatorConfig::default().validate().unwrap();
    }

    #[test]
    fn bad_resolutions_are_rejected() {
        for resolution in [0, 8, 12, 96, 100] {
            let cfg = GeneratorConfig {
                resolution,
                ..Default::default()
            };
            assert!(build_generator(&cfg, 0).is_err(), "resolution {resolution}");
        }
    }

    #[test]
    fn patch_map_and_receptive_field_defaults() {
        let cfg = DiscriminatorConfig::default();
        // chained floor((n + 2p - k)/s) + 1: 256 -> 128 -> 64 -> 32 -> 31 -> 30
        assert_eq!(cfg.patch_map_size(256), 30);
        assert_eq!(cfg.patch_map_size(128), 14);
        assert_eq!(cfg.patch_map_size(64), 6);
        assert_eq!(cfg.receptive_field(), 70);
    }

    #[test]
    fn receptive_window_width_matches_field() {
        let cfg = DiscriminatorConfig::default();
        let (lo, hi) = cfg.receptive_window(10);
        assert_eq!(hi - lo + 1, 70);
    }
}
