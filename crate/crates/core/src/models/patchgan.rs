//! PatchGAN discriminator: a stack of stride-2 convolutions followed by two
//! stride-1 convolutions, emitting a grid of raw patch logits. With defaults
//! (3 strided layers, kernel 4) each logit sees a 70x70 input window.
//!
//! The stack is deliberately normalization-free: any per-map normalization
//! couples every spatial position through its statistics, and the patch
//! contract here is strict — one logit's gradient support must stay inside
//! its receptive window exactly.

use ndarray::{concatenate, Array4, ArrayD, Axis, NdFloat};

use crate::error::{CoreError, Result};
use crate::nn::{conv2d_backward, conv2d_forward, leaky_relu_backward, leaky_relu_forward, ParamTensor};
use crate::params::ParameterSet;

use super::unet::{export_param_tensors, import_param_tensors};
use super::DiscriminatorConfig;

const PAD: usize = 1;
/// Channel growth saturates at 8x base, as in the original patch discriminator.
const MAX_CHANNEL_MULT: usize = 8;

#[derive(Debug, Clone)]
struct LayerSpec {
    stride: usize,
    activated: bool,
}

/// Per-forward intermediate state consumed by [`PatchDiscriminator::backward`].
pub struct DiscTape<F> {
    x: Array4<F>,
    act: Vec<Array4<F>>,
}

impl<F> DiscTape<F> {
    /// Raw patch logits (output of the final layer).
    pub fn logits(&self) -> &Array4<F> {
        self.act.last().expect("at least one layer")
    }
}

#[derive(Debug, Clone)]
pub struct PatchDiscriminator<F = f32> {
    layers: Vec<LayerSpec>,
    params: Vec<ParamTensor<F>>,
    kernel: usize,
    leaky_slope: f64,
    input_channels: usize,
    init_seed: u64,
}

impl<F: NdFloat> PatchDiscriminator<F> {
    pub fn build(config: &DiscriminatorConfig, seed: u64) -> Self {
        let mut rng = crate::util::rng_for(seed, &[crate::util::tag("disc-init")]);
        let n = config.num_strided_layers;
        let mut layers = Vec::with_capacity(n + 2);
        let mut params = Vec::with_capacity((n + 2) * 2);
        let mut c_in = config.input_channels;
        for l in 0..n + 2 {
            let (stride, c_out, activated) = if l < n {
                let mult = (1usize << l).min(MAX_CHANNEL_MULT);
                (2, config.base_channels * mult, true)
            } else if l == n {
                let mult = (1usize << n).min(MAX_CHANNEL_MULT);
                (1, config.base_channels * mult, true)
            } else {
                (1, 1, false)
            };
            params.push(super::unet::gaussian_param_pub(
                format!("conv{l}.weight"),
                &[c_out, c_in, config.kernel, config.kernel],
                config.init_scale,
                &mut rng,
            ));
            params.push(super::unet::zero_param_pub(format!("conv{l}.bias"), &[c_out]));
            layers.push(LayerSpec { stride, activated });
            c_in = c_out;
        }
        Self {
            layers,
            params,
            kernel: config.kernel,
            leaky_slope: config.leaky_slope,
            input_channels: config.input_channels,
            init_seed: seed,
        }
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn params(&self) -> &[ParamTensor<F>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamTensor<F>] {
        &mut self.params
    }

    fn weight(&self, l: usize) -> Array4<F> {
        self.params[2 * l]
            .value
            .view()
            .into_dimensionality()
            .expect("weight is 4-d")
            .to_owned()
    }

    fn bias(&self, l: usize) -> ndarray::Array1<F> {
        self.params[2 * l + 1]
            .value
            .view()
            .into_dimensionality()
            .expect("bias is 1-d")
            .to_owned()
    }

    /// Patch logits for an already channel-concatenated input.
    pub fn forward(&self, x: &Array4<F>) -> Result<Array4<F>> {
        let mut tape = self.forward_tape(x)?;
        Ok(tape.act.pop().expect("at least one layer"))
    }

    /// Conditional forward: concatenates source and target along channels.
    pub fn forward_pair(&self, source: &Array4<F>, target: &Array4<F>) -> Result<Array4<F>> {
        let x = self.concat_pair(source, target)?;
        self.forward(&x)
    }

    pub fn concat_pair(&self, source: &Array4<F>, target: &Array4<F>) -> Result<Array4<F>> {
        let (ns, cs, hs, ws) = source.dim();
        let (nt, ct, ht, wt) = target.dim();
        if ns != nt || hs != ht || ws != wt {
            return Err(CoreError::ShapeMismatch(format!(
                "source {:?} vs target {:?}",
                source.dim(),
                target.dim()
            )));
        }
        if cs + ct != self.input_channels {
            return Err(CoreError::ShapeMismatch(format!(
                "source+target channels {} != discriminator input {}",
                cs + ct,
                self.input_channels
            )));
        }
        let cat = concatenate(Axis(1), &[source.view(), target.view()]).expect("channel concat");
        Ok(cat.as_standard_layout().to_owned())
    }

    /// Forward retaining the tape for [`Self::backward`].
    pub fn forward_tape(&self, x: &Array4<F>) -> Result<DiscTape<F>> {
        let (_, c, h, w) = x.dim();
        if c != self.input_channels {
            return Err(CoreError::ShapeMismatch(format!(
                "discriminator expects {} channels, got {c}",
                self.input_channels
            )));
        }
        let min_side = self.min_input_side();
        if h < min_side || w < min_side {
            return Err(CoreError::ShapeMismatch(format!(
                "input {h}x{w} below minimum {min_side}x{min_side} for this layer stack"
            )));
        }
        let mut act: Vec<Array4<F>> = Vec::with_capacity(self.layers.len());
        for (l, spec) in self.layers.iter().enumerate() {
            let input = if l == 0 { x } else { &act[l - 1] };
            let z = conv2d_forward(input, &self.weight(l), &self.bias(l), spec.stride, PAD);
            act.push(if spec.activated {
                leaky_relu_forward(&z, self.leaky_slope)
            } else {
                z
            });
        }
        Ok(DiscTape { x: x.clone(), act })
    }

    /// Smallest square input for which every layer still has a valid output.
    pub fn min_input_side(&self) -> usize {
        // run the size recurrence backwards from 1
        let mut n = 1usize;
        for spec in self.layers.iter().rev() {
            n = (n - 1) * spec.stride + self.kernel;
            n = n.saturating_sub(2 * PAD);
        }
        n
    }

    /// Gradients for all parameters, plus optionally the gradient with
    /// respect to the (concatenated) input.
    pub fn backward(
        &self,
        tape: &DiscTape<F>,
        gy: &Array4<F>,
        need_input_grad: bool,
    ) -> (Vec<ArrayD<F>>, Option<Array4<F>>) {
        let nl = self.layers.len();
        let mut grads: Vec<Option<ArrayD<F>>> = vec![None; self.params.len()];
        let mut g = gy.clone();
        let mut gx = None;
        for l in (0..nl).rev() {
            let spec = &self.layers[l];
            if spec.activated {
                g = leaky_relu_backward(&tape.act[l], &g, self.leaky_slope);
            }
            let input = if l == 0 { &tape.x } else { &tape.act[l - 1] };
            let need = l > 0 || need_input_grad;
            let (gw, gb, gin) = conv2d_backward(input, &self.weight(l), &g, spec.stride, PAD, need);
            grads[2 * l] = Some(gw.into_dyn());
            grads[2 * l + 1] = Some(gb.into_dyn());
            if l > 0 {
                g = gin.expect("requested input grad");
            } else {
                gx = gin;
            }
        }
        (
            grads
                .into_iter()
                .map(|g| g.expect("every parameter received a gradient"))
                .collect(),
            gx,
        )
    }
}

impl PatchDiscriminator<f32> {
    pub fn export_parameters(&self) -> ParameterSet {
        export_param_tensors(&self.params)
    }

    pub fn import_parameters(&mut self, set: &ParameterSet) -> Result<()> {
        import_param_tensors(&mut self.params, set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    #[test]
    fn patch_map_sizes_match_arithmetic() {
        let cfg = DiscriminatorConfig {
            base_channels: 4,
            ..Default::default()
        };
        let d = PatchDiscriminator::<f32>::build(&cfg, 0);
        let x = Array4::<f32>::zeros((1, 2, 64, 64));
        let y = d.forward(&x).unwrap();
        assert_eq!(y.dim(), (1, 1, 6, 6));
        assert_eq!(cfg.patch_map_size(64), 6);
    }

    #[test]
    fn zero_parameters_give_zero_logits() {
        let cfg = DiscriminatorConfig {
            base_channels: 2,
            ..Default::default()
        };
        let mut d = PatchDiscriminator::<f32>::build(&cfg, 1);
        for p in d.params_mut() {
            p.value.fill(0.0);
        }
        let src = Array4::<f32>::from_elem((1, 1, 32, 32), 0.4);
        let tgt = Array4::<f32>::from_elem((1, 1, 32, 32), -0.8);
        let y = d.forward_pair(&src, &tgt).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pair_shape_mismatch_is_rejected() {
        let cfg = DiscriminatorConfig {
            base_channels: 2,
            ..Default::default()
        };
        let d = PatchDiscriminator::<f32>::build(&cfg, 1);
        let src = Array4::<f32>::zeros((1, 1, 32, 32));
        let tgt = Array4::<f32>::zeros((1, 1, 16, 16));
        assert!(d.forward_pair(&src, &tgt).is_err());
    }

    #[test]
    fn export_import_roundtrip() {
        let cfg = DiscriminatorConfig {
            base_channels: 2,
            ..Default::default()
        };
        let mut d = PatchDiscriminator::<f32>::build(&cfg, 7);
        let set = d.export_parameters();
        let other = PatchDiscriminator::<f32>::build(&cfg, 8).export_parameters();
        set.check_compatible(&other).unwrap();
        assert_ne!(set, other);
        d.import_parameters(&set).unwrap();
        assert_eq!(d.export_parameters(), set);
    }

    #[test]
    fn param_count_matches_closed_form() {
        let cfg = DiscriminatorConfig::default();
        let d = PatchDiscriminator::<f32>::build(&cfg, 0);
        // k^2*c_in*c_out + c_out over layers 2->64->128->256->512->1
        let chans = [2usize, 64, 128, 256, 512, 1];
        let oracle: usize = chans
            .windows(2)
            .map(|w| 16 * w[0] * w[1] + w[1])
            .sum();
        assert_eq!(d.param_count(), oracle);
    }

    #[test]
    fn undersized_input_is_rejected() {
        let d = PatchDiscriminator::<f32>::build(&DiscriminatorConfig::default(), 0);
        // default stack needs at least 16x16
        let x = Array4::<f32>::zeros((1, 2, 8, 8));
        assert!(d.forward(&x).is_err());
    }
}
