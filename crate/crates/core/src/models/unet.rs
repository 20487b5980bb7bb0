//! U-Net generator: stride-2 conv encoder, mirrored transposed-conv decoder
//! with skip concatenation, tanh output. Depth is log2(resolution) so the
//! bottleneck is 1x1; normalization is skipped wherever a block's output is
//! a single pixel (per-sample statistics are undefined there).

use ndarray::{concatenate, s, Array2, Array4, ArrayD, Axis, NdFloat};
use rand::Rng;
use rand_distr::StandardNormal;
use rand_pcg::Pcg64Mcg;

use crate::error::{CoreError, Result};
use crate::nn::{
    cast, conv2d_backward, conv2d_forward, conv_transpose2d_backward, conv_transpose2d_forward,
    draw_dropout_mask, instance_norm_backward, instance_norm_forward, leaky_relu_backward,
    leaky_relu_forward, tanh_backward, tanh_forward, ParamTensor,
};
use crate::params::{ParamEntry, ParameterSet};

use super::GeneratorConfig;

const KERNEL: usize = 4;
const STRIDE: usize = 2;
const PAD: usize = 1;
const ENCODER_SLOPE: f64 = 0.2;
/// Decoder blocks carrying dropout, mirroring the pix2pix convention.
const DROPOUT_BLOCKS: usize = 3;

#[derive(Debug, Clone)]
struct Plan {
    depth: usize,
    resolution: usize,
    input_channels: usize,
    output_channels: usize,
    enc_ch: Vec<usize>,
    dec_out: Vec<usize>,
    dec_in: Vec<usize>,
    enc_norm: Vec<bool>,
    dropout_rate: f64,
}

impl Plan {
    fn new(
        depth: usize,
        input_channels: usize,
        output_channels: usize,
        base: usize,
        cap: usize,
        dropout_rate: f64,
    ) -> Self {
        assert!(depth >= 2, "U-Net needs depth >= 2");
        let resolution = 1usize << depth;
        let enc_ch: Vec<usize> = (0..depth).map(|i| (base << i).min(cap)).collect();
        let dec_out: Vec<usize> = (0..depth)
            .map(|j| {
                if j == depth - 1 {
                    output_channels
                } else {
                    enc_ch[depth - 2 - j]
                }
            })
            .collect();
        let dec_in: Vec<usize> = (0..depth)
            .map(|j| {
                if j == 0 {
                    enc_ch[depth - 1]
                } else {
                    dec_out[j - 1] + enc_ch[depth - 1 - j]
                }
            })
            .collect();
        // no norm on the first block, nor where the block output is 1x1
        let enc_norm: Vec<bool> = (0..depth)
            .map(|i| i > 0 && (resolution >> (i + 1)) > 1)
            .collect();
        Self {
            depth,
            resolution,
            input_channels,
            output_channels,
            enc_ch,
            dec_out,
            dec_in,
            enc_norm,
            dropout_rate,
        }
    }

    fn has_dropout(&self, j: usize) -> bool {
        j < DROPOUT_BLOCKS && j < self.depth - 1 && self.dropout_rate > 0.0
    }
}

/// Per-forward intermediate state consumed by [`UNetGenerator::backward`].
pub struct GenTape<F> {
    x: Array4<F>,
    enc_norm_cache: Vec<Option<(Array4<F>, Array2<F>)>>,
    enc_act: Vec<Array4<F>>,
    dec_in: Vec<Option<Array4<F>>>,
    dec_norm_cache: Vec<Option<(Array4<F>, Array2<F>)>>,
    dec_act: Vec<Option<Array4<F>>>,
    masks: Vec<Option<Array4<F>>>,
    y: Array4<F>,
}

impl<F> GenTape<F> {
    /// Dropout masks drawn during the forward pass, reusable for repeating
    /// the exact same stochastic forward (finite-difference checks).
    pub fn masks(&self) -> &[Option<Array4<F>>] {
        &self.masks
    }

    pub fn output(&self) -> &Array4<F> {
        &self.y
    }
}

enum DropoutMode<'a, F> {
    Eval,
    Sample(&'a mut Pcg64Mcg),
    Reuse(&'a [Option<Array4<F>>]),
}

#[derive(Debug, Clone)]
pub struct UNetGenerator<F = f32> {
    plan: Plan,
    params: Vec<ParamTensor<F>>,
    init_seed: u64,
}

impl<F: NdFloat> UNetGenerator<F> {
    /// Construction from a validated config; weights are N(0, init_scale^2),
    /// biases zero, drawn in parameter order from the seed.
    pub fn build(config: &GeneratorConfig, seed: u64) -> Self {
        let plan = Plan::new(
            config.depth(),
            config.input_channels,
            config.output_channels,
            config.base_channels,
            config.channel_cap,
            config.dropout_rate,
        );
        Self::from_plan(plan, config.init_scale, seed)
    }

    /// Diagnostic-scale constructor that bypasses the >=16 resolution floor of
    /// [`GeneratorConfig`]; used for micro gradient checks and tiny training
    /// instances. Resolution is 2^depth.
    pub fn micro(depth: usize, base_channels: usize, seed: u64) -> Self {
        let plan = Plan::new(depth, 1, 1, base_channels, base_channels * 8, 0.5);
        Self::from_plan(plan, 0.02, seed)
    }

    fn from_plan(plan: Plan, init_scale: f64, seed: u64) -> Self {
        let mut rng = crate::util::rng_for(seed, &[crate::util::tag("gen-init")]);
        let mut params = Vec::with_capacity(plan.depth * 4);
        for i in 0..plan.depth {
            let c_in = if i == 0 { plan.input_channels } else { plan.enc_ch[i - 1] };
            let c_out = plan.enc_ch[i];
            params.push(gaussian_param(
                format!("enc{i}.weight"),
                &[c_out, c_in, KERNEL, KERNEL],
                init_scale,
                &mut rng,
            ));
            params.push(zero_param(format!("enc{i}.bias"), &[c_out]));
        }
        for j in 0..plan.depth {
            params.push(gaussian_param(
                format!("dec{j}.weight"),
                &[plan.dec_in[j], plan.dec_out[j], KERNEL, KERNEL],
                init_scale,
                &mut rng,
            ));
            params.push(zero_param(format!("dec{j}.bias"), &[plan.dec_out[j]]));
        }
        Self {
            plan,
            params,
            init_seed: seed,
        }
    }

    pub fn resolution(&self) -> usize {
        self.plan.resolution
    }

    pub fn depth(&self) -> usize {
        self.plan.depth
    }

    pub fn input_channels(&self) -> usize {
        self.plan.input_channels
    }

    pub fn output_channels(&self) -> usize {
        self.plan.output_channels
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

    fn check_input(&self, x: &Array4<F>) -> Result<()> {
        let (_, c, h, w) = x.dim();
        if c != self.plan.input_channels || h != self.plan.resolution || w != self.plan.resolution {
            return Err(CoreError::ShapeMismatch(format!(
                "generator expects (N, {}, {}, {}), got (N, {c}, {h}, {w})",
                self.plan.input_channels, self.plan.resolution, self.plan.resolution
            )));
        }
        Ok(())
    }

    fn weight(&self, idx: usize) -> Array4<F> {
        self.params[idx]
            .value
            .view()
            .into_dimensionality()
            .expect("weight is 4-d")
            .to_owned()
    }

    fn bias(&self, idx: usize) -> ndarray::Array1<F> {
        self.params[idx]
            .value
            .view()
            .into_dimensionality()
            .expect("bias is 1-d")
            .to_owned()
    }

    /// Inference pass: dropout disabled, no tape retained.
    pub fn forward(&self, x: &Array4<F>) -> Result<Array4<F>> {
        Ok(self.forward_impl(x, DropoutMode::Eval)?.y)
    }

    /// Training pass: dropout masks drawn from `rng`, tape retained.
    pub fn forward_train(&self, x: &Array4<F>, rng: &mut Pcg64Mcg) -> Result<GenTape<F>> {
        self.forward_impl(x, DropoutMode::Sample(rng))
    }

    /// Re-runs a training pass with previously drawn masks.
    pub fn forward_with_masks(
        &self,
        x: &Array4<F>,
        masks: &[Option<Array4<F>>],
    ) -> Result<GenTape<F>> {
        self.forward_impl(x, DropoutMode::Reuse(masks))
    }

    fn forward_impl(&self, x: &Array4<F>, mut mode: DropoutMode<'_, F>) -> Result<GenTape<F>> {
        self.check_input(x)?;
        let depth = self.plan.depth;
        let mut enc_norm_cache = Vec::with_capacity(depth);
        let mut enc_act: Vec<Array4<F>> = Vec::with_capacity(depth);
        for i in 0..depth {
            let input = if i == 0 { x } else { &enc_act[i - 1] };
            let z = conv2d_forward(input, &self.weight(2 * i), &self.bias(2 * i + 1), STRIDE, PAD);
            if self.plan.enc_norm[i] {
                let (xhat, istd) = instance_norm_forward(&z);
                enc_act.push(leaky_relu_forward(&xhat, ENCODER_SLOPE));
                enc_norm_cache.push(Some((xhat, istd)));
            } else {
                enc_act.push(leaky_relu_forward(&z, ENCODER_SLOPE));
                enc_norm_cache.push(None);
            }
        }

        let mut dec_in: Vec<Option<Array4<F>>> = Vec::with_capacity(depth);
        let mut dec_norm_cache = Vec::with_capacity(depth);
        let mut dec_act: Vec<Option<Array4<F>>> = Vec::with_capacity(depth);
        let mut masks: Vec<Option<Array4<F>>> = Vec::with_capacity(depth);
        let mut carried: Option<Array4<F>> = None;
        let mut y = None;
        for j in 0..depth {
            let input_owned: Option<Array4<F>> = if j == 0 {
                None
            } else {
                let skip = &enc_act[depth - 1 - j];
                let prev = carried.take().expect("decoder carries activation");
                let cat = concatenate(Axis(1), &[prev.view(), skip.view()]).expect("channel concat");
                Some(cat.as_standard_layout().to_owned())
            };
            let input_ref = input_owned.as_ref().unwrap_or(&enc_act[depth - 1]);
            let wi = 2 * depth + 2 * j;
            let z =
                conv_transpose2d_forward(input_ref, &self.weight(wi), &self.bias(wi + 1), STRIDE, PAD);
            dec_in.push(input_owned);
            if j == depth - 1 {
                y = Some(tanh_forward(&z));
                dec_norm_cache.push(None);
                dec_act.push(None);
                masks.push(None);
            } else {
                let (xhat, istd) = instance_norm_forward(&z);
                let act = leaky_relu_forward(&xhat, 0.0);
                dec_norm_cache.push(Some((xhat, istd)));
                let mask: Option<Array4<F>> = if self.plan.has_dropout(j) {
                    match &mut mode {
                        DropoutMode::Eval => None,
                        DropoutMode::Sample(rng) => {
                            Some(draw_dropout_mask(act.dim(), self.plan.dropout_rate, rng))
                        }
                        DropoutMode::Reuse(ms) => ms[j].clone(),
                    }
                } else {
                    None
                };
                carried = Some(match &mask {
                    Some(m) => &act * m,
                    None => act.clone(),
                });
                dec_act.push(Some(act));
                masks.push(mask);
            }
        }

        Ok(GenTape {
            x: x.clone(),
            enc_norm_cache,
            enc_act,
            dec_in,
            dec_norm_cache,
            dec_act,
            masks,
            y: y.expect("final decoder block ran"),
        })
    }

    /// Gradients of all parameters given dLoss/dOutput; parallel to
    /// [`Self::params`] order.
    pub fn backward(&self, tape: &GenTape<F>, gy: &Array4<F>) -> Vec<ArrayD<F>> {
        let depth = self.plan.depth;
        let mut grads: Vec<Option<ArrayD<F>>> = vec![None; self.params.len()];
        let mut skip_grads: Vec<Option<Array4<F>>> = (0..depth).map(|_| None).collect();

        let mut g = tanh_backward(&tape.y, gy);
        for j in (0..depth).rev() {
            if j < depth - 1 {
                if let Some(mask) = &tape.masks[j] {
                    g = &g * mask;
                }
                let act = tape.dec_act[j].as_ref().expect("non-final decoder act");
                g = leaky_relu_backward(act, &g, 0.0);
                let (xhat, istd) = tape.dec_norm_cache[j].as_ref().expect("decoder norm cache");
                g = instance_norm_backward(xhat, istd, &g);
            }
            let input_ref = tape.dec_in[j].as_ref().unwrap_or(&tape.enc_act[depth - 1]);
            let wi = 2 * depth + 2 * j;
            let (gw, gb, gin) =
                conv_transpose2d_backward(input_ref, &self.weight(wi), &g, STRIDE, PAD, true);
            grads[wi] = Some(gw.into_dyn());
            grads[wi + 1] = Some(gb.into_dyn());
            let gin = gin.expect("requested input grad");
            if j == 0 {
                accumulate(&mut skip_grads[depth - 1], gin);
            } else {
                let c_prev = self.plan.dec_out[j - 1];
                let g_prev = gin.slice(s![.., ..c_prev, .., ..]).to_owned();
                let g_skip = gin.slice(s![.., c_prev.., .., ..]).to_owned();
                accumulate(&mut skip_grads[depth - 1 - j], g_skip);
                g = g_prev;
            }
        }

        let mut carried: Option<Array4<F>> = None;
        for i in (0..depth).rev() {
            let mut g_act = match carried.take() {
                Some(c) => c,
                None => Array4::zeros(tape.enc_act[i].dim()),
            };
            if let Some(s) = skip_grads[i].take() {
                g_act = &g_act + &s;
            }
            let mut g = leaky_relu_backward(&tape.enc_act[i], &g_act, ENCODER_SLOPE);
            if let Some((xhat, istd)) = tape.enc_norm_cache[i].as_ref() {
                g = instance_norm_backward(xhat, istd, &g);
            }
            let input_ref = if i == 0 { &tape.x } else { &tape.enc_act[i - 1] };
            let (gw, gb, gin) =
                conv2d_backward(input_ref, &self.weight(2 * i), &g, STRIDE, PAD, i > 0);
            grads[2 * i] = Some(gw.into_dyn());
            grads[2 * i + 1] = Some(gb.into_dyn());
            carried = gin;
        }

        grads
            .into_iter()
            .map(|g| g.expect("every parameter received a gradient"))
            .collect()
    }
}

impl UNetGenerator<f32> {
    pub fn export_parameters(&self) -> ParameterSet {
        export_param_tensors(&self.params)
    }

    /// Replaces all parameters; rejects any name/shape disagreement, naming
    /// the offending entry.
    pub fn import_parameters(&mut self, set: &ParameterSet) -> Result<()> {
        import_param_tensors(&mut self.params, set)
    }
}

pub(crate) fn export_param_tensors(params: &[ParamTensor<f32>]) -> ParameterSet {
    let entries = params
        .iter()
        .map(|p| {
            ParamEntry::new(
                p.name.clone(),
                p.value.shape().to_vec(),
                p.value.iter().copied().collect(),
            )
        })
        .collect();
    ParameterSet::new(entries).expect("model parameters are uniquely named and finite")
}

pub(crate) fn import_param_tensors(
    params: &mut [ParamTensor<f32>],
    set: &ParameterSet,
) -> Result<()> {
    if set.len() != params.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "parameter set holds {} entries, model has {}",
            set.len(),
            params.len()
        )));
    }
    for (p, e) in params.iter().zip(set.entries()) {
        if p.name != e.name {
            return Err(CoreError::ParamMismatch {
                name: e.name.clone(),
                reason: format!("expected `{}` at this position", p.name),
            });
        }
        if p.value.shape() != e.shape.as_slice() {
            return Err(CoreError::ParamMismatch {
                name: e.name.clone(),
                reason: format!("shape {:?} vs model {:?}", e.shape, p.value.shape()),
            });
        }
    }
    for (p, e) in params.iter_mut().zip(set.entries()) {
        for (dst, &src) in p.value.iter_mut().zip(e.values.iter()) {
            *dst = src;
        }
    }
    Ok(())
}

pub(crate) fn gaussian_param_pub<F: NdFloat>(
    name: String,
    shape: &[usize],
    scale: f64,
    rng: &mut Pcg64Mcg,
) -> ParamTensor<F> {
    gaussian_param(name, shape, scale, rng)
}

pub(crate) fn zero_param_pub<F: NdFloat>(name: String, shape: &[usize]) -> ParamTensor<F> {
    zero_param(name, shape)
}

fn gaussian_param<F: NdFloat>(
    name: String,
    shape: &[usize],
    scale: f64,
    rng: &mut Pcg64Mcg,
) -> ParamTensor<F> {
    let n: usize = shape.iter().product();
    let values: Vec<F> = (0..n)
        .map(|_| cast::<F>(rng.sample::<f64, _>(StandardNormal) * scale))
        .collect();
    ParamTensor::new(
        name,
        ArrayD::from_shape_vec(ndarray::IxDyn(shape), values).expect("shape matches"),
    )
}

fn zero_param<F: NdFloat>(name: String, shape: &[usize]) -> ParamTensor<F> {
    ParamTensor::new(name, ArrayD::zeros(ndarray::IxDyn(shape)))
}

fn accumulate<F: NdFloat>(slot: &mut Option<Array4<F>>, g: Array4<F>) {
    match slot {
        Some(existing) => *existing = &*existing + &g,
        None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    fn small_cfg(resolution: usize) -> GeneratorConfig {
        GeneratorConfig {
            resolution,
            base_channels: 4,
            channel_cap: 16,
            ..Default::default()
        }
    }

    #[test]
    fn depth_matches_log2_resolution() {
        let g = UNetGenerator::<f32>::build(&small_cfg(64), 0);
        assert_eq!(g.depth(), 6);
        let g = UNetGenerator::<f32>::build(&small_cfg(256), 0);
        assert_eq!(g.depth(), 8);
    }

    #[test]
    fn forward_preserves_shape_and_squashes() {
        let g = UNetGenerator::<f32>::build(&small_cfg(64), 3);
        let x = Array4::<f32>::from_elem((2, 1, 64, 64), 0.25);
        let y = g.forward(&x).unwrap();
        assert_eq!(y.dim(), (2, 1, 64, 64));
        assert!(y.iter().all(|v| v.is_finite() && v.abs() < 1.0));
    }

    #[test]
    fn forward_rejects_wrong_resolution() {
        let g = UNetGenerator::<f32>::build(&small_cfg(64), 3);
        let x = Array4::<f32>::zeros((1, 1, 32, 32));
        assert!(g.forward(&x).is_err());
    }

    #[test]
    fn zero_final_layer_gives_identically_zero_output() {
        let mut g = UNetGenerator::<f32>::build(&small_cfg(32), 1);
        let last_w = g.params.len() - 2;
        g.params[last_w].value.fill(0.0);
        g.params[last_w + 1].value.fill(0.0);
        let x = Array4::<f32>::from_elem((1, 1, 32, 32), 0.7);
        let y = g.forward(&x).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn importing_all_zeros_silences_the_generator() {
        let mut g = UNetGenerator::<f32>::build(&small_cfg(32), 2);
        let mut zeroed = g.export_parameters().entries().to_vec();
        for e in &mut zeroed {
            e.values.iter_mut().for_each(|v| *v = 0.0);
        }
        g.import_parameters(&crate::params::ParameterSet::new(zeroed).unwrap())
            .unwrap();
        let x = Array4::<f32>::from_elem((1, 1, 32, 32), 0.9);
        let y = g.forward(&x).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn construction_is_deterministic_per_seed() {
        let a = UNetGenerator::<f32>::build(&small_cfg(32), 9);
        let b = UNetGenerator::<f32>::build(&small_cfg(32), 9);
        let c = UNetGenerator::<f32>::build(&small_cfg(32), 10);
        let pa = a.export_parameters();
        let pb = b.export_parameters();
        let pc = c.export_parameters();
        assert_eq!(pa, pb);
        assert_eq!(pa.content_hash(), pb.content_hash());
        // same topology, different values
        pa.check_compatible(&pc).unwrap();
        assert_ne!(pa, pc);
    }

    #[test]
    fn export_import_roundtrip_preserves_forward_bits() {
        let mut g = UNetGenerator::<f32>::build(&small_cfg(32), 4);
        let x = Array4::<f32>::from_elem((1, 1, 32, 32), -0.3);
        let before = g.forward(&x).unwrap();
        let set = g.export_parameters();
        g.import_parameters(&set).unwrap();
        let after = g.forward(&x).unwrap();
        assert_eq!(
            before.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            after.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn import_rejects_mismatched_entries() {
        let mut g = UNetGenerator::<f32>::build(&small_cfg(32), 4);
        let other = UNetGenerator::<f32>::build(&small_cfg(64), 4);
        let err = g.import_parameters(&other.export_parameters()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("enc") || msg.contains("entries"), "got {msg}");
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn parameter_count_matches_layer_arithmetic_oracle() {
        // closed form: k^2 * c_in * c_out + c_out per (transposed) conv
        let count_oracle = |cfg: &GeneratorConfig| -> usize {
            let d = cfg.depth();
            let ch: Vec<usize> =
                (0..d).map(|i| (cfg.base_channels << i).min(cfg.channel_cap)).collect();
            let mut total = 0;
            let mut c_in = cfg.input_channels;
            for i in 0..d {
                total += 16 * c_in * ch[i] + ch[i];
                c_in = ch[i];
            }
            let mut prev_out = 0;
            for j in 0..d {
                let input = if j == 0 { ch[d - 1] } else { prev_out + ch[d - 1 - j] };
                let out = if j == d - 1 { cfg.output_channels } else { ch[d - 2 - j] };
                total += 16 * input * out + out;
                prev_out = out;
            }
            total
        };
        let cfg = small_cfg(64);
        let g = UNetGenerator::<f32>::build(&cfg, 0);
        assert_eq!(g.param_count(), count_oracle(&cfg));

        let default_cfg = GeneratorConfig::default();
        let g = UNetGenerator::<f32>::build(&default_cfg, 0);
        assert_eq!(g.param_count(), count_oracle(&default_cfg));
    }
}
