//! pix2pix objective and one client's local training loop.
//!
//! Per batch the discriminator takes one step on (real, fake-detached) pairs,
//! then the generator takes one step against the updated discriminator with
//! adversarial + L1 losses. All randomness (shuffle, dropout) comes from a
//! per-epoch RNG derived from (seed, epoch), so resuming at an epoch boundary
//! reproduces the straight-through run exactly.

use ndarray::{s, Array4, ArrayD, NdFloat};
use rand::seq::SliceRandom;
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};

use crate::data::{image_to_batch, SlicePair};
use crate::error::{CoreError, Result};
use crate::models::{PatchDiscriminator, UNetGenerator};
use crate::nn::{bce_logits_grad, bce_logits_mean, cast, l1_grad, l1_mean, Adam};
use crate::util::{rng_for, tag};

/// Learning-rate decay policy. The default decays linearly from epoch 0;
/// the constant-then-linear variant holds the initial rate before decaying.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[derive(Default)]
pub enum DecaySchedule {
    #[default]
    LinearFromStart,
    ConstantThenLinear { decay_start: usize },
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub total_epochs: usize,
    pub initial_lr: f64,
    pub batch_size: usize,
    pub l1_weight: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    #[serde(default)]
    pub decay: DecaySchedule,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            total_epochs: 200,
            initial_lr: 5e-4,
            batch_size: 1,
            l1_weight: 100.0,
            beta1: 0.5,
            beta2: 0.999,
            seed: 0,
            decay: DecaySchedule::LinearFromStart,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.total_epochs < 1 {
            return Err(CoreError::InvalidConfig("total_epochs must be >= 1".into()));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(CoreError::InvalidConfig("initial_lr must be > 0".into()));
        }
        if self.batch_size < 1 {
            return Err(CoreError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.l1_weight >= 0.0 && self.l1_weight.is_finite()) {
            return Err(CoreError::InvalidConfig("l1_weight must be >= 0".into()));
        }
        for b in [self.beta1, self.beta2] {
            if !(0.0..1.0).contains(&b) {
                return Err(CoreError::InvalidConfig(format!("beta {b} must be in [0,1)")));
            }
        }
        if let DecaySchedule::ConstantThenLinear { decay_start } = self.decay {
            if decay_start >= self.total_epochs {
                return Err(CoreError::InvalidConfig(
                    "decay_start must be < total_epochs".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Per-epoch training summary; one CSV line per epoch goes to the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_g_loss: f64,
    pub mean_d_loss: f64,
    pub mean_l1: f64,
    pub lr_used: f64,
}

impl EpochStats {
    pub fn csv_header() -> &'static str {
        "epoch,lr,g_loss,d_loss,l1"
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch, self.lr_used, self.mean_g_loss, self.mean_d_loss, self.mean_l1
        )
    }
}

/// Linear decay: initial_lr * (1 - epoch/total), i.e. initial_lr at epoch 0
/// falling to initial_lr/total at the final epoch.
pub fn lr_schedule(epoch: usize, hyper: &Hyperparams) -> Result<f64> {
    if epoch >= hyper.total_epochs {
        return Err(CoreError::InvalidConfig(format!(
            "epoch {epoch} out of range (total {})",
            hyper.total_epochs
        )));
    }
    let lr = match hyper.decay {
        DecaySchedule::LinearFromStart => {
            let total = hyper.total_epochs as f64;
            hyper.initial_lr * ((total - epoch as f64) / total)
        }
        DecaySchedule::ConstantThenLinear { decay_start } => {
            if epoch < decay_start {
                hyper.initial_lr
            } else {
                let span = (hyper.total_epochs - decay_start) as f64;
                hyper.initial_lr * ((span - (epoch - decay_start) as f64) / span)
            }
        }
    };
    Ok(lr)
}

/// The pix2pix loss triple for one batch of logits and images:
/// g = BCE(fake_logits, 1) + lambda * L1(fake, real);
/// d = (BCE(real_logits, 1) + BCE(fake_logits, 0)) / 2.
pub fn pix2pix_losses<F: NdFloat>(
    real_logits: &Array4<F>,
    fake_logits: &Array4<F>,
    fake: &Array4<F>,
    real: &Array4<F>,
    lambda: f64,
) -> Result<(F, F, F)> {
    if real_logits.dim() != fake_logits.dim() {
        return Err(CoreError::ShapeMismatch(format!(
            "logit maps {:?} vs {:?}",
            real_logits.dim(),
            fake_logits.dim()
        )));
    }
    if fake.dim() != real.dim() {
        return Err(CoreError::ShapeMismatch(format!(
            "images {:?} vs {:?}",
            fake.dim(),
            real.dim()
        )));
    }
    if lambda < 0.0 {
        return Err(CoreError::InvalidConfig("lambda must be >= 0".into()));
    }
    for (label, arr) in [
        ("real_logits", real_logits),
        ("fake_logits", fake_logits),
        ("fake", fake),
        ("real", real),
    ] {
        if arr.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite(label.into()));
        }
    }
    let l1 = l1_mean(fake, real);
    let g_adv = bce_logits_mean(fake_logits, true);
    let g = g_adv + cast::<F>(lambda) * l1;
    let half = cast::<F>(0.5);
    let d = half * (bce_logits_mean(real_logits, true) + bce_logits_mean(fake_logits, false));
    Ok((g, d, l1))
}

/// RNG stream for one epoch of one model; shared by centralized training and
/// federated rounds so a 1-client federation replays the centralized stream.
pub fn rng_for_epoch(seed: u64, epoch: usize) -> Pcg64Mcg {
    rng_for(seed, &[tag("epoch"), epoch as u64])
}

fn batch_arrays(data: &[SlicePair], idxs: &[usize]) -> (Array4<f32>, Array4<f32>) {
    let (h, w) = data[idxs[0]].resolution();
    let b = idxs.len();
    let mut src = Array4::<f32>::zeros((b, 1, h, w));
    let mut tgt = Array4::<f32>::zeros((b, 1, h, w));
    for (bi, &i) in idxs.iter().enumerate() {
        let s4 = image_to_batch(&data[i].source);
        let t4 = image_to_batch(&data[i].target);
        src.slice_mut(s![bi..bi + 1, .., .., ..]).assign(&s4);
        tgt.slice_mut(s![bi..bi + 1, .., .., ..]).assign(&t4);
    }
    (src, tgt)
}

fn add_grads(a: &mut [ArrayD<f32>], b: &[ArrayD<f32>]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x = &*x + y;
    }
}

/// One pass over the shuffled dataset: a discriminator step then a generator
/// step per batch, Adam updates at the scheduled rate. Deterministic given
/// (models, optimizer state, data order, rng).
#[allow(clippy::too_many_arguments)]
pub fn train_local_epoch(
    gen: &mut UNetGenerator,
    disc: &mut PatchDiscriminator,
    opt_g: &mut Adam<f32>,
    opt_d: &mut Adam<f32>,
    data: &[SlicePair],
    hyper: &Hyperparams,
    epoch: usize,
    rng: &mut Pcg64Mcg,
) -> Result<EpochStats> {
    train_local_epoch_with_lr(gen, disc, opt_g, opt_d, data, hyper, epoch, rng, None)
}

/// [`train_local_epoch`] with an explicit learning-rate override (diagnostic
/// use; `Some(0.0)` verifies that a zero rate leaves parameters untouched).
#[allow(clippy::too_many_arguments)]
pub fn train_local_epoch_with_lr(
    gen: &mut UNetGenerator,
    disc: &mut PatchDiscriminator,
    opt_g: &mut Adam<f32>,
    opt_d: &mut Adam<f32>,
    data: &[SlicePair],
    hyper: &Hyperparams,
    epoch: usize,
    rng: &mut Pcg64Mcg,
    lr_override: Option<f64>,
) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    hyper.validate()?;
    let lr = match lr_override {
        Some(v) => v,
        None => lr_schedule(epoch, hyper)?,
    };
    let lr_f = lr as f32;
    let lambda = hyper.l1_weight as f32;
    let src_channels = gen.input_channels();

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);

    let mut sum_g = 0.0f64;
    let mut sum_d = 0.0f64;
    let mut sum_l1 = 0.0f64;
    let mut batches = 0usize;

    for (batch_index, idxs) in order.chunks(hyper.batch_size).enumerate() {
        let (src, real) = batch_arrays(data, idxs);

        let gen_tape = gen.forward_train(&src, rng)?;
        let fake = gen_tape.output().clone();

        // discriminator step (fake detached from the generator graph)
        let real_in = disc.concat_pair(&src, &real)?;
        let fake_in = disc.concat_pair(&src, &fake)?;
        let real_tape = disc.forward_tape(&real_in)?;
        let fake_tape = disc.forward_tape(&fake_in)?;
        let d_loss = 0.5
            * (bce_logits_mean(real_tape.logits(), true)
                + bce_logits_mean(fake_tape.logits(), false));
        if !d_loss.is_finite() {
            return Err(CoreError::NonFiniteLoss {
                batch_index,
                which: "d_loss".into(),
            });
        }
        let g_real = bce_logits_grad(real_tape.logits(), true, 0.5);
        let (mut d_grads, _) = disc.backward(&real_tape, &g_real, false);
        let g_fake = bce_logits_grad(fake_tape.logits(), false, 0.5);
        let (d_grads_fake, _) = disc.backward(&fake_tape, &g_fake, false);
        add_grads(&mut d_grads, &d_grads_fake);
        opt_d.step(disc.params_mut(), &d_grads, lr_f);

        // generator step against the updated discriminator
        let fake_tape2 = disc.forward_tape(&fake_in)?;
        let g_adv = bce_logits_mean(fake_tape2.logits(), true);
        let l1 = l1_mean(&fake, &real);
        let g_loss = g_adv + lambda * l1;
        if !g_loss.is_finite() {
            return Err(CoreError::NonFiniteLoss {
                batch_index,
                which: "g_loss".into(),
            });
        }
        let g_bce = bce_logits_grad(fake_tape2.logits(), true, 1.0);
        let (_, gx) = disc.backward(&fake_tape2, &g_bce, true);
        let gx = gx.expect("input grad requested");
        let mut g_fake_total = gx.slice(s![.., src_channels.., .., ..]).to_owned();
        g_fake_total = &g_fake_total + &l1_grad(&fake, &real, lambda);
        let gen_grads = gen.backward(&gen_tape, &g_fake_total);
        opt_g.step(gen.params_mut(), &gen_grads, lr_f);

        sum_g += f64::from(g_loss);
        sum_d += f64::from(d_loss);
        sum_l1 += f64::from(l1);
        batches += 1;
    }

    Ok(EpochStats {
        epoch,
        mean_g_loss: sum_g / batches as f64,
        mean_d_loss: sum_d / batches as f64,
        mean_l1: sum_l1 / batches as f64,
        lr_used: lr,
    })
}

/// Sequential epochs [start, end) with the per-epoch RNG derivation; the
/// callback sees each epoch's stats (logging, checkpoint cadence).
#[allow(clippy::too_many_arguments)]
pub fn train_epochs(
    gen: &mut UNetGenerator,
    disc: &mut PatchDiscriminator,
    opt_g: &mut Adam<f32>,
    opt_d: &mut Adam<f32>,
    data: &[SlicePair],
    hyper: &Hyperparams,
    epochs: std::ops::Range<usize>,
    mut on_epoch: impl FnMut(&EpochStats) -> Result<()>,
) -> Result<()> {
    for epoch in epochs {
        let mut rng = rng_for_epoch(hyper.seed, epoch);
        let stats = train_local_epoch(gen, disc, opt_g, opt_d, data, hyper, epoch, &mut rng)?;
        on_epoch(&stats)?;
    }
    Ok(())
}
