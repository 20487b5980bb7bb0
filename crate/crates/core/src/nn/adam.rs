//! Adaptive-moment optimizer with bias correction.
//!
//! Moment state lives outside the models so that federation can aggregate
//! parameters while each client keeps its own optimizer history.

use ndarray::{ArrayD, NdFloat};

use super::{cast, ParamTensor};
use crate::error::{CoreError, Result};
use crate::params::{ParamEntry, ParameterSet};

pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam<F> {
    m: Vec<ArrayD<F>>,
    v: Vec<ArrayD<F>>,
    t: u64,
    beta1: F,
    beta2: F,
    eps: F,
}

impl<F: NdFloat> Adam<F> {
    pub fn new(params: &[ParamTensor<F>], beta1: f64, beta2: f64) -> Self {
        Self {
            m: params.iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect(),
            v: params.iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect(),
            t: 0,
            beta1: cast(beta1),
            beta2: cast(beta2),
            eps: cast(ADAM_EPS),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update over all parameters. `grads` must be parallel to `params`.
    pub fn step(&mut self, params: &mut [ParamTensor<F>], grads: &[ArrayD<F>], lr: F) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let c1 = F::one() - b1.powi(self.t as i32);
        let c2 = F::one() - b2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            debug_assert_eq!(p.value.raw_dim(), g.raw_dim());
            ndarray::Zip::from(&mut p.value)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|pv, &gv, mv, vv| {
                    *mv = b1 * *mv + (F::one() - b1) * gv;
                    *vv = b2 * *vv + (F::one() - b2) * gv * gv;
                    let mhat = *mv / c1;
                    let vhat = *vv / c2;
                    *pv -= lr * mhat / (vhat.sqrt() + self.eps);
                });
        }
    }
}

impl Adam<f32> {
    /// Moments as a ParameterSet (entries `<name>.m` / `<name>.v`) so run
    /// state can reuse the checkpoint container.
    pub fn export_state(&self, params: &[ParamTensor<f32>]) -> ParameterSet {
        let mut entries = Vec::with_capacity(params.len() * 2);
        for (p, (m, v)) in params.iter().zip(self.m.iter().zip(self.v.iter())) {
            let shape = p.value.shape().to_vec();
            entries.push(ParamEntry::new(
                format!("{}.m", p.name),
                shape.clone(),
                m.iter().copied().collect(),
            ));
            entries.push(ParamEntry::new(
                format!("{}.v", p.name),
                shape,
                v.iter().copied().collect(),
            ));
        }
        ParameterSet::new(entries).expect("moment entries are unique and finite")
    }

    pub fn import_state(
        &mut self,
        params: &[ParamTensor<f32>],
        set: &ParameterSet,
        step: u64,
    ) -> Result<()> {
        if set.len() != params.len() * 2 {
            return Err(CoreError::ShapeMismatch(format!(
                "optimizer state holds {} entries, model needs {}",
                set.len(),
                params.len() * 2
            )));
        }
        for (i, p) in params.iter().enumerate() {
            for (j, suffix) in ["m", "v"].iter().enumerate() {
                let entry = &set.entries()[2 * i + j];
                let expect = format!("{}.{}", p.name, suffix);
                if entry.name != expect {
                    return Err(CoreError::ParamMismatch {
                        name: entry.name.clone(),
                        reason: format!("expected `{expect}`"),
                    });
                }
                if entry.shape != p.value.shape() {
                    return Err(CoreError::ParamMismatch {
                        name: entry.name.clone(),
                        reason: format!("shape {:?} vs {:?}", entry.shape, p.value.shape()),
                    });
                }
                let target = if j == 0 { &mut self.m[i] } else { &mut self.v[i] };
                for (dst, &src) in target.iter_mut().zip(entry.values.iter()) {
                    *dst = src;
                }
            }
        }
        self.t = step;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;

    #[test]
    fn zero_lr_leaves_parameters_unchanged() {
        let mut params = vec![ParamTensor::new(
            "w",
            ArrayD::from_shape_vec(ndarray::IxDyn(&[3]), vec![1.0f32, -2.0, 0.5]).unwrap(),
        )];
        let before = params[0].value.clone();
        let grads = vec![ArrayD::from_shape_vec(ndarray::IxDyn(&[3]), vec![0.3f32, 9.0, -4.0]).unwrap()];
        let mut opt = Adam::new(&params, 0.5, 0.999);
        opt.step(&mut params, &grads, 0.0);
        assert_eq!(params[0].value, before);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_in_gradient_direction() {
        // with bias correction, |delta| of step 1 is ~lr for any gradient scale
        let mut params = vec![ParamTensor::new(
            "w",
            ArrayD::from_shape_vec(ndarray::IxDyn(&[2]), vec![0.0f32, 0.0]).unwrap(),
        )];
        let grads =
            vec![ArrayD::from_shape_vec(ndarray::IxDyn(&[2]), vec![5.0f32, -0.01]).unwrap()];
        let mut opt = Adam::new(&params, 0.5, 0.999);
        opt.step(&mut params, &grads, 0.1);
        let w = &params[0].value;
        assert!((w[0] + 0.1).abs() < 1e-3, "w0 = {}", w[0]);
        assert!((w[1] - 0.1).abs() < 1e-3, "w1 = {}", w[1]);
    }

    #[test]
    fn state_roundtrip() {
        let mut params = vec![ParamTensor::new(
            "w",
            ArrayD::from_shape_vec(ndarray::IxDyn(&[2]), vec![1.0f32, 2.0]).unwrap(),
        )];
        let grads = vec![ArrayD::from_shape_vec(ndarray::IxDyn(&[2]), vec![0.5f32, -1.5]).unwrap()];
        let mut opt = Adam::new(&params, 0.5, 0.999);
        opt.step(&mut params, &grads, 0.01);
        let state = opt.export_state(&params);
        let mut opt2 = Adam::new(&params, 0.5, 0.999);
        opt2.import_state(&params, &state, opt.step_count()).unwrap();
        let mut a = params.clone();
        let mut b = params.clone();
        opt.step(&mut a, &grads, 0.01);
        opt2.step(&mut b, &grads, 0.01);
        assert_eq!(a[0].value, b[0].value);
    }
}
