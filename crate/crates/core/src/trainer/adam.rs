//! Adam with per-parameter state keyed by name, and the cosine-annealed
//! learning-rate schedule.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use std::collections::BTreeMap;

pub struct Adam<S> {
    beta1: S,
    beta2: S,
    eps: S,
    step: u64,
    moments: BTreeMap<String, (Vec<S>, Vec<S>)>,
}

impl<S: Scalar> Default for Adam<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Adam<S> {
    pub fn new() -> Self {
        Self {
            beta1: S::from_float(0.9),
            beta2: S::from_float(0.999),
            eps: S::from_float(1e-8),
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    /// One update over named parameters; parameters without a gradient entry
    /// are left untouched.
    pub fn step(
        &mut self,
        params: &mut [(String, &mut Tensor<S>)],
        grads: &BTreeMap<String, Tensor<S>>,
        lr: f64,
    ) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = S::one() - self.beta1.powi(t);
        let bc2 = S::one() - self.beta2.powi(t);
        let lr = S::from_float(lr);
        for (name, p) in params.iter_mut() {
            let Some(grad) = grads.get(name) else {
                continue;
            };
            if grad.shape() != p.shape() {
                return Err(Error::Graph(format!(
                    "gradient shape {:?} does not match parameter '{}' {:?}",
                    grad.shape(),
                    name,
                    p.shape()
                )));
            }
            let n = p.numel();
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (vec![S::zero(); n], vec![S::zero(); n]));
            for ((pv, gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mv = self.beta1 * *mv + (S::one() - self.beta1) * *gv;
                *vv = self.beta2 * *vv + (S::one() - self.beta2) * *gv * *gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            if !p.all_finite() {
                return Err(Error::NonFinite { op: "adam update" });
            }
        }
        Ok(())
    }
}

/// Cosine annealing from `lr0` at epoch 0 down to `floor` at the final
/// epoch, non-increasing in between; a single-epoch schedule stays at `lr0`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr0: f64, floor: f64) -> f64 {
    if total_epochs <= 1 {
        return lr0;
    }
    let t = epoch as f64 / (total_epochs - 1) as f64;
    floor + 0.5 * (lr0 - floor) * (1.0 + (std::f64::consts::PI * t).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints_and_monotonicity() {
        let e = 30;
        assert_eq!(cosine_lr(0, e, 1e-3, 0.0), 1e-3);
        assert!(cosine_lr(e - 1, e, 1e-3, 0.0).abs() < 1e-18);
        let mut prev = f64::INFINITY;
        for ep in 0..e {
            let lr = cosine_lr(ep, e, 1e-3, 1e-5);
            assert!(lr <= prev);
            prev = lr;
        }
        assert_eq!(cosine_lr(0, 1, 5e-4, 0.0), 5e-4);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut p = Tensor::from_vec(vec![3.0f64, -2.0]);
        let mut adam = Adam::new();
        for _ in 0..500 {
            let grad = Tensor::from_vec(vec![2.0 * p.data()[0], 2.0 * p.data()[1]]);
            let mut grads = BTreeMap::new();
            grads.insert("p".to_string(), grad);
            let mut params = [("p".to_string(), &mut p)];
            adam.step(&mut params, &grads, 0.05).unwrap();
        }
        assert!(p.data()[0].abs() < 1e-2);
        assert!(p.data()[1].abs() < 1e-2);
    }
}
