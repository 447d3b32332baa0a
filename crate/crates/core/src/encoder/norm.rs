//! Channel-wise batch normalization over the F x T extent of a map.
//!
//! Utterances flow through the graph one at a time, so training mode
//! normalizes with the current map's per-channel statistics while running
//! averages accumulate for inference.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub struct BatchNorm<S> {
    pub gamma: Tensor<S>,        // [C]
    pub beta: Tensor<S>,         // [C]
    pub running_mean: Tensor<S>, // [C]
    pub running_var: Tensor<S>,  // [C]
    pub momentum: S,
    pub eps: S,
}

pub struct BatchNormVars {
    pub gamma: Var,
    pub beta: Var,
}

/// Per-channel statistics observed during one training forward, applied to
/// the running buffers after the step.
#[derive(Debug, Clone)]
pub struct BnStat<S> {
    pub name: String,
    pub mean: Vec<S>,
    pub var: Vec<S>,
}

impl<S: Scalar> BatchNorm<S> {
    pub fn init(channels: usize) -> Self {
        Self {
            gamma: Tensor::ones(&[channels]),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::ones(&[channels]),
            momentum: S::from_float(0.1),
            eps: S::from_float(1e-5),
        }
    }

    pub fn bind(&self, g: &mut Graph<S>, prefix: &str) -> Result<BatchNormVars> {
        Ok(BatchNormVars {
            gamma: g.param(format!("{prefix}.gamma"), self.gamma.clone())?,
            beta: g.param(format!("{prefix}.beta"), self.beta.clone())?,
        })
    }

    pub fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<S>)>) {
        out.push((format!("{prefix}.gamma"), &self.gamma));
        out.push((format!("{prefix}.beta"), &self.beta));
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<S>)>) {
        out.push((format!("{prefix}.gamma"), &mut self.gamma));
        out.push((format!("{prefix}.beta"), &mut self.beta));
    }

    pub fn visit_buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<S>)>) {
        out.push((format!("{prefix}.running_mean"), &self.running_mean));
        out.push((format!("{prefix}.running_var"), &self.running_var));
    }

    pub fn visit_buffers_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Tensor<S>)>,
    ) {
        out.push((format!("{prefix}.running_mean"), &mut self.running_mean));
        out.push((format!("{prefix}.running_var"), &mut self.running_var));
    }

    /// Normalize a C x F x T node. In training the statistics come from the
    /// node itself (differentiably) and are reported through `stats`; in eval
    /// the running buffers are used as constants.
    pub fn forward(
        &self,
        g: &mut Graph<S>,
        vars: &BatchNormVars,
        x: Var,
        phase: Phase,
        name: &str,
        stats: Option<&mut Vec<BnStat<S>>>,
    ) -> Result<Var> {
        let c = g.shape(x)[0];
        let (centered, denom) = match phase {
            Phase::Train => {
                let mu = g.mean_axes(x, &[1, 2], true)?; // C x 1 x 1
                let d = g.sub(x, mu)?;
                let d2 = g.square(d)?;
                let var = g.mean_axes(d2, &[1, 2], true)?;
                if let Some(sink) = stats {
                    sink.push(BnStat {
                        name: name.to_string(),
                        mean: g.value(mu).data().to_vec(),
                        var: g.value(var).data().to_vec(),
                    });
                }
                let ve = g.add_scalar(var, self.eps)?;
                let sd = g.sqrt(ve)?;
                (d, sd)
            }
            Phase::Eval => {
                let mu = g.constant(self.running_mean.reshaped(vec![c, 1, 1])?)?;
                let var = g.constant(self.running_var.reshaped(vec![c, 1, 1])?)?;
                let d = g.sub(x, mu)?;
                let ve = g.add_scalar(var, self.eps)?;
                let sd = g.sqrt(ve)?;
                (d, sd)
            }
        };
        let normed = g.div(centered, denom)?;
        let gamma = g.reshape(vars.gamma, &[c, 1, 1])?;
        let beta = g.reshape(vars.beta, &[c, 1, 1])?;
        let scaled = g.mul(normed, gamma)?;
        g.add(scaled, beta)
    }

    /// Exponential running-average update from one observed statistic.
    pub fn update_running(&mut self, mean: &[S], var: &[S]) {
        let m = self.momentum;
        let keep = S::one() - m;
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(mean) {
            *r = keep * *r + m * b;
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(var) {
            *r = keep * *r + m * b;
        }
    }
}
