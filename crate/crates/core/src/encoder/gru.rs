//! Single-layer unidirectional GRU with standard update/reset gating.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::Rng;

/// Input-to-hidden weights are stored input-major (C x H) so a step is
/// x.W + h.U plus the two bias vectors, one triple per gate.
#[derive(Debug, Clone)]
pub struct GruParams<S> {
    pub w_reset: Tensor<S>,
    pub w_update: Tensor<S>,
    pub w_new: Tensor<S>,
    pub u_reset: Tensor<S>,
    pub u_update: Tensor<S>,
    pub u_new: Tensor<S>,
    pub b_in_reset: Tensor<S>,
    pub b_in_update: Tensor<S>,
    pub b_in_new: Tensor<S>,
    pub b_hid_reset: Tensor<S>,
    pub b_hid_update: Tensor<S>,
    pub b_hid_new: Tensor<S>,
}

pub struct GruVars {
    pub w_reset: Var,
    pub w_update: Var,
    pub w_new: Var,
    pub u_reset: Var,
    pub u_update: Var,
    pub u_new: Var,
    pub b_in_reset: Var,
    pub b_in_update: Var,
    pub b_in_new: Var,
    pub b_hid_reset: Var,
    pub b_hid_update: Var,
    pub b_hid_new: Var,
}

impl<S: Scalar> GruParams<S> {
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let wi = 1.0 / (input as f64).sqrt();
        let wh = 1.0 / (hidden as f64).sqrt();
        Self {
            w_reset: Tensor::randn(&[input, hidden], wi, rng),
            w_update: Tensor::randn(&[input, hidden], wi, rng),
            w_new: Tensor::randn(&[input, hidden], wi, rng),
            u_reset: Tensor::randn(&[hidden, hidden], wh, rng),
            u_update: Tensor::randn(&[hidden, hidden], wh, rng),
            u_new: Tensor::randn(&[hidden, hidden], wh, rng),
            b_in_reset: Tensor::zeros(&[hidden]),
            b_in_update: Tensor::zeros(&[hidden]),
            b_in_new: Tensor::zeros(&[hidden]),
            b_hid_reset: Tensor::zeros(&[hidden]),
            b_hid_update: Tensor::zeros(&[hidden]),
            b_hid_new: Tensor::zeros(&[hidden]),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_reset.shape()[1]
    }

    pub fn bind(&self, g: &mut Graph<S>, prefix: &str) -> Result<GruVars> {
        Ok(GruVars {
            w_reset: g.param(format!("{prefix}.w_reset"), self.w_reset.clone())?,
            w_update: g.param(format!("{prefix}.w_update"), self.w_update.clone())?,
            w_new: g.param(format!("{prefix}.w_new"), self.w_new.clone())?,
            u_reset: g.param(format!("{prefix}.u_reset"), self.u_reset.clone())?,
            u_update: g.param(format!("{prefix}.u_update"), self.u_update.clone())?,
            u_new: g.param(format!("{prefix}.u_new"), self.u_new.clone())?,
            b_in_reset: g.param(format!("{prefix}.b_in_reset"), self.b_in_reset.clone())?,
            b_in_update: g.param(format!("{prefix}.b_in_update"), self.b_in_update.clone())?,
            b_in_new: g.param(format!("{prefix}.b_in_new"), self.b_in_new.clone())?,
            b_hid_reset: g.param(format!("{prefix}.b_hid_reset"), self.b_hid_reset.clone())?,
            b_hid_update: g.param(format!("{prefix}.b_hid_update"), self.b_hid_update.clone())?,
            b_hid_new: g.param(format!("{prefix}.b_hid_new"), self.b_hid_new.clone())?,
        })
    }

    pub fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<S>)>) {
        out.push((format!("{prefix}.w_reset"), &self.w_reset));
        out.push((format!("{prefix}.w_update"), &self.w_update));
        out.push((format!("{prefix}.w_new"), &self.w_new));
        out.push((format!("{prefix}.u_reset"), &self.u_reset));
        out.push((format!("{prefix}.u_update"), &self.u_update));
        out.push((format!("{prefix}.u_new"), &self.u_new));
        out.push((format!("{prefix}.b_in_reset"), &self.b_in_reset));
        out.push((format!("{prefix}.b_in_update"), &self.b_in_update));
        out.push((format!("{prefix}.b_in_new"), &self.b_in_new));
        out.push((format!("{prefix}.b_hid_reset"), &self.b_hid_reset));
        out.push((format!("{prefix}.b_hid_update"), &self.b_hid_update));
        out.push((format!("{prefix}.b_hid_new"), &self.b_hid_new));
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<S>)>) {
        out.push((format!("{prefix}.w_reset"), &mut self.w_reset));
        out.push((format!("{prefix}.w_update"), &mut self.w_update));
        out.push((format!("{prefix}.w_new"), &mut self.w_new));
        out.push((format!("{prefix}.u_reset"), &mut self.u_reset));
        out.push((format!("{prefix}.u_update"), &mut self.u_update));
        out.push((format!("{prefix}.u_new"), &mut self.u_new));
        out.push((format!("{prefix}.b_in_reset"), &mut self.b_in_reset));
        out.push((format!("{prefix}.b_in_update"), &mut self.b_in_update));
        out.push((format!("{prefix}.b_in_new"), &mut self.b_in_new));
        out.push((format!("{prefix}.b_hid_reset"), &mut self.b_hid_reset));
        out.push((format!("{prefix}.b_hid_update"), &mut self.b_hid_update));
        out.push((format!("{prefix}.b_hid_new"), &mut self.b_hid_new));
    }

    /// Run the recurrence over a sequence of input vectors, returning the
    /// last hidden state.
    ///
    ///   r = sigmoid(x.Wr + bir + h.Ur + bhr)
    ///   z = sigmoid(x.Wz + biz + h.Uz + bhz)
    ///   n = tanh(x.Wn + bin + r * (h.Un + bhn))
    ///   h' = (1 - z) * n + z * h
    pub fn forward(&self, g: &mut Graph<S>, vars: &GruVars, seq: &[Var]) -> Result<Var> {
        if seq.is_empty() {
            return Err(Error::Shape {
                op: "gru",
                msg: "empty input sequence".into(),
            });
        }
        let hidden = self.hidden_size();
        let mut h = g.constant(Tensor::zeros(&[hidden]))?;
        let one = g.constant(Tensor::ones(&[hidden]))?;
        for &x in seq {
            let gate = |g: &mut Graph<S>, w: Var, bi: Var, u: Var, bh: Var| -> Result<Var> {
                let xw = g.linear(x, w, Some(bi))?;
                let hu = g.linear(h, u, Some(bh))?;
                g.add(xw, hu)
            };
            let r = gate(
                g,
                vars.w_reset,
                vars.b_in_reset,
                vars.u_reset,
                vars.b_hid_reset,
            )?;
            let r = g.sigmoid(r)?;
            let z = gate(
                g,
                vars.w_update,
                vars.b_in_update,
                vars.u_update,
                vars.b_hid_update,
            )?;
            let z = g.sigmoid(z)?;
            let hn = g.linear(h, vars.u_new, Some(vars.b_hid_new))?;
            let rh = g.mul(r, hn)?;
            let xn = g.linear(x, vars.w_new, Some(vars.b_in_new))?;
            let n = g.add(xn, rh)?;
            let n = g.tanh(n)?;
            let zi = g.sub(one, z)?;
            let a = g.mul(zi, n)?;
            let b = g.mul(z, h)?;
            h = g.add(a, b)?;
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent scalar reimplementation of the recurrence.
    fn scalar_gru(p: &GruParams<f64>, seq: &[Vec<f64>]) -> Vec<f64> {
        let hdim = p.hidden_size();
        let idim = p.w_reset.shape()[0];
        let matvec = |w: &Tensor<f64>, x: &[f64], rows: usize, cols: usize| -> Vec<f64> {
            let mut y = vec![0.0; cols];
            for i in 0..rows {
                for j in 0..cols {
                    y[j] += x[i] * w.data()[i * cols + j];
                }
            }
            y
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h = vec![0.0; hdim];
        for x in seq {
            let xr = matvec(&p.w_reset, x, idim, hdim);
            let hr = matvec(&p.u_reset, &h, hdim, hdim);
            let xz = matvec(&p.w_update, x, idim, hdim);
            let hz = matvec(&p.u_update, &h, hdim, hdim);
            let xn = matvec(&p.w_new, x, idim, hdim);
            let hn = matvec(&p.u_new, &h, hdim, hdim);
            let mut h2 = vec![0.0; hdim];
            for j in 0..hdim {
                let r = sig(xr[j] + p.b_in_reset.data()[j] + hr[j] + p.b_hid_reset.data()[j]);
                let z = sig(xz[j] + p.b_in_update.data()[j] + hz[j] + p.b_hid_update.data()[j]);
                let n = (xn[j] + p.b_in_new.data()[j] + r * (hn[j] + p.b_hid_new.data()[j])).tanh();
                h2[j] = (1.0 - z) * n + z * h[j];
            }
            h = h2;
        }
        h
    }

    #[test]
    fn matches_scalar_step_oracle_on_length_three_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = GruParams::<f64>::init(3, 4, &mut rng);
        let seq_vals: Vec<Vec<f64>> = (0..3)
            .map(|_| Tensor::<f64>::randn(&[3], 1.0, &mut rng).into_data())
            .collect();

        let mut g = Graph::new();
        let vars = p.bind(&mut g, "gru").unwrap();
        let seq: Vec<_> = seq_vals
            .iter()
            .map(|v| g.constant(Tensor::from_vec(v.clone())).unwrap())
            .collect();
        let h = p.forward(&mut g, &vars, &seq).unwrap();
        let got = g.value(h).data().to_vec();
        let want = scalar_gru(&p, &seq_vals);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_input_with_zero_biases_keeps_hidden_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let p = GruParams::<f64>::init(2, 3, &mut rng); // biases are zero-initialized
        let mut g = Graph::new();
        let vars = p.bind(&mut g, "gru").unwrap();
        let zeros: Vec<_> = (0..4)
            .map(|_| g.constant(Tensor::zeros(&[2])).unwrap())
            .collect();
        let h = p.forward(&mut g, &vars, &zeros).unwrap();
        assert!(g.value(h).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = GruParams::<f64>::init(2, 3, &mut rng);
        let mut g = Graph::new();
        let vars = p.bind(&mut g, "gru").unwrap();
        assert!(p.forward(&mut g, &vars, &[]).is_err());
    }
}
