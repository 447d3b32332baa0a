//! Feature-map refinement modules: parameter-free energy attention (SimAM),
//! squeeze-and-excitation over frequency, and CBAM-style channel +
//! frequency-temporal attention. Every module maps a C x F x T map to a
//! refined map of identical shape.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::Rng;

/// A C x F x T node (channels, spectral bins, temporal length).
#[derive(Debug, Clone, Copy)]
pub struct FeatureMap {
    pub var: Var,
    pub channels: usize,
    pub freq: usize,
    pub time: usize,
}

impl FeatureMap {
    pub fn new<S: Scalar>(g: &Graph<S>, var: Var) -> Result<Self> {
        let sh = g.shape(var);
        if sh.len() != 3 {
            return Err(Error::Shape {
                op: "feature_map",
                msg: format!("expected C x F x T, got {:?}", sh),
            });
        }
        Ok(Self {
            var,
            channels: sh[0],
            freq: sh[1],
            time: sh[2],
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.freq, self.time]
    }
}

/// Per-neuron minimal energies, same C x F x T layout as the input map.
#[derive(Debug, Clone, Copy)]
pub struct EnergyMap {
    pub var: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct SimAmConfig<S> {
    /// Regularizer of the per-neuron energy; must be positive.
    pub lambda_reg: S,
}

impl<S: Scalar> SimAmConfig<S> {
    pub fn new(lambda_reg: S) -> Result<Self> {
        if lambda_reg <= S::zero() {
            return Err(Error::Config(format!(
                "energy regularizer must be positive, got {}",
                lambda_reg
            )));
        }
        Ok(Self { lambda_reg })
    }
}

impl<S: Scalar> Default for SimAmConfig<S> {
    fn default() -> Self {
        Self {
            lambda_reg: S::from_float(1e-4),
        }
    }
}

/// Minimal energy per neuron: with u and s2 the per-channel mean and
/// population variance over the channel's M = F*T neurons,
///
///   e(t) = 4 (s2 + lambda) / ((t - u)^2 + 2 s2 + 2 lambda)
///
/// Lower energy marks a more distinctive neuron.
pub fn simam_energy<S: Scalar>(
    g: &mut Graph<S>,
    x: &FeatureMap,
    cfg: &SimAmConfig<S>,
) -> Result<EnergyMap> {
    if cfg.lambda_reg <= S::zero() {
        return Err(Error::Config("energy regularizer must be positive".into()));
    }
    if x.freq * x.time == 1 {
        return Err(Error::Shape {
            op: "simam_energy",
            msg: "channel has a single neuron; variance is degenerate".into(),
        });
    }
    let lambda = cfg.lambda_reg;
    let u = g.mean_axes(x.var, &[1, 2], true)?; // C x 1 x 1
    let d = g.sub(x.var, u)?;
    let d2 = g.square(d)?;
    let var = g.mean_axes(d2, &[1, 2], true)?; // C x 1 x 1
    let num = g.add_scalar(var, lambda)?;
    let num = g.scale(num, S::from_float(4.0))?;
    let two_var = g.scale(var, S::from_float(2.0))?;
    let den_base = g.add_scalar(two_var, S::from_float(2.0) * lambda)?;
    let den = g.add(d2, den_base)?;
    let e = g.div(num, den)?;
    if g.value(e).data().iter().any(|v| *v <= S::zero()) {
        return Err(Error::Graph("non-positive energy value".into()));
    }
    Ok(EnergyMap { var: e })
}

/// Refinement: gate each neuron by sigmoid(1/e), a gain in (0, 1) that grows
/// as its energy shrinks. Parameter-free and shape-preserving.
pub fn simam_refine<S: Scalar>(
    g: &mut Graph<S>,
    x: &FeatureMap,
    cfg: &SimAmConfig<S>,
) -> Result<FeatureMap> {
    let e = simam_energy(g, x, cfg)?;
    let one = g.constant(Tensor::scalar(S::one()))?;
    let inv = g.div(one, e.var)?;
    let gain = g.sigmoid(inv)?;
    let out = g.mul(gain, x.var)?;
    FeatureMap::new(g, out)
}

#[derive(Debug, Clone, Copy)]
pub struct SeConfig {
    /// Bottleneck reduction of the excitation MLP; must divide F.
    pub reduction: usize,
}

impl Default for SeConfig {
    fn default() -> Self {
        Self { reduction: 4 }
    }
}

/// Learnable squeeze-and-excitation parameters for a fixed F.
#[derive(Debug, Clone)]
pub struct SeParams<S> {
    pub w1: Tensor<S>, // F x F/r
    pub b1: Tensor<S>, // F/r
    pub w2: Tensor<S>, // F/r x F
    pub b2: Tensor<S>, // F
}

pub struct SeVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl<S: Scalar> SeParams<S> {
    pub fn init(freq: usize, cfg: &SeConfig, rng: &mut impl Rng) -> Result<Self> {
        if cfg.reduction == 0 || !freq.is_multiple_of(cfg.reduction) {
            return Err(Error::Config(format!(
                "squeeze-excite reduction {} must divide the frequency dim {}",
                cfg.reduction, freq
            )));
        }
        let hidden = freq / cfg.reduction;
        Ok(Self {
            w1: Tensor::randn(&[freq, hidden], 1.0 / (freq as f64).sqrt(), rng),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::randn(&[hidden, freq], 1.0 / (hidden as f64).sqrt(), rng),
            b2: Tensor::zeros(&[freq]),
        })
    }

    pub fn bind(&self, g: &mut Graph<S>, prefix: &str) -> Result<SeVars> {
        Ok(SeVars {
            w1: g.param(format!("{prefix}.w1"), self.w1.clone())?,
            b1: g.param(format!("{prefix}.b1"), self.b1.clone())?,
            w2: g.param(format!("{prefix}.w2"), self.w2.clone())?,
            b2: g.param(format!("{prefix}.b2"), self.b2.clone())?,
        })
    }

    pub fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<S>)>) {
        out.push((format!("{prefix}.w1"), &self.w1));
        out.push((format!("{prefix}.b1"), &self.b1));
        out.push((format!("{prefix}.w2"), &self.w2));
        out.push((format!("{prefix}.b2"), &self.b2));
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<S>)>) {
        out.push((format!("{prefix}.w1"), &mut self.w1));
        out.push((format!("{prefix}.b1"), &mut self.b1));
        out.push((format!("{prefix}.w2"), &mut self.w2));
        out.push((format!("{prefix}.b2"), &mut self.b2));
    }
}

/// Squeeze (mean over channels and time per frequency bin), excite through a
/// two-layer bottleneck, and gate the map with the resulting 1 x F x 1
/// attention vector.
pub fn se_refine<S: Scalar>(g: &mut Graph<S>, x: &FeatureMap, p: &SeVars) -> Result<FeatureMap> {
    let fdim = g.shape(p.w1)[0];
    if x.freq != fdim {
        return Err(Error::Shape {
            op: "se_refine",
            msg: format!("map has F={}, excitation expects {}", x.freq, fdim),
        });
    }
    let squeezed = g.mean_axes(x.var, &[0, 2], false)?; // F
    let z = g.linear(squeezed, p.w1, Some(p.b1))?;
    let z = g.selu(z)?;
    let z = g.linear(z, p.w2, Some(p.b2))?;
    let gate = g.sigmoid(z)?;
    let gate = g.reshape(gate, &[1, x.freq, 1])?;
    let out = g.mul(x.var, gate)?;
    FeatureMap::new(g, out)
}

#[derive(Debug, Clone, Copy)]
pub struct CbamConfig {
    /// Bottleneck reduction of the channel MLP; must divide C.
    pub reduction: usize,
    /// Kernel size of the frequency-temporal convolution (odd).
    pub kernel: usize,
}

impl Default for CbamConfig {
    fn default() -> Self {
        Self {
            reduction: 4,
            kernel: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CbamParams<S> {
    pub w1: Tensor<S>,     // C x C/r (shared bottleneck)
    pub b1: Tensor<S>,     // C/r
    pub w2: Tensor<S>,     // C/r x C
    pub b2: Tensor<S>,     // C
    pub conv_w: Tensor<S>, // 1 x 2 x k x k
    pub conv_b: Tensor<S>, // 1
}

pub struct CbamVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub conv_w: Var,
    pub conv_b: Var,
}

impl<S: Scalar> CbamParams<S> {
    pub fn init(channels: usize, cfg: &CbamConfig, rng: &mut impl Rng) -> Result<Self> {
        if cfg.reduction == 0 || !channels.is_multiple_of(cfg.reduction) {
            return Err(Error::Config(format!(
                "channel-attention reduction {} must divide the channel count {}",
                cfg.reduction, channels
            )));
        }
        if cfg.kernel == 0 || cfg.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "frequency-temporal kernel must be odd, got {}",
                cfg.kernel
            )));
        }
        let hidden = channels / cfg.reduction;
        let fan = (2 * cfg.kernel * cfg.kernel) as f64;
        Ok(Self {
            w1: Tensor::randn(&[channels, hidden], 1.0 / (channels as f64).sqrt(), rng),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::randn(&[hidden, channels], 1.0 / (hidden as f64).sqrt(), rng),
            b2: Tensor::zeros(&[channels]),
            conv_w: Tensor::randn(&[1, 2, cfg.kernel, cfg.kernel], 1.0 / fan.sqrt(), rng),
            conv_b: Tensor::zeros(&[1]),
        })
    }

    pub fn bind(&self, g: &mut Graph<S>, prefix: &str) -> Result<CbamVars> {
        Ok(CbamVars {
            w1: g.param(format!("{prefix}.w1"), self.w1.clone())?,
            b1: g.param(format!("{prefix}.b1"), self.b1.clone())?,
            w2: g.param(format!("{prefix}.w2"), self.w2.clone())?,
            b2: g.param(format!("{prefix}.b2"), self.b2.clone())?,
            conv_w: g.param(format!("{prefix}.conv_w"), self.conv_w.clone())?,
            conv_b: g.param(format!("{prefix}.conv_b"), self.conv_b.clone())?,
        })
    }

    pub fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<S>)>) {
        out.push((format!("{prefix}.w1"), &self.w1));
        out.push((format!("{prefix}.b1"), &self.b1));
        out.push((format!("{prefix}.w2"), &self.w2));
        out.push((format!("{prefix}.b2"), &self.b2));
        out.push((format!("{prefix}.conv_w"), &self.conv_w));
        out.push((format!("{prefix}.conv_b"), &self.conv_b));
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<S>)>) {
        out.push((format!("{prefix}.w1"), &mut self.w1));
        out.push((format!("{prefix}.b1"), &mut self.b1));
        out.push((format!("{prefix}.w2"), &mut self.w2));
        out.push((format!("{prefix}.b2"), &mut self.b2));
        out.push((format!("{prefix}.conv_w"), &mut self.conv_w));
        out.push((format!("{prefix}.conv_b"), &mut self.conv_b));
    }
}

/// Two sequential gates: a channel attention vector from pooled C-descriptors
/// through a shared bottleneck, then a frequency-temporal attention map from
/// a conv over the concatenated channel-mean and channel-max maps.
pub fn cbam_refine<S: Scalar>(
    g: &mut Graph<S>,
    x: &FeatureMap,
    p: &CbamVars,
) -> Result<FeatureMap> {
    let cdim = g.shape(p.w1)[0];
    if x.channels != cdim {
        return Err(Error::Shape {
            op: "cbam_refine",
            msg: format!("map has C={}, bottleneck expects {}", x.channels, cdim),
        });
    }
    // stage 1: channel gate
    let avg_c = g.mean_axes(x.var, &[1, 2], false)?; // C
    let max_c = g.max_axes(x.var, &[1, 2], false)?; // C
    let mlp = |g: &mut Graph<S>, d: Var| -> Result<Var> {
        let z = g.linear(d, p.w1, Some(p.b1))?;
        let z = g.selu(z)?;
        g.linear(z, p.w2, Some(p.b2))
    };
    let za = mlp(g, avg_c)?;
    let zm = mlp(g, max_c)?;
    let zsum = g.add(za, zm)?;
    let mc = g.sigmoid(zsum)?;
    let mc = g.reshape(mc, &[x.channels, 1, 1])?;
    let x1 = g.mul(x.var, mc)?;

    // stage 2: frequency-temporal gate
    let mean_map = g.mean_axes(x1, &[0], true)?; // 1 x F x T
    let max_map = g.max_axes(x1, &[0], true)?; // 1 x F x T
    let cat = g.concat(0, &[mean_map, max_map])?; // 2 x F x T
    let k = g.shape(p.conv_w)[2];
    let pad = (k - 1) / 2;
    let conv = g.conv2d(cat, p.conv_w, (1, 1), (pad, pad))?; // 1 x F x T
    let bias = g.reshape(p.conv_b, &[1, 1, 1])?;
    let conv = g.add(conv, bias)?;
    let mft = g.sigmoid(conv)?;
    let out = g.mul(x1, mft)?;
    FeatureMap::new(g, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fmap(g: &mut Graph<f64>, t: Tensor<f64>) -> FeatureMap {
        let v = g.leaf(t).unwrap();
        FeatureMap::new(g, v).unwrap()
    }

    #[test]
    fn uniform_channel_energy_is_exactly_two() {
        for lambda in [1e-4, 1e-2, 1.0] {
            let mut g = Graph::new();
            let x = fmap(&mut g, Tensor::full(&[2, 3, 4], 0.7));
            let cfg = SimAmConfig::new(lambda).unwrap();
            let e = simam_energy(&mut g, &x, &cfg).unwrap();
            for &v in g.value(e.var).data() {
                assert_eq!(v, 2.0, "lambda {lambda}");
            }
        }
    }

    #[test]
    fn uniform_channel_gain_is_sigmoid_half() {
        let mut g = Graph::new();
        let x = fmap(&mut g, Tensor::full(&[1, 2, 2], 3.0));
        let y = simam_refine(&mut g, &x, &SimAmConfig::default()).unwrap();
        let expected = 3.0 / (1.0 + (-0.5f64).exp());
        for &v in g.value(y.var).data() {
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn outlier_neuron_energies_match_hand_evaluation() {
        // channel [0,0,0,4] as 1x2x2: u = 1, s2 = 3
        let mut g = Graph::new();
        let x = fmap(
            &mut g,
            Tensor::new(vec![1, 2, 2], vec![0.0, 0.0, 0.0, 4.0]).unwrap(),
        );
        let cfg = SimAmConfig::new(1e-4).unwrap();
        let e = simam_energy(&mut g, &x, &cfg).unwrap();
        let vals = g.value(e.var).data().to_vec();
        let e_outlier = 4.0 * (3.0 + 1e-4) / (9.0 + 6.0 + 2e-4);
        let e_zero = 4.0 * (3.0 + 1e-4) / (1.0 + 6.0 + 2e-4);
        assert!((vals[3] - e_outlier).abs() < 1e-12);
        for &v in &vals[..3] {
            assert!((v - e_zero).abs() < 1e-12);
        }
        assert!((e_outlier - 0.8000).abs() < 1e-4);
        assert!((e_zero - 1.7143).abs() < 1e-4);

        // larger deviation -> lower energy -> larger gain
        let y = simam_refine(&mut g, &x, &cfg).unwrap();
        let w_outlier = 1.0 / (1.0 + (-1.0 / e_outlier).exp());
        let w_zero = 1.0 / (1.0 + (-1.0 / e_zero).exp());
        assert!(w_outlier > w_zero);
        assert!((w_outlier - 0.7773).abs() < 1e-4);
        assert!((w_zero - 0.6418).abs() < 1e-4);
        assert!((g.value(y.var).data()[3] - w_outlier * 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_input_refines_to_zero() {
        let mut g = Graph::new();
        let x = fmap(&mut g, Tensor::zeros(&[2, 2, 3]));
        let y = simam_refine(&mut g, &x, &SimAmConfig::default()).unwrap();
        assert!(g.value(y.var).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_neuron_channel_is_rejected() {
        let mut g = Graph::new();
        let x = fmap(&mut g, Tensor::full(&[3, 1, 1], 1.0));
        assert!(simam_energy(&mut g, &x, &SimAmConfig::default()).is_err());
    }

    #[test]
    fn simam_preserves_shape_and_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = Tensor::randn(&[3, 4, 5], 1.0, &mut rng);
        let mut g = Graph::new();
        let x = fmap(&mut g, t.clone());
        let y = simam_refine(&mut g, &x, &SimAmConfig::default()).unwrap();
        assert_eq!(g.value(y.var).shape(), &[3, 4, 5]);
        for (&a, &b) in t.data().iter().zip(g.value(y.var).data()) {
            assert!(a * b >= 0.0);
            assert!(b.abs() <= a.abs()); // gain in (0,1)
        }
    }

    #[test]
    fn zeroed_se_params_halve_the_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = Tensor::randn(&[4, 8, 6], 1.0, &mut rng);
        let mut g = Graph::new();
        let x = fmap(&mut g, t.clone());
        let p = SeParams {
            w1: Tensor::zeros(&[8, 2]),
            b1: Tensor::zeros(&[2]),
            w2: Tensor::zeros(&[2, 8]),
            b2: Tensor::zeros(&[8]),
        };
        let vars = p.bind(&mut g, "se").unwrap();
        let y = se_refine(&mut g, &x, &vars).unwrap();
        assert_eq!(g.value(y.var).shape(), &[4, 8, 6]);
        for (&a, &b) in t.data().iter().zip(g.value(y.var).data()) {
            assert!((b - 0.5 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn se_reduction_must_divide_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(SeParams::<f64>::init(7, &SeConfig { reduction: 4 }, &mut rng).is_err());
    }

    #[test]
    fn se_commutes_with_time_axis_permutations() {
        // the squeeze averages over T, so permuting the time axis and
        // un-permuting the refined map reproduces the unpermuted output
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (c, f, t) = (3, 4, 5);
        let base = Tensor::<f64>::randn(&[c, f, t], 1.0, &mut rng);
        let p = SeParams::init(f, &SeConfig { reduction: 2 }, &mut rng).unwrap();
        let perm = [3usize, 0, 4, 1, 2];

        let refine = |input: Tensor<f64>| -> Vec<f64> {
            let mut g = Graph::new();
            let x = fmap(&mut g, input);
            let vars = p.bind(&mut g, "se").unwrap();
            let y = se_refine(&mut g, &x, &vars).unwrap();
            g.value(y.var).data().to_vec()
        };
        let direct = refine(base.clone());
        let permuted = Tensor::from_fn(&[c, f, t], |i| {
            let (ci, fi, ti) = (i / (f * t), (i / t) % f, i % t);
            base.data()[(ci * f + fi) * t + perm[ti]]
        });
        let out_perm = refine(permuted);
        for ci in 0..c {
            for fi in 0..f {
                for ti in 0..t {
                    let a = direct[(ci * f + fi) * t + perm[ti]];
                    let b = out_perm[(ci * f + fi) * t + ti];
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gain_grows_strictly_with_deviation_from_the_channel_mean() {
        let mut g = Graph::new();
        // symmetric channel: mean 0, deviations of distinct magnitude
        let vals = vec![-3.0, -1.0, -0.25, 0.25, 1.0, 3.0];
        let x = fmap(&mut g, Tensor::new(vec![1, 2, 3], vals.clone()).unwrap());
        let cfg = SimAmConfig::new(1e-2).unwrap();
        let e = simam_energy(&mut g, &x, &cfg).unwrap();
        let energies = g.value(e.var).data().to_vec();
        let gains: Vec<f64> = energies
            .iter()
            .map(|&ev| 1.0 / (1.0 + (-1.0 / ev).exp()))
            .collect();
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[a].abs().partial_cmp(&vals[b].abs()).unwrap());
        for w in order.windows(2) {
            if vals[w[1]].abs() > vals[w[0]].abs() {
                assert!(
                    gains[w[1]] > gains[w[0]],
                    "gain should rise with |deviation|: {gains:?}"
                );
            }
        }
    }

    #[test]
    fn zeroed_cbam_params_quarter_the_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = Tensor::randn(&[4, 5, 6], 1.0, &mut rng);
        let mut g = Graph::new();
        let x = fmap(&mut g, t.clone());
        let p = CbamParams {
            w1: Tensor::zeros(&[4, 1]),
            b1: Tensor::zeros(&[1]),
            w2: Tensor::zeros(&[1, 4]),
            b2: Tensor::zeros(&[4]),
            conv_w: Tensor::zeros(&[1, 2, 3, 3]),
            conv_b: Tensor::zeros(&[1]),
        };
        let vars = p.bind(&mut g, "cbam").unwrap();
        let y = cbam_refine(&mut g, &x, &vars).unwrap();
        assert_eq!(g.value(y.var).shape(), &[4, 5, 6]);
        for (&a, &b) in t.data().iter().zip(g.value(y.var).data()) {
            assert!((b - 0.25 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn cbam_reduction_must_divide_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(CbamParams::<f64>::init(6, &CbamConfig::default(), &mut rng).is_err());
    }
}
