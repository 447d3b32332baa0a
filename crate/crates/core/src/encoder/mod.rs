//! Raw-waveform encoder: sinc filterbank front-end, stacked pre-activation
//! residual blocks with optional attention refinement, then frequency pooling,
//! a GRU over time, and a final linear projection to the embedding.

pub mod gru;
pub mod norm;
pub mod sinc;

pub use norm::{BatchNorm, BatchNormVars, BnStat, Phase};

use crate::attention::{
    cbam_refine, se_refine, simam_refine, CbamConfig, CbamParams, CbamVars, FeatureMap, SeConfig,
    SeParams, SeVars, SimAmConfig,
};
use crate::error::{Error, Result};
use crate::graph::{Graph, PoolTarget, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use gru::{GruParams, GruVars};
use rand::Rng;
use sinc::{SincFilterbank, SincVars};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    None,
    Se,
    Cbam,
    SimAm,
}

impl AttentionKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "se" => Ok(Self::Se),
            "cbam" => Ok(Self::Cbam),
            "simam" => Ok(Self::SimAm),
            other => Err(Error::Config(format!(
                "unknown attention kind '{other}' (expected none|se|cbam|simam)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Se => "se",
            Self::Cbam => "cbam",
            Self::SimAm => "simam",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncoderConfig {
    pub sample_rate: usize,
    pub segment_len: usize,
    pub sinc_filters: usize,
    pub sinc_kernel_len: usize,
    pub num_blocks: usize,
    pub filters_per_block: Vec<usize>,
    /// Max-pool window (= stride) applied at the end of every block.
    pub pool: (usize, usize),
    pub gru_hidden: usize,
    pub embed_dim: usize,
    pub attention: AttentionKind,
    pub se: SeConfig,
    pub cbam: CbamConfig,
    pub simam_lambda: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            segment_len: 64600,
            sinc_filters: 70,
            sinc_kernel_len: 129,
            num_blocks: 6,
            filters_per_block: vec![32, 32, 64, 64, 64, 64],
            pool: (2, 2),
            gru_hidden: 128,
            embed_dim: 128,
            attention: AttentionKind::None,
            se: SeConfig::default(),
            cbam: CbamConfig::default(),
            simam_lambda: 1e-4,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.filters_per_block.len() != self.num_blocks {
            return Err(Error::Config(format!(
                "{} filter counts for {} blocks",
                self.filters_per_block.len(),
                self.num_blocks
            )));
        }
        if self.embed_dim == 0 || self.gru_hidden == 0 {
            return Err(Error::Config(
                "embedding and GRU dims must be positive".into(),
            ));
        }
        if self.pool.0 == 0 || self.pool.1 == 0 {
            return Err(Error::Config("pool window must be positive".into()));
        }
        self.output_shape()?;
        Ok(())
    }

    /// (C, F, T) of the feature map produced from a full segment, checking
    /// that no block collapses the map below the pool window.
    pub fn output_shape(&self) -> Result<(usize, usize, usize)> {
        if self.segment_len < self.sinc_kernel_len {
            return Err(Error::Config(format!(
                "segment {} shorter than sinc kernel {}",
                self.segment_len, self.sinc_kernel_len
            )));
        }
        let mut f = self.sinc_filters;
        let mut t = self.segment_len - self.sinc_kernel_len + 1;
        for (b, _) in self.filters_per_block.iter().enumerate() {
            if f < self.pool.0 || t < self.pool.1 {
                return Err(Error::Config(format!(
                    "feature map {}x{} collapses below the {}x{} pool window at block {}",
                    f, t, self.pool.0, self.pool.1, b
                )));
            }
            f = (f - self.pool.0) / self.pool.0 + 1;
            t = (t - self.pool.1) / self.pool.1 + 1;
        }
        let c = *self
            .filters_per_block
            .last()
            .ok_or_else(|| Error::Config("encoder needs at least one residual block".into()))?;
        Ok((c, f, t))
    }
}

#[derive(Debug, Clone)]
pub enum AttentionParams<S> {
    None,
    SimAm,
    Se(SeParams<S>),
    Cbam(CbamParams<S>),
}

pub enum AttentionVars {
    None,
    SimAm,
    Se(SeVars),
    Cbam(CbamVars),
}

#[derive(Debug, Clone)]
pub struct Conv2dParams<S> {
    pub weight: Tensor<S>, // Co x Ci x kh x kw
    pub bias: Tensor<S>,   // Co
}

pub struct Conv2dVars {
    pub weight: Var,
    pub bias: Var,
}

impl<S: Scalar> Conv2dParams<S> {
    fn init(co: usize, ci: usize, kh: usize, kw: usize, rng: &mut impl Rng) -> Self {
        let fan_in = (ci * kh * kw) as f64;
        Self {
            weight: Tensor::randn(&[co, ci, kh, kw], 1.0 / fan_in.sqrt(), rng),
            bias: Tensor::zeros(&[co]),
        }
    }

    fn bind(&self, g: &mut Graph<S>, prefix: &str) -> Result<Conv2dVars> {
        Ok(Conv2dVars {
            weight: g.param(format!("{prefix}.weight"), self.weight.clone())?,
            bias: g.param(format!("{prefix}.bias"), self.bias.clone())?,
        })
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<S>)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<S>)>) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
        out.push((format!("{prefix}.bias"), &mut self.bias));
    }

    fn forward(
        &self,
        g: &mut Graph<S>,
        vars: &Conv2dVars,
        x: Var,
        pad: (usize, usize),
    ) -> Result<Var> {
        let y = g.conv2d(x, vars.weight, (1, 1), pad)?;
        let co = g.shape(vars.weight)[0];
        let b = g.reshape(vars.bias, &[co, 1, 1])?;
        g.add(y, b)
    }
}

/// One pre-activation residual block:
/// BN -> SeLU -> conv3x3 -> BN -> SeLU -> conv3x3 -> attention ->
/// + shortcut (1x1 projection on channel change) -> max-pool.
#[derive(Debug, Clone)]
pub struct BlockParams<S> {
    pub bn1: BatchNorm<S>,
    pub conv1: Conv2dParams<S>,
    pub bn2: BatchNorm<S>,
    pub conv2: Conv2dParams<S>,
    pub proj: Option<Conv2dParams<S>>,
    pub attn: AttentionParams<S>,
}

pub struct BlockVars {
    pub bn1: BatchNormVars,
    pub conv1: Conv2dVars,
    pub bn2: BatchNormVars,
    pub conv2: Conv2dVars,
    pub proj: Option<Conv2dVars>,
    pub attn: AttentionVars,
}

#[derive(Debug, Clone)]
pub struct EncoderParams<S> {
    pub cfg: EncoderConfig,
    pub sinc: SincFilterbank<S>,
    pub blocks: Vec<BlockParams<S>>,
    pub gru: GruParams<S>,
    pub fc_w: Tensor<S>, // gru_hidden x embed_dim
    pub fc_b: Tensor<S>, // embed_dim
}

pub struct EncoderVars {
    pub sinc: SincVars,
    pub blocks: Vec<BlockVars>,
    pub gru: GruVars,
    pub fc_w: Var,
    pub fc_b: Var,
}

/// A point on the unit-normalizable embedding space.
#[derive(Debug, Clone, Copy)]
pub struct Embedding {
    pub var: Var,
    pub dim: usize,
}

impl<S: Scalar> EncoderParams<S> {
    pub fn init(cfg: EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let sinc =
            SincFilterbank::init_mel(cfg.sinc_filters, cfg.sinc_kernel_len, cfg.sample_rate)?;
        let mut blocks = Vec::with_capacity(cfg.num_blocks);
        let mut c_in = 1usize;
        let mut f_dim = cfg.sinc_filters;
        for &c_out in &cfg.filters_per_block {
            let attn = match cfg.attention {
                AttentionKind::None => AttentionParams::None,
                AttentionKind::SimAm => AttentionParams::SimAm,
                AttentionKind::Se => AttentionParams::Se(SeParams::init(f_dim, &cfg.se, rng)?),
                AttentionKind::Cbam => {
                    AttentionParams::Cbam(CbamParams::init(c_out, &cfg.cbam, rng)?)
                }
            };
            blocks.push(BlockParams {
                bn1: BatchNorm::init(c_in),
                conv1: Conv2dParams::init(c_out, c_in, 3, 3, rng),
                bn2: BatchNorm::init(c_out),
                conv2: Conv2dParams::init(c_out, c_out, 3, 3, rng),
                proj: if c_in != c_out {
                    Some(Conv2dParams::init(c_out, c_in, 1, 1, rng))
                } else {
                    None
                },
                attn,
            });
            c_in = c_out;
            f_dim = (f_dim - cfg.pool.0) / cfg.pool.0 + 1;
        }
        let c_last = c_in;
        let gru = GruParams::init(c_last, cfg.gru_hidden, rng);
        let fc_w = Tensor::randn(
            &[cfg.gru_hidden, cfg.embed_dim],
            1.0 / (cfg.gru_hidden as f64).sqrt(),
            rng,
        );
        let fc_b = Tensor::zeros(&[cfg.embed_dim]);
        Ok(Self {
            cfg,
            sinc,
            blocks,
            gru,
            fc_w,
            fc_b,
        })
    }

    pub fn bind(&self, g: &mut Graph<S>) -> Result<EncoderVars> {
        let sinc = self.sinc.bind(g, "encoder.sinc")?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("encoder.block{i}");
            blocks.push(BlockVars {
                bn1: b.bn1.bind(g, &format!("{p}.bn1"))?,
                conv1: b.conv1.bind(g, &format!("{p}.conv1"))?,
                bn2: b.bn2.bind(g, &format!("{p}.bn2"))?,
                conv2: b.conv2.bind(g, &format!("{p}.conv2"))?,
                proj: match &b.proj {
                    Some(c) => Some(c.bind(g, &format!("{p}.proj"))?),
                    None => None,
                },
                attn: match &b.attn {
                    AttentionParams::None => AttentionVars::None,
                    AttentionParams::SimAm => AttentionVars::SimAm,
                    AttentionParams::Se(sp) => AttentionVars::Se(sp.bind(g, &format!("{p}.se"))?),
                    AttentionParams::Cbam(cp) => {
                        AttentionVars::Cbam(cp.bind(g, &format!("{p}.cbam"))?)
                    }
                },
            });
        }
        let gru = self.gru.bind(g, "encoder.gru")?;
        let fc_w = g.param("encoder.fc.weight", self.fc_w.clone())?;
        let fc_b = g.param("encoder.fc.bias", self.fc_b.clone())?;
        Ok(EncoderVars {
            sinc,
            blocks,
            gru,
            fc_w,
            fc_b,
        })
    }

    pub fn visit<'a>(&'a self, out: &mut Vec<(String, &'a Tensor<S>)>) {
        self.sinc.visit("encoder.sinc", out);
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("encoder.block{i}");
            b.bn1.visit(&format!("{p}.bn1"), out);
            b.conv1.visit(&format!("{p}.conv1"), out);
            b.bn2.visit(&format!("{p}.bn2"), out);
            b.conv2.visit(&format!("{p}.conv2"), out);
            if let Some(c) = &b.proj {
                c.visit(&format!("{p}.proj"), out);
            }
            match &b.attn {
                AttentionParams::Se(sp) => sp.visit(&format!("{p}.se"), out),
                AttentionParams::Cbam(cp) => cp.visit(&format!("{p}.cbam"), out),
                _ => {}
            }
        }
        self.gru.visit("encoder.gru", out);
        out.push(("encoder.fc.weight".into(), &self.fc_w));
        out.push(("encoder.fc.bias".into(), &self.fc_b));
    }

    pub fn visit_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Tensor<S>)>) {
        self.sinc.visit_mut("encoder.sinc", out);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = format!("encoder.block{i}");
            b.bn1.visit_mut(&format!("{p}.bn1"), out);
            b.conv1.visit_mut(&format!("{p}.conv1"), out);
            b.bn2.visit_mut(&format!("{p}.bn2"), out);
            b.conv2.visit_mut(&format!("{p}.conv2"), out);
            if let Some(c) = &mut b.proj {
                c.visit_mut(&format!("{p}.proj"), out);
            }
            match &mut b.attn {
                AttentionParams::Se(sp) => sp.visit_mut(&format!("{p}.se"), out),
                AttentionParams::Cbam(cp) => cp.visit_mut(&format!("{p}.cbam"), out),
                _ => {}
            }
        }
        self.gru.visit_mut("encoder.gru", out);
        out.push(("encoder.fc.weight".into(), &mut self.fc_w));
        out.push(("encoder.fc.bias".into(), &mut self.fc_b));
    }

    pub fn visit_buffers<'a>(&'a self, out: &mut Vec<(String, &'a Tensor<S>)>) {
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("encoder.block{i}");
            b.bn1.visit_buffers(&format!("{p}.bn1"), out);
            b.bn2.visit_buffers(&format!("{p}.bn2"), out);
        }
    }

    pub fn visit_buffers_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Tensor<S>)>) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = format!("encoder.block{i}");
            b.bn1.visit_buffers_mut(&format!("{p}.bn1"), out);
            b.bn2.visit_buffers_mut(&format!("{p}.bn2"), out);
        }
    }

    /// Waveform (segment_len samples) to C x F x T feature map.
    pub fn encode(
        &self,
        g: &mut Graph<S>,
        vars: &EncoderVars,
        wave: Var,
        phase: Phase,
        mut bn_stats: Option<&mut Vec<BnStat<S>>>,
    ) -> Result<FeatureMap> {
        let wlen = g.shape(wave).first().copied().unwrap_or(0);
        if g.shape(wave).len() != 1 || wlen != self.cfg.segment_len {
            return Err(Error::Shape {
                op: "encode",
                msg: format!(
                    "expected a {}-sample segment, got {:?}",
                    self.cfg.segment_len,
                    g.shape(wave)
                ),
            });
        }
        let mut x = self.sinc.forward(g, &vars.sinc, wave)?;
        let simam = SimAmConfig::new(S::from_float(self.cfg.simam_lambda))?;
        for (i, (b, bv)) in self.blocks.iter().zip(&vars.blocks).enumerate() {
            let sh = g.shape(x).to_vec();
            if sh[1] < self.cfg.pool.0 || sh[2] < self.cfg.pool.1 {
                return Err(Error::Config(format!(
                    "feature map {}x{} collapses below the pool window at block {}",
                    sh[1], sh[2], i
                )));
            }
            let p = format!("encoder.block{i}");
            let h = b.bn1.forward(
                g,
                &bv.bn1,
                x,
                phase,
                &format!("{p}.bn1"),
                bn_stats.as_deref_mut(),
            )?;
            let h = g.selu(h)?;
            let h = b.conv1.forward(g, &bv.conv1, h, (1, 1))?;
            let h = b.bn2.forward(
                g,
                &bv.bn2,
                h,
                phase,
                &format!("{p}.bn2"),
                bn_stats.as_deref_mut(),
            )?;
            let h = g.selu(h)?;
            let h = b.conv2.forward(g, &bv.conv2, h, (1, 1))?;
            let fm = FeatureMap::new(g, h)?;
            let refined = match (&b.attn, &bv.attn) {
                (AttentionParams::None, _) => fm,
                (AttentionParams::SimAm, _) => simam_refine(g, &fm, &simam)?,
                (AttentionParams::Se(_), AttentionVars::Se(sv)) => se_refine(g, &fm, sv)?,
                (AttentionParams::Cbam(_), AttentionVars::Cbam(cv)) => cbam_refine(g, &fm, cv)?,
                _ => unreachable!("attention params and vars built together"),
            };
            let shortcut = match (&b.proj, &bv.proj) {
                (Some(c), Some(cv)) => c.forward(g, cv, x, (0, 0))?,
                _ => x,
            };
            let summed = g.add(refined.var, shortcut)?;
            x = g.max_pool2d(summed, self.cfg.pool, self.cfg.pool)?;
        }
        FeatureMap::new(g, x)
    }

    /// Feature map to embedding: pool F to 1, run the GRU over the T axis,
    /// and project the last hidden state.
    pub fn embed(
        &self,
        g: &mut Graph<S>,
        vars: &EncoderVars,
        fmap: &FeatureMap,
    ) -> Result<Embedding> {
        if fmap.time == 0 {
            return Err(Error::Shape {
                op: "embed",
                msg: "empty temporal axis".into(),
            });
        }
        let pooled = g.adaptive_avg_pool(fmap.var, PoolTarget::TwoD(1, fmap.time))?; // C x 1 x T
        let seq2d = g.reshape(pooled, &[fmap.channels, fmap.time])?;
        let mut seq = Vec::with_capacity(fmap.time);
        for t in 0..fmap.time {
            let col = g.slice(seq2d, 1, t, 1)?;
            seq.push(g.reshape(col, &[fmap.channels])?);
        }
        let h = self.gru.forward(g, &vars.gru, &seq)?;
        let e = g.linear(h, vars.fc_w, Some(vars.fc_b))?;
        Ok(Embedding {
            var: e,
            dim: self.cfg.embed_dim,
        })
    }

    /// Full pipeline: waveform to embedding.
    pub fn forward(
        &self,
        g: &mut Graph<S>,
        vars: &EncoderVars,
        wave: Var,
        phase: Phase,
        bn_stats: Option<&mut Vec<BnStat<S>>>,
    ) -> Result<Embedding> {
        let fmap = self.encode(g, vars, wave, phase, bn_stats)?;
        self.embed(g, vars, &fmap)
    }

    /// Apply observed batch statistics to the running buffers, matching by
    /// the names reported during `encode`.
    pub fn apply_bn_stats(&mut self, stats: &[BnStat<S>]) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = format!("encoder.block{i}");
            for s in stats {
                if s.name == format!("{p}.bn1") {
                    b.bn1.update_running(&s.mean, &s.var);
                } else if s.name == format!("{p}.bn2") {
                    b.bn2.update_running(&s.mean, &s.var);
                }
            }
        }
    }
}

/// A tiny configuration used by tests and the gradient self-check.
pub fn tiny_config(attention: AttentionKind) -> EncoderConfig {
    EncoderConfig {
        sample_rate: 16000,
        segment_len: 220,
        sinc_filters: 8,
        sinc_kernel_len: 17,
        num_blocks: 2,
        filters_per_block: vec![2, 4],
        pool: (2, 2),
        gru_hidden: 6,
        embed_dim: 5,
        attention,
        se: SeConfig { reduction: 2 },
        cbam: CbamConfig {
            reduction: 2,
            kernel: 3,
        },
        simam_lambda: 1e-4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent shape walk: valid conv keeps F; each block pools by the
    /// window with floor division.
    fn shape_oracle(cfg: &EncoderConfig) -> (usize, usize, usize) {
        let mut f = cfg.sinc_filters;
        let mut t = cfg.segment_len - cfg.sinc_kernel_len + 1;
        for _ in 0..cfg.num_blocks {
            f /= cfg.pool.0;
            t /= cfg.pool.1;
        }
        (*cfg.filters_per_block.last().unwrap(), f, t)
    }

    #[test]
    fn default_output_shape_matches_arithmetic_oracle() {
        let cfg = EncoderConfig::default();
        let got = cfg.output_shape().unwrap();
        assert_eq!(got, shape_oracle(&cfg));
        assert_eq!(got, (64, 1, 1007));
    }

    #[test]
    fn tiny_forward_has_predicted_shape_for_every_attention_kind() {
        for kind in [
            AttentionKind::None,
            AttentionKind::SimAm,
            AttentionKind::Se,
            AttentionKind::Cbam,
        ] {
            let cfg = tiny_config(kind);
            let want = cfg.output_shape().unwrap();
            assert_eq!(want, shape_oracle(&cfg));
            let mut rng = ChaCha8Rng::seed_from_u64(31);
            let enc = EncoderParams::<f64>::init(cfg.clone(), &mut rng).unwrap();
            let mut g = Graph::new();
            let wave = g
                .constant(Tensor::randn(&[cfg.segment_len], 0.1, &mut rng))
                .unwrap();
            let vars = enc.bind(&mut g).unwrap();
            let fm = enc.encode(&mut g, &vars, wave, Phase::Train, None).unwrap();
            assert_eq!(fm.shape(), [want.0, want.1, want.2], "kind {kind:?}");
            let e = enc.embed(&mut g, &vars, &fm).unwrap();
            assert_eq!(g.shape(e.var), &[cfg.embed_dim]);
            assert!(g.value(e.var).all_finite());
        }
    }

    #[test]
    fn collapsing_config_is_rejected_with_block_index() {
        let mut cfg = tiny_config(AttentionKind::None);
        cfg.num_blocks = 6;
        cfg.filters_per_block = vec![2, 2, 2, 2, 2, 2];
        let err = cfg.output_shape().unwrap_err().to_string();
        assert!(err.contains("block"), "{err}");
    }

    #[test]
    fn zero_map_embeds_to_fc_bias() {
        // zero feature map + zero GRU biases -> hidden stays zero -> embedding = fc bias
        let cfg = tiny_config(AttentionKind::None);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let mut enc = EncoderParams::<f64>::init(cfg, &mut rng).unwrap();
        enc.fc_b = Tensor::from_vec(vec![0.4, -0.3, 0.2, 0.1, -0.5]);
        let mut g = Graph::new();
        let vars = enc.bind(&mut g).unwrap();
        let zero = g.constant(Tensor::zeros(&[4, 3, 7])).unwrap();
        let fm = FeatureMap::new(&g, zero).unwrap();
        let e = enc.embed(&mut g, &vars, &fm).unwrap();
        assert_eq!(g.value(e.var).data(), enc.fc_b.data());
    }

    #[test]
    fn deterministic_embedding_given_seed_and_input() {
        let cfg = tiny_config(AttentionKind::SimAm);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(33);
            let enc = EncoderParams::<f64>::init(cfg.clone(), &mut rng).unwrap();
            let mut g = Graph::new();
            let wave = g
                .constant(Tensor::randn(&[cfg.segment_len], 0.1, &mut rng))
                .unwrap();
            let vars = enc.bind(&mut g).unwrap();
            let e = enc
                .forward(&mut g, &vars, wave, Phase::Train, None)
                .unwrap();
            g.value(e.var).data().to_vec()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn paper_scale_defaults() {
        let cfg = EncoderConfig::default();
        assert_eq!(cfg.embed_dim, 128);
        assert_eq!(cfg.gru_hidden, 128);
        assert_eq!(cfg.sinc_filters, 70);
        assert_eq!(cfg.num_blocks, 6);
        assert_eq!(cfg.filters_per_block, vec![32, 32, 64, 64, 64, 64]);
    }
}
