//! The full trainable model: encoder, classifier head, and the optional
//! relation comparator for episodic training.

use super::config::{LossMode, TrainConfig};
use crate::encoder::{EncoderParams, EncoderVars, Phase};
use crate::episodic::{RelationNet, RelationVars};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::losses::{AamHead, AamHeadVars};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::Rng;

#[derive(Debug, Clone)]
pub enum HeadParams<S> {
    /// Plain two-class linear head for cross-entropy training.
    Wce { w: Tensor<S>, b: Tensor<S> },
    /// Bias-free angular-margin anchors.
    Aam(AamHead<S>),
}

pub enum HeadVars {
    Wce { w: Var, b: Var },
    Aam(AamHeadVars),
}

#[derive(Debug, Clone)]
pub struct SpoofModel<S> {
    pub encoder: EncoderParams<S>,
    pub head: HeadParams<S>,
    pub relation: Option<RelationNet<S>>,
}

pub struct ModelVars {
    pub encoder: EncoderVars,
    pub head: HeadVars,
    pub relation: Option<RelationVars>,
}

impl<S: Scalar> SpoofModel<S> {
    pub fn init(cfg: &TrainConfig, rng: &mut impl Rng) -> Result<Self> {
        let encoder = EncoderParams::init(cfg.encoder.clone(), rng)?;
        let d = cfg.encoder.embed_dim;
        let head = match cfg.loss_mode {
            LossMode::Wce => HeadParams::Wce {
                w: Tensor::randn(&[d, 2], 1.0 / (d as f64).sqrt(), rng),
                b: Tensor::zeros(&[2]),
            },
            _ => HeadParams::Aam(AamHead::init(d, rng)),
        };
        let relation = if cfg.loss_mode == LossMode::AamMse {
            Some(RelationNet::init(d, cfg.relation_hidden, rng))
        } else {
            None
        };
        Ok(Self {
            encoder,
            head,
            relation,
        })
    }

    pub fn bind(&self, g: &mut Graph<S>) -> Result<ModelVars> {
        let encoder = self.encoder.bind(g)?;
        let head = match &self.head {
            HeadParams::Wce { w, b } => HeadVars::Wce {
                w: g.param("head.weight", w.clone())?,
                b: g.param("head.bias", b.clone())?,
            },
            HeadParams::Aam(h) => HeadVars::Aam(h.bind(g, "head.aam")?),
        };
        let relation = match &self.relation {
            Some(r) => Some(r.bind(g, "relation")?),
            None => None,
        };
        Ok(ModelVars {
            encoder,
            head,
            relation,
        })
    }

    pub fn visit_params<'a>(&'a self, out: &mut Vec<(String, &'a Tensor<S>)>) {
        self.encoder.visit(out);
        match &self.head {
            HeadParams::Wce { w, b } => {
                out.push(("head.weight".into(), w));
                out.push(("head.bias".into(), b));
            }
            HeadParams::Aam(h) => h.visit("head.aam", out),
        }
        if let Some(r) = &self.relation {
            r.visit("relation", out);
        }
    }

    pub fn visit_params_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Tensor<S>)>) {
        self.encoder.visit_mut(out);
        match &mut self.head {
            HeadParams::Wce { w, b } => {
                out.push(("head.weight".into(), w));
                out.push(("head.bias".into(), b));
            }
            HeadParams::Aam(h) => h.visit_mut("head.aam", out),
        }
        if let Some(r) = &mut self.relation {
            r.visit_mut("relation", out);
        }
    }

    pub fn visit_buffers<'a>(&'a self, out: &mut Vec<(String, &'a Tensor<S>)>) {
        self.encoder.visit_buffers(out);
    }

    pub fn visit_buffers_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Tensor<S>)>) {
        self.encoder.visit_buffers_mut(out);
    }

    /// Bona-fide score of one embedded utterance: the cosine against the
    /// bona-fide anchor under the margin head, the bona-fide logit under the
    /// linear head. Computed on plain values (no gradients involved).
    pub fn score_embedding(&self, embedding: &[S]) -> Result<f64> {
        match &self.head {
            HeadParams::Aam(h) => {
                let w = h.weight.data();
                let mut dot = 0.0f64;
                let mut en = 0.0f64;
                let mut wn = 0.0f64;
                for (r, &e) in embedding.iter().enumerate() {
                    let ev = e.to_float();
                    let wv = w[r * 2].to_float(); // bona-fide anchor column 0
                    dot += ev * wv;
                    en += ev * ev;
                    wn += wv * wv;
                }
                if en == 0.0 || wn == 0.0 {
                    return Err(Error::Metric(
                        "zero embedding or anchor while scoring".into(),
                    ));
                }
                Ok(dot / (en.sqrt() * wn.sqrt()))
            }
            HeadParams::Wce { w, b } => {
                let d = embedding.len();
                let mut logit0 = b.data()[0].to_float();
                for r in 0..d {
                    logit0 += embedding[r].to_float() * w.data()[r * 2].to_float();
                }
                Ok(logit0)
            }
        }
    }

    /// Embed one fixed-length segment in a fresh graph.
    pub fn embed_segment(&self, segment: &[f64], phase: Phase) -> Result<Vec<S>> {
        let mut g = Graph::new();
        let wave = g.constant(Tensor::new(
            vec![segment.len()],
            segment.iter().map(|&v| S::from_float(v)).collect(),
        )?)?;
        let vars = self.bind(&mut g)?;
        let e = self
            .encoder
            .forward(&mut g, &vars.encoder, wave, phase, None)?;
        Ok(g.value(e.var).data().to_vec())
    }
}
