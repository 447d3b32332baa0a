//! Training objectives: weighted cross-entropy, weighted binary
//! angular-margin loss, relation-score MSE, and their weighted sum.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::Rng;

pub const LABEL_BONAFIDE: usize = 0;
pub const LABEL_SPOOF: usize = 1;

/// Angular-margin head configuration. Weights only need to be positive (the
/// margin-free degenerate case uses (1, 1)).
#[derive(Debug, Clone, Copy)]
pub struct AamConfig {
    pub scale: f64,
    pub margin_bonafide: f64,
    pub margin_spoof: f64,
    pub weight_bonafide: f64,
    pub weight_spoof: f64,
    /// When set, the class weight multiplies the per-sample log-loss instead
    /// of sitting inside the log's numerator.
    pub conventional_weighting: bool,
}

impl Default for AamConfig {
    fn default() -> Self {
        Self {
            scale: 32.0,
            margin_bonafide: 0.2,
            margin_spoof: 0.9,
            weight_bonafide: 0.9,
            weight_spoof: 0.1,
            conventional_weighting: false,
        }
    }
}

impl AamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale <= 0.0 {
            return Err(Error::Config(
                "angular-margin scale must be positive".into(),
            ));
        }
        for m in [self.margin_bonafide, self.margin_spoof] {
            if !(-1.0..=1.0).contains(&m) {
                return Err(Error::Config(format!("margin {m} outside [-1, 1]")));
            }
        }
        if self.weight_bonafide <= 0.0 || self.weight_spoof <= 0.0 {
            return Err(Error::Config("class weights must be positive".into()));
        }
        Ok(())
    }

    fn margin_for(&self, label: usize) -> f64 {
        if label == LABEL_BONAFIDE {
            self.margin_bonafide
        } else {
            self.margin_spoof
        }
    }

    fn weight_for(&self, label: usize) -> f64 {
        if label == LABEL_BONAFIDE {
            self.weight_bonafide
        } else {
            self.weight_spoof
        }
    }
}

/// Two L2-normalizable class anchors, one column per class, no bias.
#[derive(Debug, Clone)]
pub struct AamHead<S> {
    pub weight: Tensor<S>, // d x 2
}

pub struct AamHeadVars {
    pub weight: Var,
}

impl<S: Scalar> AamHead<S> {
    pub fn init(embed_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Tensor::randn(&[embed_dim, 2], 1.0 / (embed_dim as f64).sqrt(), rng),
        }
    }

    pub fn bind(&self, g: &mut Graph<S>, prefix: &str) -> Result<AamHeadVars> {
        Ok(AamHeadVars {
            weight: g.param(format!("{prefix}.weight"), self.weight.clone())?,
        })
    }

    pub fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<S>)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<S>)>) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
    }
}

fn check_labels(labels: &[usize]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::Shape {
            op: "loss",
            msg: "empty batch".into(),
        });
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Shape {
            op: "loss",
            msg: "labels must be 0 (bona fide) or 1 (spoof)".into(),
        });
    }
    Ok(())
}

/// Per-row stable -log softmax(logits)[label], weighted per class and
/// normalized by the total weight of the batch.
pub fn weighted_cross_entropy<S: Scalar>(
    g: &mut Graph<S>,
    logits: Var, // B x 2
    labels: &[usize],
    weights: (f64, f64),
) -> Result<Var> {
    check_labels(labels)?;
    let sh = g.shape(logits).to_vec();
    if sh.len() != 2 || sh[1] != 2 || sh[0] != labels.len() {
        return Err(Error::Shape {
            op: "weighted_cross_entropy",
            msg: format!("expected {} x 2 logits, got {:?}", labels.len(), sh),
        });
    }
    if weights.0 <= 0.0 || weights.1 <= 0.0 {
        return Err(Error::Config("class weights must be positive".into()));
    }
    let b = labels.len();
    let l0 = g.slice(logits, 1, 0, 1)?; // B x 1
    let l1 = g.slice(logits, 1, 1, 1)?;
    let lse = g.logsumexp_pair(l0, l1)?; // B x 1
    let target_mask = Tensor::from_fn(&[b, 2], |i| {
        if i % 2 == labels[i / 2] {
            S::one()
        } else {
            S::zero()
        }
    });
    let mask = g.constant(target_mask)?;
    let picked = g.mul(logits, mask)?;
    let target_logit = g.sum_axes(picked, &[1], true)?; // B x 1
    let nll = g.sub(lse, target_logit)?;
    let w: Vec<S> = labels
        .iter()
        .map(|&l| S::from_float(if l == 0 { weights.0 } else { weights.1 }))
        .collect();
    let wsum: f64 = labels
        .iter()
        .map(|&l| if l == 0 { weights.0 } else { weights.1 })
        .sum();
    let wv = g.constant(Tensor::new(vec![b, 1], w)?)?;
    let weighted = g.mul(nll, wv)?;
    let total = g.sum_all(weighted)?;
    g.scale(total, S::from_float(1.0 / wsum))
}

/// Weighted binary additive-angular-margin loss.
///
/// Embeddings and both anchors are L2-normalized; the per-class margin is
/// added to the target angle only, and the class weight sits inside the log's
/// numerator (an additive -log w per sample) unless
/// `conventional_weighting` moves it outside as a per-sample factor.
pub fn aam_loss<S: Scalar>(
    g: &mut Graph<S>,
    embeddings: Var, // B x d
    labels: &[usize],
    head: &AamHeadVars,
    cfg: &AamConfig,
) -> Result<Var> {
    cfg.validate()?;
    check_labels(labels)?;
    let sh = g.shape(embeddings).to_vec();
    if sh.len() != 2 || sh[0] != labels.len() {
        return Err(Error::Shape {
            op: "aam_loss",
            msg: format!("expected {} x d embeddings, got {:?}", labels.len(), sh),
        });
    }
    let (b, d) = (sh[0], sh[1]);
    if g.shape(head.weight) != [d, 2] {
        return Err(Error::Shape {
            op: "aam_loss",
            msg: format!(
                "anchor matrix {:?} does not match embedding dim {}",
                g.shape(head.weight),
                d
            ),
        });
    }
    // reject zero rows / anchors before dividing by their norms
    {
        let data = g.value(embeddings).data();
        for (i, row) in data.chunks(d).enumerate() {
            if row.iter().all(|v| *v == S::zero()) {
                return Err(Error::Shape {
                    op: "aam_loss",
                    msg: format!("embedding {i} is the zero vector"),
                });
            }
        }
        let w = g.value(head.weight).data();
        for c in 0..2 {
            if (0..d).all(|r| w[r * 2 + c] == S::zero()) {
                return Err(Error::Shape {
                    op: "aam_loss",
                    msg: format!("class anchor {c} is the zero vector"),
                });
            }
        }
    }

    // row-normalize embeddings, column-normalize anchors
    let e2 = g.square(embeddings)?;
    let row_norm = g.sum_axes(e2, &[1], true)?;
    let row_norm = g.sqrt(row_norm)?;
    let e_hat = g.div(embeddings, row_norm)?;
    let w2 = g.square(head.weight)?;
    let col_norm = g.sum_axes(w2, &[0], true)?;
    let col_norm = g.sqrt(col_norm)?;
    let w_hat = g.div(head.weight, col_norm)?;

    let cosines = g.matmul(e_hat, w_hat)?; // B x 2

    let target_mask = Tensor::from_fn(&[b, 2], |i| {
        if i % 2 == labels[i / 2] {
            S::one()
        } else {
            S::zero()
        }
    });
    let other_mask = Tensor::from_fn(&[b, 2], |i| {
        if i % 2 == labels[i / 2] {
            S::zero()
        } else {
            S::one()
        }
    });
    let tm = g.constant(target_mask)?;
    let om = g.constant(other_mask)?;
    let ct = g.mul(cosines, tm)?;
    let cos_target = g.sum_axes(ct, &[1], true)?; // B x 1
    let co = g.mul(cosines, om)?;
    let cos_other = g.sum_axes(co, &[1], true)?; // B x 1

    let eps = S::from_float(1e-7);
    let clamped = g.clamp(cos_target, -S::one() + eps, S::one() - eps)?;
    let theta = g.acos(clamped)?;
    let margins: Vec<S> = labels
        .iter()
        .map(|&l| S::from_float(cfg.margin_for(l)))
        .collect();
    let mv = g.constant(Tensor::new(vec![b, 1], margins)?)?;
    let theta_m = g.add(theta, mv)?;
    let theta_m = g.clamp(theta_m, S::zero(), S::from_float(std::f64::consts::PI))?;
    let cos_margin = g.cos(theta_m)?;
    let s = S::from_float(cfg.scale);
    let logit_target = g.scale(cos_margin, s)?;
    let logit_other = g.scale(cos_other, s)?;

    let lse = g.logsumexp_pair(logit_target, logit_other)?;
    let nll = g.sub(lse, logit_target)?; // B x 1

    let loss_rows = if cfg.conventional_weighting {
        let w: Vec<S> = labels
            .iter()
            .map(|&l| S::from_float(cfg.weight_for(l)))
            .collect();
        let wv = g.constant(Tensor::new(vec![b, 1], w)?)?;
        g.mul(nll, wv)?
    } else {
        // numerator weight: -log w per sample added to the raw loss
        let neg_log_w: Vec<S> = labels
            .iter()
            .map(|&l| S::from_float(-cfg.weight_for(l).ln()))
            .collect();
        let wv = g.constant(Tensor::new(vec![b, 1], neg_log_w)?)?;
        g.add(nll, wv)?
    };
    let total = g.sum_all(loss_rows)?;
    g.scale(total, S::from_float(1.0 / b as f64))
}

/// Mean squared deviation of relation scores from the 0/1 match indicator,
/// normalized by the pair count.
pub fn relation_mse_loss<S: Scalar>(
    g: &mut Graph<S>,
    scores: Var, // NK x 2K
    targets: &Tensor<S>,
) -> Result<Var> {
    let sh = g.shape(scores).to_vec();
    if sh != targets.shape() {
        return Err(Error::Shape {
            op: "relation_mse_loss",
            msg: format!(
                "score matrix {:?} does not match target matrix {:?}",
                sh,
                targets.shape()
            ),
        });
    }
    if sh.len() != 2 {
        return Err(Error::Shape {
            op: "relation_mse_loss",
            msg: format!("expected a rank-2 score matrix, got {:?}", sh),
        });
    }
    if g.value(scores)
        .data()
        .iter()
        .any(|&v| v < S::zero() || v > S::one())
    {
        return Err(Error::Shape {
            op: "relation_mse_loss",
            msg: "scores must lie in [0, 1]".into(),
        });
    }
    let t = g.constant(targets.clone())?;
    let d = g.sub(scores, t)?;
    let d2 = g.square(d)?;
    g.mean_all(d2)
}

/// Joint objective: classification loss plus `lambda` times the episodic
/// relation loss.
pub fn total_loss<S: Scalar>(
    g: &mut Graph<S>,
    l_class: Var,
    l_relation: Var,
    lambda_balance: f64,
) -> Result<Var> {
    if lambda_balance < 0.0 {
        return Err(Error::Config(format!(
            "loss balance must be non-negative, got {lambda_balance}"
        )));
    }
    let scaled = g.scale(l_relation, S::from_float(lambda_balance))?;
    g.add(l_class, scaled)
}
