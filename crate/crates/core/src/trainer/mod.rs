//! Training and evaluation entry points: joint episodic optimization,
//! scoring, checkpoints, and per-epoch logging.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod model;

pub use adam::{cosine_lr, Adam};
pub use config::{DataSource, LossMode, Precision, TrainConfig};
pub use model::{HeadParams, ModelVars, SpoofModel};

use crate::data::{
    crop_or_tile, generate_synthetic_corpus, parse_protocol, AttackLabel, Corpus, Partition,
    SegmentMode, SynthConfig,
};
use crate::encoder::Phase;
use crate::episodic::{build_pairs, relation_score, sample_episode, MemberLabel};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::losses::{aam_loss, relation_mse_loss, total_loss, weighted_cross_entropy};
use crate::metrics::{breakdown_report, compute_eer, BreakdownReport, ScoreSet, TdcfParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use model::HeadVars;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_aam: f64,
    pub loss_mse: f64,
    pub loss_total: f64,
    pub dev_eer: f64,
    pub lr: f64,
}

impl EpochLog {
    /// `epoch,loss_aam,loss_mse,loss_total,dev_eer,lr` (the classification
    /// loss occupies the first loss column in every mode).
    pub fn to_line(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6e}",
            self.epoch, self.loss_aam, self.loss_mse, self.loss_total, self.dev_eer, self.lr
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev_eer: f64,
    pub checkpoint_path: PathBuf,
}

/// Materialize the configured data source.
pub fn build_corpus(cfg: &TrainConfig) -> Result<Corpus> {
    match cfg.data_source {
        DataSource::Synthetic => generate_synthetic_corpus(&SynthConfig {
            n_train_attacks: cfg.synth_train_attacks,
            n_eval_attacks: cfg.synth_eval_attacks,
            samples_per_class: cfg.synth_per_class,
            dev_samples_per_class: cfg.synth_dev_per_class,
            segment_len: cfg.encoder.segment_len,
            sample_rate: cfg.encoder.sample_rate,
            seed: cfg.synth_seed,
        }),
        DataSource::Protocol => {
            let audio = cfg
                .audio_dir
                .as_ref()
                .ok_or_else(|| Error::Config("protocol data needs audio_dir".into()))?;
            let mut corpus = Corpus::default();
            let mut add = |proto: &Option<PathBuf>, part: Partition| -> Result<()> {
                if let Some(p) = proto {
                    corpus.records.extend(parse_protocol(p, part, audio)?);
                }
                Ok(())
            };
            add(&cfg.train_protocol, Partition::Train)?;
            add(&cfg.dev_protocol, Partition::Dev)?;
            add(&cfg.eval_protocol, Partition::Eval)?;
            corpus.validate_unique_ids()?;
            Ok(corpus)
        }
    }
}

fn step_context(e: Error, epoch: usize, step: usize) -> Error {
    Error::Graph(format!("epoch {epoch} step {step}: {e}"))
}

struct StepLosses {
    aam: f64,
    mse: f64,
    total: f64,
}

/// Embed a list of corpus records inside one graph (training crops).
#[allow(clippy::too_many_arguments)]
fn embed_records<S: Scalar>(
    g: &mut Graph<S>,
    model: &SpoofModel<S>,
    vars: &ModelVars,
    corpus: &Corpus,
    records: &[usize],
    rng_crop: &mut ChaCha8Rng,
    bn_stats: &mut Vec<crate::encoder::BnStat<S>>,
) -> Result<Vec<crate::graph::Var>> {
    let seg_len = model.encoder.cfg.segment_len;
    let mut embs = Vec::with_capacity(records.len());
    for &idx in records {
        let wave = corpus.waveform(idx)?;
        let segment = crop_or_tile(&wave, seg_len, SegmentMode::Train(rng_crop))?;
        let input = g.constant(Tensor::new(
            vec![seg_len],
            segment.iter().map(|&v| S::from_float(v)).collect(),
        )?)?;
        let e = model
            .encoder
            .forward(g, &vars.encoder, input, Phase::Train, Some(bn_stats))?;
        embs.push(e.var);
    }
    Ok(embs)
}

fn stack_rows<S: Scalar>(
    g: &mut Graph<S>,
    rows: &[crate::graph::Var],
) -> Result<crate::graph::Var> {
    let d = g.shape(rows[0])[0];
    let reshaped: Vec<_> = rows
        .iter()
        .map(|&r| g.reshape(r, &[1, d]))
        .collect::<Result<_>>()?;
    g.concat(0, &reshaped)
}

fn binary_label(label: &AttackLabel) -> usize {
    match label {
        AttackLabel::Bonafide => crate::losses::LABEL_BONAFIDE,
        AttackLabel::Attack(_) => crate::losses::LABEL_SPOOF,
    }
}

fn train_impl<S: Scalar>(cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let corpus = build_corpus(cfg)?;
    let train_records = corpus.record_indices(Partition::Train);
    if train_records.is_empty() {
        return Err(Error::Data("training partition is empty".into()));
    }
    let train_index = corpus.class_index(Partition::Train);
    if cfg.loss_mode == LossMode::AamMse {
        // fail early with a clear message instead of deep in the first step
        let types = train_index.attack_types();
        if types.len() < cfg.episode_n {
            return Err(Error::InsufficientSamples {
                label: "attack types".into(),
                needed: cfg.episode_n,
                available: types.len(),
            });
        }
        for t in &types {
            if train_index.attacks[t].len() < cfg.episode_k {
                return Err(Error::InsufficientSamples {
                    label: t.clone(),
                    needed: cfg.episode_k,
                    available: train_index.attacks[t].len(),
                });
            }
        }
        if train_index.genuine.len() < 2 * cfg.episode_k {
            return Err(Error::InsufficientSamples {
                label: "genuine".into(),
                needed: 2 * cfg.episode_k,
                available: train_index.genuine.len(),
            });
        }
    }

    let mut rng_init = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_init.set_stream(0);
    let mut rng_batch = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_batch.set_stream(1);
    let mut rng_crop = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_crop.set_stream(2);

    let mut model = SpoofModel::<S>::init(cfg, &mut rng_init)?;
    let mut optimizer = Adam::<S>::new();
    let steps_per_epoch = if cfg.steps_per_epoch > 0 {
        cfg.steps_per_epoch
    } else {
        (train_records.len() / cfg.batch_size).max(1)
    };

    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut best_eer = f64::INFINITY;
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_bytes: Option<Vec<u8>> = None;

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.lr, cfg.lr_floor);
        let mut sums = StepLosses {
            aam: 0.0,
            mse: 0.0,
            total: 0.0,
        };
        for step in 0..steps_per_epoch {
            let losses = match cfg.loss_mode {
                LossMode::AamMse => train_step_episodic(
                    cfg,
                    &corpus,
                    &train_index,
                    &mut model,
                    &mut optimizer,
                    lr,
                    &mut rng_batch,
                    &mut rng_crop,
                )
                .map_err(|e| step_context(e, epoch, step))?,
                _ => train_step_batch(
                    cfg,
                    &corpus,
                    &train_records,
                    &mut model,
                    &mut optimizer,
                    lr,
                    &mut rng_batch,
                    &mut rng_crop,
                )
                .map_err(|e| step_context(e, epoch, step))?,
            };
            if !losses.total.is_finite() {
                return Err(Error::Graph(format!(
                    "non-finite loss at epoch {epoch} step {step}"
                )));
            }
            sums.aam += losses.aam;
            sums.mse += losses.mse;
            sums.total += losses.total;
        }
        let n = steps_per_epoch as f64;
        let dev_scores = score_corpus(&model, &corpus, Partition::Dev)?;
        let dev_eer = if dev_scores.trials.is_empty() {
            f64::NAN
        } else {
            compute_eer(&dev_scores)?.0
        };
        let log = EpochLog {
            epoch,
            loss_aam: sums.aam / n,
            loss_mse: sums.mse / n,
            loss_total: sums.total / n,
            dev_eer,
            lr,
        };
        let loss_total = log.loss_total;
        logs.push(log);
        // model selection by dev EER; ties (common on a small dev set) break
        // to the lower training loss
        let candidate = if dev_eer.is_nan() {
            f64::INFINITY
        } else {
            dev_eer
        };
        let improved = candidate < best_eer || (candidate == best_eer && loss_total < best_loss);
        if improved || best_bytes.is_none() {
            best_eer = candidate;
            best_loss = loss_total;
            best_epoch = epoch;
            best_bytes = Some(checkpoint::checkpoint_bytes(cfg, &model));
        }
    }
    let bytes = best_bytes.expect("at least one epoch ran");
    if let Some(parent) = cfg.checkpoint_out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&cfg.checkpoint_out, &bytes)?;
    Ok(TrainReport {
        epochs: logs,
        best_epoch,
        best_dev_eer: best_eer,
        checkpoint_path: cfg.checkpoint_out.clone(),
    })
}

#[allow(clippy::too_many_arguments)]
fn train_step_episodic<S: Scalar>(
    cfg: &TrainConfig,
    corpus: &Corpus,
    train_index: &crate::episodic::ClassIndex,
    model: &mut SpoofModel<S>,
    optimizer: &mut Adam<S>,
    lr: f64,
    rng_batch: &mut ChaCha8Rng,
    rng_crop: &mut ChaCha8Rng,
) -> Result<StepLosses> {
    let episode = sample_episode(train_index, cfg.episode_n, cfg.episode_k, rng_batch)?;
    let mut g = Graph::<S>::new();
    let vars = model.bind(&mut g)?;
    let mut bn_stats = Vec::new();

    let member_records: Vec<usize> = episode
        .support
        .iter()
        .chain(&episode.query)
        .map(|m| m.record)
        .collect();
    let labels: Vec<usize> = episode
        .support
        .iter()
        .chain(&episode.query)
        .map(|m| match &m.label {
            MemberLabel::Genuine => crate::losses::LABEL_BONAFIDE,
            MemberLabel::Spoof(_) => crate::losses::LABEL_SPOOF,
        })
        .collect();
    let embs = embed_records(
        &mut g,
        model,
        &vars,
        corpus,
        &member_records,
        rng_crop,
        &mut bn_stats,
    )?;
    let matrix = stack_rows(&mut g, &embs)?;
    let HeadVars::Aam(head) = &vars.head else {
        return Err(Error::Config(
            "episodic training uses the margin head".into(),
        ));
    };
    let l_aam = aam_loss(&mut g, matrix, &labels, head, &cfg.aam)?;

    let ns = episode.support.len();
    let (pairs, targets) = build_pairs(
        &mut g,
        &episode,
        &embs[..ns],
        &embs[ns..],
        cfg.match_granularity,
    )?;
    let relation = vars
        .relation
        .as_ref()
        .ok_or_else(|| Error::Config("episodic training needs the relation net".into()))?;
    let scores = relation_score(&mut g, pairs, relation, ns, episode.query.len())?;
    let l_mse = relation_mse_loss(&mut g, scores, &targets)?;
    let l_total = total_loss(&mut g, l_aam, l_mse, cfg.lambda_balance)?;

    let out = StepLosses {
        aam: g.item(l_aam)?.to_float(),
        mse: g.item(l_mse)?.to_float(),
        total: g.item(l_total)?.to_float(),
    };
    g.backward(l_total)?;
    apply_update(model, optimizer, &g, lr, bn_stats)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn train_step_batch<S: Scalar>(
    cfg: &TrainConfig,
    corpus: &Corpus,
    train_records: &[usize],
    model: &mut SpoofModel<S>,
    optimizer: &mut Adam<S>,
    lr: f64,
    rng_batch: &mut ChaCha8Rng,
    rng_crop: &mut ChaCha8Rng,
) -> Result<StepLosses> {
    let b = cfg.batch_size.min(train_records.len());
    // partial Fisher-Yates over a copy for a without-replacement batch
    let mut pool = train_records.to_vec();
    for i in 0..b {
        let j = i + rng_batch.random_range(0..pool.len() - i);
        pool.swap(i, j);
    }
    let batch = &pool[..b];
    let labels: Vec<usize> = batch
        .iter()
        .map(|&i| binary_label(&corpus.records[i].label))
        .collect();

    let mut g = Graph::<S>::new();
    let vars = model.bind(&mut g)?;
    let mut bn_stats = Vec::new();
    let embs = embed_records(&mut g, model, &vars, corpus, batch, rng_crop, &mut bn_stats)?;
    let matrix = stack_rows(&mut g, &embs)?;
    let loss = match (&cfg.loss_mode, &vars.head) {
        (LossMode::Wce, HeadVars::Wce { w, b }) => {
            let logits = g.linear(matrix, *w, Some(*b))?;
            weighted_cross_entropy(
                &mut g,
                logits,
                &labels,
                (cfg.aam.weight_bonafide, cfg.aam.weight_spoof),
            )?
        }
        (LossMode::Aam, HeadVars::Aam(head)) => aam_loss(&mut g, matrix, &labels, head, &cfg.aam)?,
        _ => {
            return Err(Error::Config(
                "loss mode does not match the model head".into(),
            ))
        }
    };
    let out = StepLosses {
        aam: g.item(loss)?.to_float(),
        mse: 0.0,
        total: g.item(loss)?.to_float(),
    };
    g.backward(loss)?;
    apply_update(model, optimizer, &g, lr, bn_stats)?;
    Ok(out)
}

fn apply_update<S: Scalar>(
    model: &mut SpoofModel<S>,
    optimizer: &mut Adam<S>,
    g: &Graph<S>,
    lr: f64,
    bn_stats: Vec<crate::encoder::BnStat<S>>,
) -> Result<()> {
    let grads: BTreeMap<String, Tensor<S>> = g.named_grads().into_iter().collect();
    let mut params = Vec::new();
    model.visit_params_mut(&mut params);
    optimizer.step(&mut params, &grads, lr)?;
    model.encoder.apply_bn_stats(&bn_stats);
    Ok(())
}

/// Score every trial of a partition with deterministic (leading) crops and
/// the inference-mode encoder.
pub fn score_corpus<S: Scalar>(
    model: &SpoofModel<S>,
    corpus: &Corpus,
    partition: Partition,
) -> Result<ScoreSet> {
    let mut set = ScoreSet::default();
    for idx in corpus.record_indices(partition) {
        let rec = &corpus.records[idx];
        let wave = corpus.waveform(idx)?;
        let segment =
            crop_or_tile::<ChaCha8Rng>(&wave, model.encoder.cfg.segment_len, SegmentMode::Eval)?;
        let emb = model.embed_segment(&segment, Phase::Eval)?;
        let score = model.score_embedding(&emb)?;
        set.push(rec.trial_id.clone(), rec.label.clone(), score);
    }
    Ok(set)
}

/// Train with the configured precision, returning per-epoch logs and the
/// path of the best-dev-EER checkpoint.
pub fn train(cfg: &TrainConfig) -> Result<TrainReport> {
    match cfg.precision {
        Precision::F32 => train_impl::<f32>(cfg),
        Precision::F64 => train_impl::<f64>(cfg),
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub scores: ScoreSet,
    pub report: BreakdownReport,
}

/// Score a partition of the configured data with a checkpointed model and
/// summarize it.
pub fn evaluate(
    checkpoint_path: &Path,
    data_cfg: &TrainConfig,
    partition: Partition,
    tdcf: &TdcfParams,
) -> Result<EvalOutput> {
    let (ckpt_cfg, model) = checkpoint::load(checkpoint_path)?;
    if ckpt_cfg.encoder.sample_rate != data_cfg.encoder.sample_rate {
        return Err(Error::Config(format!(
            "checkpoint expects {} Hz audio but the data provides {} Hz",
            ckpt_cfg.encoder.sample_rate, data_cfg.encoder.sample_rate
        )));
    }
    let corpus = build_corpus(data_cfg)?;
    let scores = score_corpus(&model, &corpus, partition)?;
    if scores.trials.is_empty() {
        return Err(Error::Data(format!(
            "partition {} has no trials",
            partition.as_str()
        )));
    }
    let expected = corpus.attack_types(partition);
    let report = breakdown_report(&scores, tdcf, Some(&expected))?;
    Ok(EvalOutput { scores, report })
}

/// A small episodic configuration that trains in seconds; used by tests.
pub fn desk_config() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.encoder.segment_len = 1600;
    cfg.encoder.sinc_filters = 12;
    cfg.encoder.sinc_kernel_len = 33;
    cfg.encoder.num_blocks = 2;
    cfg.encoder.filters_per_block = vec![2, 4];
    cfg.encoder.pool = (2, 4);
    cfg.encoder.gru_hidden = 24;
    cfg.encoder.embed_dim = 24;
    cfg.encoder.attention = crate::encoder::AttentionKind::SimAm;
    cfg.relation_hidden = 24;
    cfg.lr = 1e-3;
    cfg.epochs = 12;
    cfg.steps_per_epoch = 6;
    cfg.synth_per_class = 20;
    cfg.synth_dev_per_class = 6;
    cfg
}
