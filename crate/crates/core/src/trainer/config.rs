//! Flat key-value training configuration.
//!
//! Config files are plain text, one `key = value` per line, `#` comments.
//! Unknown keys are rejected so typos fail loudly. `to_text` renders the
//! fully resolved configuration (also embedded in checkpoints).

use crate::attention::{CbamConfig, SeConfig};
use crate::encoder::{AttentionKind, EncoderConfig};
use crate::episodic::MatchGranularity;
use crate::error::{Error, Result};
use crate::losses::AamConfig;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Self::F32),
            "f64" => Ok(Self::F64),
            other => Err(Error::Config(format!(
                "unknown precision '{other}' (expected f32|f64)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::F32 => "f32",
            Self::F64 => "f64",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    Wce,
    Aam,
    AamMse,
}

impl LossMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "wce" => Ok(Self::Wce),
            "aam" => Ok(Self::Aam),
            "aam+mse" => Ok(Self::AamMse),
            other => Err(Error::Config(format!(
                "unknown loss mode '{other}' (expected wce|aam|aam+mse)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Wce => "wce",
            Self::Aam => "aam",
            Self::AamMse => "aam+mse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    Protocol,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub precision: Precision,
    pub loss_mode: LossMode,
    pub encoder: EncoderConfig,
    pub aam: AamConfig,
    /// Balance of the episodic relation loss in the joint objective.
    pub lambda_balance: f64,
    pub episode_n: usize,
    pub episode_k: usize,
    pub match_granularity: MatchGranularity,
    pub relation_hidden: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_floor: f64,
    pub epochs: usize,
    /// 0 derives one pass over the training utterances per epoch.
    pub steps_per_epoch: usize,
    pub seed: u64,
    pub data_source: DataSource,
    pub synth_train_attacks: usize,
    pub synth_eval_attacks: usize,
    pub synth_per_class: usize,
    pub synth_dev_per_class: usize,
    pub synth_seed: u64,
    pub train_protocol: Option<PathBuf>,
    pub dev_protocol: Option<PathBuf>,
    pub eval_protocol: Option<PathBuf>,
    pub audio_dir: Option<PathBuf>,
    pub checkpoint_out: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            precision: Precision::F32,
            loss_mode: LossMode::AamMse,
            encoder: EncoderConfig::default(),
            aam: AamConfig::default(),
            lambda_balance: 1.0,
            episode_n: 6,
            episode_k: 2,
            match_granularity: MatchGranularity::Binary,
            relation_hidden: 128,
            batch_size: 16,
            lr: 1e-4,
            lr_floor: 0.0,
            epochs: 20,
            steps_per_epoch: 0,
            seed: 42,
            data_source: DataSource::Synthetic,
            synth_train_attacks: 6,
            synth_eval_attacks: 2,
            synth_per_class: 20,
            synth_dev_per_class: 6,
            synth_seed: 7,
            train_protocol: None,
            dev_protocol: None,
            eval_protocol: None,
            audio_dir: None,
            checkpoint_out: PathBuf::from("model.ckpt"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("cannot parse '{v}' for key '{key}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("cannot parse '{v}' for key '{key}'"))),
    }
}

impl TrainConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "config line {}: expected 'key = value'",
                    lineno + 1
                ))
            })?;
            cfg.apply(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("config line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "precision" => self.precision = Precision::parse(v)?,
            "loss_mode" => self.loss_mode = LossMode::parse(v)?,
            "attention" => self.encoder.attention = AttentionKind::parse(v)?,
            "sample_rate" => self.encoder.sample_rate = parse_num(key, v)?,
            "segment_len" => self.encoder.segment_len = parse_num(key, v)?,
            "sinc_filters" => self.encoder.sinc_filters = parse_num(key, v)?,
            "sinc_kernel_len" => self.encoder.sinc_kernel_len = parse_num(key, v)?,
            "num_blocks" => self.encoder.num_blocks = parse_num(key, v)?,
            "filters" => {
                self.encoder.filters_per_block = v
                    .split(',')
                    .map(|s| parse_num::<usize>(key, s.trim()))
                    .collect::<Result<_>>()?;
            }
            "pool_freq" => self.encoder.pool.0 = parse_num(key, v)?,
            "pool_time" => self.encoder.pool.1 = parse_num(key, v)?,
            "gru_hidden" => self.encoder.gru_hidden = parse_num(key, v)?,
            "embed_dim" => self.encoder.embed_dim = parse_num(key, v)?,
            "se_reduction" => {
                self.encoder.se = SeConfig {
                    reduction: parse_num(key, v)?,
                }
            }
            "cbam_reduction" => {
                self.encoder.cbam = CbamConfig {
                    reduction: parse_num(key, v)?,
                    ..self.encoder.cbam
                }
            }
            "cbam_kernel" => {
                self.encoder.cbam = CbamConfig {
                    kernel: parse_num(key, v)?,
                    ..self.encoder.cbam
                }
            }
            "simam_lambda" => self.encoder.simam_lambda = parse_num(key, v)?,
            "aam_scale" => self.aam.scale = parse_num(key, v)?,
            "margin_bonafide" => self.aam.margin_bonafide = parse_num(key, v)?,
            "margin_spoof" => self.aam.margin_spoof = parse_num(key, v)?,
            "weight_bonafide" => self.aam.weight_bonafide = parse_num(key, v)?,
            "weight_spoof" => self.aam.weight_spoof = parse_num(key, v)?,
            "conventional_weighting" => self.aam.conventional_weighting = parse_bool(key, v)?,
            "lambda_balance" => self.lambda_balance = parse_num(key, v)?,
            "episode_n" => self.episode_n = parse_num(key, v)?,
            "episode_k" => self.episode_k = parse_num(key, v)?,
            "match_granularity" => self.match_granularity = MatchGranularity::parse(v)?,
            "relation_hidden" => self.relation_hidden = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "lr_floor" => self.lr_floor = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "steps_per_epoch" => self.steps_per_epoch = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "data_source" => {
                self.data_source = match v {
                    "synthetic" => DataSource::Synthetic,
                    "protocol" => DataSource::Protocol,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown data source '{other}' (expected synthetic|protocol)"
                        )))
                    }
                }
            }
            "synth_train_attacks" => self.synth_train_attacks = parse_num(key, v)?,
            "synth_eval_attacks" => self.synth_eval_attacks = parse_num(key, v)?,
            "synth_per_class" => self.synth_per_class = parse_num(key, v)?,
            "synth_dev_per_class" => self.synth_dev_per_class = parse_num(key, v)?,
            "synth_seed" => self.synth_seed = parse_num(key, v)?,
            "train_protocol" => self.train_protocol = Some(PathBuf::from(v)),
            "dev_protocol" => self.dev_protocol = Some(PathBuf::from(v)),
            "eval_protocol" => self.eval_protocol = Some(PathBuf::from(v)),
            "audio_dir" => self.audio_dir = Some(PathBuf::from(v)),
            "checkpoint_out" => self.checkpoint_out = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.aam.validate()?;
        if self.lambda_balance < 0.0 {
            return Err(Error::Config("lambda_balance must be non-negative".into()));
        }
        if self.lr <= 0.0 || self.lr_floor < 0.0 || self.lr_floor > self.lr {
            return Err(Error::Config(format!(
                "learning rate {} and floor {} are inconsistent",
                self.lr, self.lr_floor
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch size must be positive".into(),
            ));
        }
        if self.episode_n < 2 || self.episode_k == 0 {
            return Err(Error::Config(
                "episodes need at least 2 attack types and k >= 1".into(),
            ));
        }
        if self.relation_hidden == 0 {
            return Err(Error::Config(
                "relation hidden size must be positive".into(),
            ));
        }
        if self.loss_mode == LossMode::AamMse {
            let episode_size = (self.episode_n + 2) * self.episode_k;
            if self.batch_size != episode_size {
                return Err(Error::Config(format!(
                    "loss mode aam+mse uses one episode per mini-batch: batch_size must equal \
                     (n+2)*k = {episode_size}, got {}",
                    self.batch_size
                )));
            }
        }
        if self.data_source == DataSource::Protocol
            && (self.train_protocol.is_none() || self.audio_dir.is_none())
        {
            return Err(Error::Config(
                "protocol data source needs train_protocol and audio_dir".into(),
            ));
        }
        Ok(())
    }

    /// Canonical text rendering of every key; parsing it back reproduces the
    /// configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("precision", self.precision.as_str().into());
        kv("loss_mode", self.loss_mode.as_str().into());
        kv("attention", self.encoder.attention.as_str().into());
        kv("sample_rate", self.encoder.sample_rate.to_string());
        kv("segment_len", self.encoder.segment_len.to_string());
        kv("sinc_filters", self.encoder.sinc_filters.to_string());
        kv("sinc_kernel_len", self.encoder.sinc_kernel_len.to_string());
        kv("num_blocks", self.encoder.num_blocks.to_string());
        kv(
            "filters",
            self.encoder
                .filters_per_block
                .iter()
                .map(|f| f.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("pool_freq", self.encoder.pool.0.to_string());
        kv("pool_time", self.encoder.pool.1.to_string());
        kv("gru_hidden", self.encoder.gru_hidden.to_string());
        kv("embed_dim", self.encoder.embed_dim.to_string());
        kv("se_reduction", self.encoder.se.reduction.to_string());
        kv("cbam_reduction", self.encoder.cbam.reduction.to_string());
        kv("cbam_kernel", self.encoder.cbam.kernel.to_string());
        kv("simam_lambda", format!("{:e}", self.encoder.simam_lambda));
        kv("aam_scale", self.aam.scale.to_string());
        kv("margin_bonafide", self.aam.margin_bonafide.to_string());
        kv("margin_spoof", self.aam.margin_spoof.to_string());
        kv("weight_bonafide", self.aam.weight_bonafide.to_string());
        kv("weight_spoof", self.aam.weight_spoof.to_string());
        kv(
            "conventional_weighting",
            self.aam.conventional_weighting.to_string(),
        );
        kv("lambda_balance", self.lambda_balance.to_string());
        kv("episode_n", self.episode_n.to_string());
        kv("episode_k", self.episode_k.to_string());
        kv("match_granularity", self.match_granularity.as_str().into());
        kv("relation_hidden", self.relation_hidden.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("lr", format!("{:e}", self.lr));
        kv("lr_floor", format!("{:e}", self.lr_floor));
        kv("epochs", self.epochs.to_string());
        kv("steps_per_epoch", self.steps_per_epoch.to_string());
        kv("seed", self.seed.to_string());
        kv(
            "data_source",
            match self.data_source {
                DataSource::Synthetic => "synthetic".into(),
                DataSource::Protocol => "protocol".into(),
            },
        );
        kv("synth_train_attacks", self.synth_train_attacks.to_string());
        kv("synth_eval_attacks", self.synth_eval_attacks.to_string());
        kv("synth_per_class", self.synth_per_class.to_string());
        kv("synth_dev_per_class", self.synth_dev_per_class.to_string());
        kv("synth_seed", self.synth_seed.to_string());
        if let Some(p) = &self.train_protocol {
            kv("train_protocol", p.display().to_string());
        }
        if let Some(p) = &self.dev_protocol {
            kv("dev_protocol", p.display().to_string());
        }
        if let Some(p) = &self.eval_protocol {
            kv("eval_protocol", p.display().to_string());
        }
        if let Some(p) = &self.audio_dir {
            kv("audio_dir", p.display().to_string());
        }
        kv("checkpoint_out", self.checkpoint_out.display().to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_recipe() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.aam.scale, 32.0);
        assert_eq!(cfg.aam.margin_bonafide, 0.2);
        assert_eq!(cfg.aam.margin_spoof, 0.9);
        assert_eq!(cfg.aam.weight_bonafide, 0.9);
        assert_eq!(cfg.aam.weight_spoof, 0.1);
        assert_eq!(cfg.batch_size, 16);
        assert_eq!(cfg.lr, 1e-4);
        assert_eq!(cfg.episode_n, 6);
        assert_eq!(cfg.episode_k, 2);
        // one episode = NK support + 2K query = 16 members = the batch
        assert_eq!((cfg.episode_n + 2) * cfg.episode_k, cfg.batch_size);
    }

    #[test]
    fn text_round_trip_preserves_every_field() {
        let mut cfg = TrainConfig::default();
        cfg.encoder.num_blocks = 2;
        cfg.encoder.filters_per_block = vec![4, 8];
        cfg.encoder.segment_len = 1600;
        cfg.lr = 1e-3;
        cfg.epochs = 7;
        cfg.loss_mode = LossMode::Aam;
        let text = cfg.to_text();
        let back = TrainConfig::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn unknown_key_is_rejected_with_line_number() {
        let err = TrainConfig::from_text("loss_mode = wce\nnot_a_key = 3\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(err.contains("not_a_key"), "{err}");
    }

    #[test]
    fn episode_batch_consistency_is_enforced() {
        let err = TrainConfig::from_text("batch_size = 10\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("one episode per mini-batch"), "{err}");
        // but wce mode accepts any batch size
        TrainConfig::from_text("loss_mode = wce\nbatch_size = 10\n").unwrap();
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = TrainConfig::from_text("# a comment\n\nseed = 9 # trailing\n").unwrap();
        assert_eq!(cfg.seed, 9);
    }
}
