//! Deterministic synthetic corpus with desk-scale "attack types".
//!
//! Bona fide utterances are band-limited harmonic stacks with low-level
//! noise. Each attack type applies one of four parametric artifact families
//! in the high band (tone, dual tone, AM tone, narrow noise band), with
//! per-type parameters drawn once from the master seed. Eval ("unseen")
//! attack types draw their frequencies from a range disjoint from the train
//! types, mirroring a seen/unseen split.

use super::{AttackLabel, Corpus, Partition, TrialRecord, WaveSource};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_train_attacks: usize,
    /// Unseen attack types appearing only in the eval partition.
    pub n_eval_attacks: usize,
    /// Utterances per class in train and eval.
    pub samples_per_class: usize,
    /// Utterances per class in the dev partition (train attack types).
    pub dev_samples_per_class: usize,
    pub segment_len: usize,
    pub sample_rate: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_train_attacks: 6,
            n_eval_attacks: 2,
            samples_per_class: 20,
            dev_samples_per_class: 6,
            segment_len: 1600,
            sample_rate: 16000,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train_attacks == 0 || self.n_eval_attacks == 0 {
            return Err(Error::Config(
                "need at least one train and one eval attack type".into(),
            ));
        }
        if self.samples_per_class == 0 || self.dev_samples_per_class == 0 {
            return Err(Error::Config(
                "per-class sample counts must be positive".into(),
            ));
        }
        if self.segment_len < 64 {
            return Err(Error::Config(
                "segments shorter than 64 samples are useless".into(),
            ));
        }
        if self.sample_rate < 2000 {
            return Err(Error::Config("sample rate too low".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum ArtifactFamily {
    Tone,
    DualTone,
    AmTone,
    NoiseBand,
}

#[derive(Debug, Clone)]
struct ArtifactParams {
    family: ArtifactFamily,
    freq: f64,
    amp: f64,
    extra: f64,
}

/// Frequency interval [lo, hi] covered by a type's artifact.
fn artifact_span(p: &ArtifactParams) -> (f64, f64) {
    match p.family {
        ArtifactFamily::Tone => (p.freq, p.freq),
        ArtifactFamily::DualTone => (p.freq, p.freq + p.extra),
        ArtifactFamily::AmTone => (p.freq - p.extra, p.freq + p.extra),
        ArtifactFamily::NoiseBand => (p.freq - p.extra, p.freq + p.extra),
    }
}

fn draw_type_params(seed: u64, global_type_idx: usize, freq_range: (f64, f64)) -> ArtifactParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1_000_000 + global_type_idx as u64);
    let family = match global_type_idx % 4 {
        0 => ArtifactFamily::Tone,
        1 => ArtifactFamily::DualTone,
        2 => ArtifactFamily::AmTone,
        _ => ArtifactFamily::NoiseBand,
    };
    let freq = rng.random_range(freq_range.0..freq_range.1);
    let amp = rng.random_range(0.16..0.30);
    let extra = match family {
        ArtifactFamily::Tone => 0.0,
        ArtifactFamily::DualTone => rng.random_range(120.0..250.0),
        ArtifactFamily::AmTone => rng.random_range(2.0..8.0),
        ArtifactFamily::NoiseBand => rng.random_range(50.0..140.0),
    };
    ArtifactParams {
        family,
        freq,
        amp,
        extra,
    }
}

/// Band-limited multi-sine plus low-level noise and a faint, per-utterance
/// high-band noise floor (so raw band energy alone is an imperfect cue),
/// peak-normalized.
fn bona_wave(rng: &mut ChaCha8Rng, len: usize, sr: f64) -> Vec<f64> {
    let tau = 2.0 * std::f64::consts::PI;
    let f0 = rng.random_range(100.0..300.0);
    let band_limit = 0.475 * sr / 2.0;
    let max_h = ((band_limit / f0) as usize).clamp(1, 10);
    let phases: Vec<f64> = (0..max_h).map(|_| rng.random_range(0.0..tau)).collect();
    let mut wave = vec![0.0; len];
    for (h, &phase) in phases.iter().enumerate() {
        let amp = 0.5 / (h + 1) as f64;
        let w = tau * f0 * (h + 1) as f64 / sr;
        for (i, s) in wave.iter_mut().enumerate() {
            *s += amp * (w * i as f64 + phase).sin();
        }
    }
    let peak = wave.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    let norm = 0.45 / peak;
    for s in wave.iter_mut() {
        *s = *s * norm + 0.005 * (rng.random::<f64>() * 2.0 - 1.0);
    }
    let floor = rng.random_range(0.004..0.03);
    for _ in 0..4 {
        let f = rng.random_range(0.5 * sr / 2.0..0.95 * sr / 2.0);
        let phase = rng.random_range(0.0..tau);
        let w = tau * f / sr;
        for (i, s) in wave.iter_mut().enumerate() {
            *s += 0.5 * floor * (w * i as f64 + phase).sin();
        }
    }
    wave
}

fn add_artifact(wave: &mut [f64], p: &ArtifactParams, rng: &mut ChaCha8Rng, sr: f64) {
    let tau = 2.0 * std::f64::consts::PI;
    match p.family {
        ArtifactFamily::Tone => {
            let phase = rng.random_range(0.0..tau);
            let w = tau * p.freq / sr;
            for (i, s) in wave.iter_mut().enumerate() {
                *s += p.amp * (w * i as f64 + phase).sin();
            }
        }
        ArtifactFamily::DualTone => {
            let (p1, p2) = (rng.random_range(0.0..tau), rng.random_range(0.0..tau));
            let w1 = tau * p.freq / sr;
            let w2 = tau * (p.freq + p.extra) / sr;
            for (i, s) in wave.iter_mut().enumerate() {
                let t = i as f64;
                *s += p.amp * ((w1 * t + p1).sin() + 0.7 * (w2 * t + p2).sin());
            }
        }
        ArtifactFamily::AmTone => {
            let phase = rng.random_range(0.0..tau);
            let w = tau * p.freq / sr;
            let wm = tau * p.extra / sr;
            for (i, s) in wave.iter_mut().enumerate() {
                let t = i as f64;
                *s += p.amp * (1.0 + 0.8 * (wm * t).sin()) * (w * t + phase).sin();
            }
        }
        ArtifactFamily::NoiseBand => {
            let n_tones = 12;
            for _ in 0..n_tones {
                let f = p.freq + rng.random_range(-p.extra..p.extra);
                let phase = rng.random_range(0.0..tau);
                let w = tau * f / sr;
                let a = p.amp / 3.0;
                for (i, s) in wave.iter_mut().enumerate() {
                    *s += a * (w * i as f64 + phase).sin();
                }
            }
        }
    }
}

/// Spoof = attenuated bona-style carrier plus the type's artifact.
fn spoof_wave(rng: &mut ChaCha8Rng, p: &ArtifactParams, len: usize, sr: f64) -> Vec<f64> {
    let mut wave = bona_wave(rng, len, sr);
    for s in wave.iter_mut() {
        *s *= 0.8;
    }
    add_artifact(&mut wave, p, rng, sr);
    wave
}

/// Fully deterministic given the seed; same seed, bitwise-identical corpus.
pub fn generate_synthetic_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let sr = cfg.sample_rate as f64;
    let nyquist = sr / 2.0;
    let train_range = (0.525 * nyquist, 0.725 * nyquist);
    let eval_range = (0.775 * nyquist, 0.925 * nyquist);

    let train_types: Vec<String> = (0..cfg.n_train_attacks)
        .map(|i| format!("A{:02}", i + 1))
        .collect();
    let eval_types: Vec<String> = (0..cfg.n_eval_attacks)
        .map(|i| format!("A{:02}", cfg.n_train_attacks + i + 1))
        .collect();

    let train_params: Vec<ArtifactParams> = (0..cfg.n_train_attacks)
        .map(|i| draw_type_params(cfg.seed, i, train_range))
        .collect();
    let eval_params: Vec<ArtifactParams> = (0..cfg.n_eval_attacks)
        .map(|i| draw_type_params(cfg.seed, cfg.n_train_attacks + i, eval_range))
        .collect();

    // the unseen types must not share spectral signatures with the seen ones
    let train_hi = train_params
        .iter()
        .map(|p| artifact_span(p).1)
        .fold(f64::MIN, f64::max);
    let eval_lo = eval_params
        .iter()
        .map(|p| artifact_span(p).0)
        .fold(f64::MAX, f64::min);
    if train_hi >= eval_lo {
        return Err(Error::Config(format!(
            "train/eval artifact parameter ranges overlap ({train_hi:.1} Hz vs {eval_lo:.1} Hz)"
        )));
    }

    let mut corpus = Corpus::default();
    let mut utt_counter: u64 = 0;
    let push = |corpus: &mut Corpus,
                partition: Partition,
                label: AttackLabel,
                wave: Vec<f64>,
                utt_counter: &mut u64| {
        let tag = match partition {
            Partition::Train => "T",
            Partition::Dev => "D",
            Partition::Eval => "E",
        };
        let trial_id = format!("SYN_{}_{:06}", tag, *utt_counter);
        corpus.waves.push(wave);
        corpus.records.push(TrialRecord {
            trial_id,
            label,
            partition,
            source: WaveSource::Synthetic(corpus.waves.len() - 1),
        });
        *utt_counter += 1;
    };

    for (partition, per_class) in [
        (Partition::Train, cfg.samples_per_class),
        (Partition::Dev, cfg.dev_samples_per_class),
        (Partition::Eval, cfg.samples_per_class),
    ] {
        let (types, params): (&[String], &[ArtifactParams]) = match partition {
            Partition::Eval => (&eval_types, &eval_params),
            _ => (&train_types, &train_params),
        };
        for _ in 0..per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(utt_counter);
            let wave = bona_wave(&mut rng, cfg.segment_len, sr);
            push(
                &mut corpus,
                partition,
                AttackLabel::Bonafide,
                wave,
                &mut utt_counter,
            );
        }
        for (ty, p) in types.iter().zip(params) {
            for _ in 0..per_class {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(utt_counter);
                let wave = spoof_wave(&mut rng, p, cfg.segment_len, sr);
                push(
                    &mut corpus,
                    partition,
                    AttackLabel::Attack(ty.clone()),
                    wave,
                    &mut utt_counter,
                );
            }
        }
    }
    corpus.validate_unique_ids()?;
    Ok(corpus)
}
