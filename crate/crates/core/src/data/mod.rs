//! Corpus ingestion: protocol files, WAV I/O, fixed-length segmentation, and
//! a deterministic synthetic-corpus generator.

pub mod protocol;
pub mod segment;
pub mod synth;
pub mod wav;

pub use protocol::{parse_protocol, parse_protocol_str, serialize_protocol};
pub use segment::{crop_or_tile, SegmentMode};
pub use synth::{generate_synthetic_corpus, SynthConfig};
pub use wav::{read_wav, write_wav};

use crate::episodic::ClassIndex;
use crate::error::{Error, Result};
use std::collections::BTreeSet;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    Dev,
    Eval,
}

impl Partition {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "dev" => Ok(Self::Dev),
            "eval" => Ok(Self::Eval),
            other => Err(Error::Config(format!(
                "unknown partition '{other}' (expected train|dev|eval)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Dev => "dev",
            Self::Eval => "eval",
        }
    }
}

/// Bona fide, or a spoofing attack identified by its type id (e.g. "A01").
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackLabel {
    Bonafide,
    Attack(String),
}

impl AttackLabel {
    pub fn is_bonafide(&self) -> bool {
        matches!(self, Self::Bonafide)
    }

    pub fn as_str(&self) -> &str {
        match self {
            Self::Bonafide => "bonafide",
            Self::Attack(id) => id,
        }
    }
}

/// Where a trial's waveform comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WaveSource {
    /// PCM-16 mono WAV on disk.
    Wav(PathBuf),
    /// Index into the in-memory waveforms of a synthetic corpus.
    Synthetic(usize),
}

/// One utterance's identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRecord {
    pub trial_id: String,
    pub label: AttackLabel,
    pub partition: Partition,
    pub source: WaveSource,
}

/// Records plus their waveform storage.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub records: Vec<TrialRecord>,
    /// Backing store for `WaveSource::Synthetic` indices.
    pub waves: Vec<Vec<f64>>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Fetch one trial's waveform as f64 samples in [-1, 1].
    pub fn waveform(&self, record: usize) -> Result<Vec<f64>> {
        let rec = self
            .records
            .get(record)
            .ok_or_else(|| Error::Data(format!("record index {record} out of range")))?;
        match &rec.source {
            WaveSource::Synthetic(i) => self
                .waves
                .get(*i)
                .cloned()
                .ok_or_else(|| Error::Data(format!("missing synthetic wave {i}"))),
            WaveSource::Wav(path) => read_wav(path),
        }
    }

    pub fn record_indices(&self, partition: Partition) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.partition == partition)
            .map(|(i, _)| i)
            .collect()
    }

    /// Attack ids present in a partition, sorted.
    pub fn attack_types(&self, partition: Partition) -> Vec<String> {
        let set: BTreeSet<String> = self
            .records
            .iter()
            .filter(|r| r.partition == partition)
            .filter_map(|r| match &r.label {
                AttackLabel::Attack(id) => Some(id.clone()),
                AttackLabel::Bonafide => None,
            })
            .collect();
        set.into_iter().collect()
    }

    /// Group one partition's records by class for episodic sampling.
    pub fn class_index(&self, partition: Partition) -> ClassIndex {
        let mut idx = ClassIndex::default();
        for (i, r) in self.records.iter().enumerate() {
            if r.partition != partition {
                continue;
            }
            match &r.label {
                AttackLabel::Bonafide => idx.genuine.push(i),
                AttackLabel::Attack(id) => idx.attacks.entry(id.clone()).or_default().push(i),
            }
        }
        idx
    }

    /// Duplicate trial ids are configuration mistakes; reject them early.
    pub fn validate_unique_ids(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for r in &self.records {
            if !seen.insert(&r.trial_id) {
                return Err(Error::Data(format!("duplicate trial id '{}'", r.trial_id)));
            }
        }
        Ok(())
    }
}
