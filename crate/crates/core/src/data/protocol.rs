//! Five-field protocol lines in the ASVspoof LA convention:
//!
//! ```text
//! <speaker> <trial_id> <-> <attack_or_dash> <bonafide|spoof>
//! ```
//!
//! The third field is unused and conventionally "-"; bona fide lines carry
//! "-" in the attack field.

use super::{AttackLabel, Partition, TrialRecord, WaveSource};
use crate::error::{Error, Result};
use std::collections::BTreeSet;
use std::path::Path;

/// Parse a protocol file, stamping every record with `partition` and a
/// `<audio_dir>/<trial_id>.wav` source.
pub fn parse_protocol(
    path: &Path,
    partition: Partition,
    audio_dir: &Path,
) -> Result<Vec<TrialRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read protocol {}: {e}", path.display())))?;
    let records = parse_protocol_str(&text, partition, |id| {
        WaveSource::Wav(audio_dir.join(format!("{id}.wav")))
    })?;
    if records.is_empty() {
        eprintln!("warning: protocol {} is empty", path.display());
    }
    Ok(records)
}

/// Parse protocol text; `source_for` maps a trial id to its waveform source.
pub fn parse_protocol_str(
    text: &str,
    partition: Partition,
    source_for: impl Fn(&str) -> WaveSource,
) -> Result<Vec<TrialRecord>> {
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Data(format!(
                "protocol line {}: expected 5 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let trial_id = fields[1].to_string();
        if !seen.insert(trial_id.clone()) {
            return Err(Error::Data(format!(
                "protocol line {}: duplicate trial id '{trial_id}'",
                lineno + 1
            )));
        }
        let label = match (fields[3], fields[4]) {
            ("-", "bonafide") => AttackLabel::Bonafide,
            (attack, "spoof") if attack != "-" => AttackLabel::Attack(attack.to_string()),
            (a, k) => {
                return Err(Error::Data(format!(
                    "protocol line {}: inconsistent attack/key pair '{a} {k}'",
                    lineno + 1
                )))
            }
        };
        records.push(TrialRecord {
            source: source_for(&trial_id),
            trial_id,
            label,
            partition,
        });
    }
    Ok(records)
}

/// Render records back to protocol text (speaker column is synthesized).
pub fn serialize_protocol(records: &[TrialRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let (attack, key) = match &r.label {
            AttackLabel::Bonafide => ("-".to_string(), "bonafide"),
            AttackLabel::Attack(id) => (id.clone(), "spoof"),
        };
        out.push_str(&format!("SPK0 {} - {} {}\n", r.trial_id, attack, key));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth_source(_: &str) -> WaveSource {
        WaveSource::Synthetic(0)
    }

    #[test]
    fn parses_bonafide_and_attack_lines() {
        let text = "LA_0079 LA_T_1138215 - - bonafide\nLA_0079 LA_T_1007571 - A01 spoof\n";
        let recs = parse_protocol_str(text, Partition::Train, synth_source).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].trial_id, "LA_T_1138215");
        assert_eq!(recs[0].label, AttackLabel::Bonafide);
        assert_eq!(recs[1].trial_id, "LA_T_1007571");
        assert_eq!(recs[1].label, AttackLabel::Attack("A01".into()));
    }

    #[test]
    fn empty_text_gives_empty_list() {
        let recs = parse_protocol_str("", Partition::Train, synth_source).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn malformed_line_errors_with_its_number() {
        let text = "LA_0079 LA_T_1 - - bonafide\nbroken line here\n";
        let err = parse_protocol_str(text, Partition::Train, synth_source)
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn duplicate_trial_id_is_rejected() {
        let text = "A LA_T_1 - - bonafide\nB LA_T_1 - A01 spoof\n";
        let err = parse_protocol_str(text, Partition::Train, synth_source)
            .unwrap_err()
            .to_string();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn bonafide_with_attack_id_is_rejected() {
        let text = "A LA_T_1 - A01 bonafide\n";
        assert!(parse_protocol_str(text, Partition::Train, synth_source).is_err());
    }

    #[test]
    fn serialize_then_parse_is_identity_on_id_and_label() {
        let text = "X LA_T_1 - - bonafide\nY LA_T_2 - A03 spoof\nZ LA_T_3 - A01 spoof\n";
        let recs = parse_protocol_str(text, Partition::Dev, synth_source).unwrap();
        let round =
            parse_protocol_str(&serialize_protocol(&recs), Partition::Dev, synth_source).unwrap();
        assert_eq!(recs.len(), round.len());
        for (a, b) in recs.iter().zip(&round) {
            assert_eq!(a.trial_id, b.trial_id);
            assert_eq!(a.label, b.label);
            assert_eq!(a.partition, b.partition);
        }
    }
}
