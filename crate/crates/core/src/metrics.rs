//! Detection metrics: pooled and per-attack equal error rate, and the
//! minimum normalized tandem detection cost at a fixed ASV operating point.
//!
//! Score polarity is fixed project-wide: higher means more bona fide. A trial
//! is accepted as bona fide iff its score >= the threshold.

use crate::data::AttackLabel;
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub trial_id: String,
    pub label: AttackLabel,
    pub score: f64,
}

/// A set of scored trials; EER needs at least one trial of each class.
#[derive(Debug, Clone, Default)]
pub struct ScoreSet {
    pub trials: Vec<Trial>,
}

impl ScoreSet {
    pub fn new(trials: Vec<Trial>) -> Result<Self> {
        if trials.iter().any(|t| !t.score.is_finite()) {
            return Err(Error::Metric("non-finite score".into()));
        }
        Ok(Self { trials })
    }

    pub fn push(&mut self, trial_id: impl Into<String>, label: AttackLabel, score: f64) {
        self.trials.push(Trial {
            trial_id: trial_id.into(),
            label,
            score,
        });
    }

    pub fn split(&self) -> (Vec<f64>, Vec<f64>) {
        let mut bona = Vec::new();
        let mut spoof = Vec::new();
        for t in &self.trials {
            if t.label.is_bonafide() {
                bona.push(t.score);
            } else {
                spoof.push(t.score);
            }
        }
        (bona, spoof)
    }

    pub fn attack_ids(&self) -> Vec<String> {
        let set: std::collections::BTreeSet<String> = self
            .trials
            .iter()
            .filter_map(|t| match &t.label {
                AttackLabel::Attack(id) => Some(id.clone()),
                AttackLabel::Bonafide => None,
            })
            .collect();
        set.into_iter().collect()
    }
}

/// The (threshold, miss-rate, false-accept-rate) sweep over all distinct
/// scores plus a reject-everything sentinel. FRR(t) counts bona fide below t;
/// FAR(t) counts spoof at or above t.
fn sweep_points(bona: &[f64], spoof: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut taus: Vec<f64> = bona.iter().chain(spoof).copied().collect();
    taus.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    taus.dedup();
    let sentinel = taus.last().expect("non-empty score set") + 1.0;
    taus.push(sentinel);
    let nb = bona.len() as f64;
    let ns = spoof.len() as f64;
    taus.into_iter()
        .map(|tau| {
            let frr = bona.iter().filter(|&&s| s < tau).count() as f64 / nb;
            let far = spoof.iter().filter(|&&s| s >= tau).count() as f64 / ns;
            (tau, frr, far)
        })
        .collect()
}

/// Locate the FRR/FAR crossing over sweep points with linear interpolation,
/// returning (eer, threshold). The first point always has FAR >= FRR and the
/// sentinel always has FAR <= FRR, so a crossing exists.
fn interpolate_crossing(points: &[(f64, f64, f64)]) -> (f64, f64) {
    for (k, &(tau, frr, far)) in points.iter().enumerate() {
        let d = far - frr;
        if d == 0.0 {
            return (frr, tau);
        }
        if d < 0.0 {
            // crossing lies between k-1 and k
            let (tau0, frr0, far0) = points[k - 1];
            let alpha = (far0 - frr0) / ((frr - frr0) - (far - far0));
            let eer = frr0 + alpha * (frr - frr0);
            let thr = tau0 + alpha * (tau - tau0);
            return (eer, thr);
        }
    }
    unreachable!("sentinel guarantees a sign change");
}

/// Equal error rate of a score set, with the crossing threshold.
pub fn compute_eer(scores: &ScoreSet) -> Result<(f64, f64)> {
    let (bona, spoof) = scores.split();
    if bona.is_empty() || spoof.is_empty() {
        return Err(Error::Metric(format!(
            "equal error rate needs both classes; got {} bona fide and {} spoof trials",
            bona.len(),
            spoof.len()
        )));
    }
    Ok(interpolate_crossing(&sweep_points(&bona, &spoof)))
}

/// Fixed ASV operating point and cost model for the tandem cost.
///
/// The bona-fide prior splits 99:1 between target and non-target speakers.
/// The two cost coefficients are
///   C1 = pi_tar * C_miss * (1 - P_miss_asv) - pi_non * C_fa * P_fa_asv
///   C2 = C_fa * pi_spoof * (1 - P_miss_spoof_asv)
/// and the normalized cost of a CM threshold t is
///   (C1 * P_miss_cm(t) + C2 * P_fa_cm(t)) / min(C1, C2),
/// so the better trivial CM (accept-all or reject-all) costs exactly 1.
#[derive(Debug, Clone, Copy)]
pub struct TdcfParams {
    pub prior_spoof: f64,
    /// ASV false-accept rate on non-targets.
    pub asv_false_accept: f64,
    /// ASV miss rate on targets.
    pub asv_miss: f64,
    /// ASV rejection rate on spoof trials that reach it.
    pub asv_spoof_miss: f64,
    pub cost_cm_miss: f64,
    pub cost_cm_false_accept: f64,
}

impl Default for TdcfParams {
    fn default() -> Self {
        Self {
            prior_spoof: 0.05,
            asv_false_accept: 0.05,
            asv_miss: 0.05,
            asv_spoof_miss: 0.25,
            cost_cm_miss: 1.0,
            cost_cm_false_accept: 10.0,
        }
    }
}

impl TdcfParams {
    pub fn coefficients(&self) -> Result<(f64, f64)> {
        for p in [
            self.prior_spoof,
            self.asv_false_accept,
            self.asv_miss,
            self.asv_spoof_miss,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Metric(format!("probability {p} outside [0, 1]")));
            }
        }
        if self.cost_cm_miss <= 0.0 || self.cost_cm_false_accept <= 0.0 {
            return Err(Error::Metric("costs must be positive".into()));
        }
        let pi_bona = 1.0 - self.prior_spoof;
        let pi_tar = pi_bona * 0.99;
        let pi_non = pi_bona * 0.01;
        let c1 = pi_tar * self.cost_cm_miss * (1.0 - self.asv_miss)
            - pi_non * self.cost_cm_false_accept * self.asv_false_accept;
        let c2 = self.cost_cm_false_accept * self.prior_spoof * (1.0 - self.asv_spoof_miss);
        if c1 <= 0.0 || c2 <= 0.0 {
            return Err(Error::Metric(format!(
                "degenerate cost normalization (C1 = {c1:.6}, C2 = {c2:.6})"
            )));
        }
        Ok((c1, c2))
    }
}

/// Minimum normalized tandem cost over all CM thresholds, with the argmin
/// threshold (lowest threshold on ties).
pub fn compute_min_tdcf(scores: &ScoreSet, params: &TdcfParams) -> Result<(f64, f64)> {
    let (bona, spoof) = scores.split();
    if bona.is_empty() || spoof.is_empty() {
        return Err(Error::Metric(
            "tandem cost needs both bona fide and spoof trials".into(),
        ));
    }
    let (c1, c2) = params.coefficients()?;
    let denom = c1.min(c2);
    let mut best = f64::INFINITY;
    let mut best_tau = f64::NAN;
    for (tau, pmiss, pfa) in sweep_points(&bona, &spoof) {
        let cost = (c1 * pmiss + c2 * pfa) / denom;
        if cost < best {
            best = cost;
            best_tau = tau;
        }
    }
    Ok((best, best_tau))
}

#[derive(Debug, Clone)]
pub struct BreakdownReport {
    /// (attack id, EER against all bona fide trials), one row per attack.
    pub per_attack: Vec<(String, f64)>,
    pub pooled_eer: f64,
    pub min_tdcf: f64,
    /// Expected attacks that had zero trials and were omitted.
    pub skipped: Vec<String>,
}

/// Per-attack EER over (all bona fide) + (that attack's trials), pooled EER
/// and min t-DCF over everything. `expected_attacks` lets the caller surface
/// attacks that produced no trials.
pub fn breakdown_report(
    scores: &ScoreSet,
    params: &TdcfParams,
    expected_attacks: Option<&[String]>,
) -> Result<BreakdownReport> {
    let present = scores.attack_ids();
    let mut skipped = Vec::new();
    if let Some(expected) = expected_attacks {
        for a in expected {
            if !present.contains(a) {
                skipped.push(a.clone());
            }
        }
    }
    let mut per_attack = Vec::new();
    for attack in &present {
        let subset: Vec<Trial> = scores
            .trials
            .iter()
            .filter(|t| match &t.label {
                AttackLabel::Bonafide => true,
                AttackLabel::Attack(id) => id == attack,
            })
            .cloned()
            .collect();
        let (eer, _) = compute_eer(&ScoreSet { trials: subset })?;
        per_attack.push((attack.clone(), eer));
    }
    let (pooled_eer, _) = compute_eer(scores)?;
    let (min_tdcf, _) = compute_min_tdcf(scores, params)?;
    Ok(BreakdownReport {
        per_attack,
        pooled_eer,
        min_tdcf,
        skipped,
    })
}

impl BreakdownReport {
    /// Aligned text table, one EER(%) column per attack plus the pooled
    /// min t-DCF and pooled EER columns.
    pub fn to_table(&self) -> String {
        let mut header = String::from("system");
        let mut row = String::from("cm    ");
        for (a, e) in &self.per_attack {
            let cell = format!("{:>8}", a);
            let val = format!("{:>8.2}", e * 100.0);
            header.push_str(&cell);
            row.push_str(&val);
        }
        header.push_str(&format!("{:>11}{:>12}", "min t-DCF", "pooled EER"));
        row.push_str(&format!(
            "{:>11.4}{:>12.2}",
            self.min_tdcf,
            self.pooled_eer * 100.0
        ));
        let mut out = String::new();
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "{row}");
        for s in &self.skipped {
            let _ = writeln!(out, "warning: attack {s} has zero trials; omitted");
        }
        out
    }

    /// Machine-readable CSV: one row per attack, then pooled rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("attack,eer_percent\n");
        for (a, e) in &self.per_attack {
            let _ = writeln!(out, "{a},{:.6}", e * 100.0);
        }
        let _ = writeln!(out, "pooled,{:.6}", self.pooled_eer * 100.0);
        let _ = writeln!(out, "min_tdcf,{:.6}", self.min_tdcf);
        out
    }
}

/// Score file: one `<trial_id> <attack_label> <score>` line per trial.
pub fn write_score_file(path: &Path, scores: &ScoreSet) -> Result<()> {
    let mut out = String::new();
    for t in &scores.trials {
        let _ = writeln!(out, "{} {} {:.6}", t.trial_id, t.label.as_str(), t.score);
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_score_file(path: &Path) -> Result<ScoreSet> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read scores {}: {e}", path.display())))?;
    let mut trials = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Data(format!(
                "score line {}: expected 3 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let label = if fields[1] == "bonafide" {
            AttackLabel::Bonafide
        } else {
            AttackLabel::Attack(fields[1].to_string())
        };
        let score: f64 = fields[2]
            .parse()
            .map_err(|e| Error::Data(format!("score line {}: {e}", lineno + 1)))?;
        trials.push(Trial {
            trial_id: fields[0].to_string(),
            label,
            score,
        });
    }
    ScoreSet::new(trials)
}

/// Group trial counts per attack id, mostly for report sanity checks.
pub fn attack_counts(scores: &ScoreSet) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for t in &scores.trials {
        if let AttackLabel::Attack(id) = &t.label {
            *m.entry(id.clone()).or_default() += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(bona: &[f64], spoof: &[f64]) -> ScoreSet {
        let mut s = ScoreSet::default();
        for (i, &v) in bona.iter().enumerate() {
            s.push(format!("b{i}"), AttackLabel::Bonafide, v);
        }
        for (i, &v) in spoof.iter().enumerate() {
            s.push(format!("s{i}"), AttackLabel::Attack("A01".into()), v);
        }
        s
    }

    #[test]
    fn perfectly_separated_scores_have_zero_eer() {
        let (eer, thr) = compute_eer(&set(&[0.9, 0.8], &[0.1, 0.2])).unwrap();
        assert_eq!(eer, 0.0);
        assert!(thr > 0.2 && thr <= 0.8);
    }

    #[test]
    fn perfectly_reversed_scores_have_eer_one() {
        let (eer, _) = compute_eer(&set(&[0.1], &[0.9])).unwrap();
        assert_eq!(eer, 1.0);
    }

    #[test]
    fn three_by_three_example_crosses_at_one_third() {
        // swept by hand: at threshold 0.5, FRR = FAR = 1/3
        let (eer, thr) = compute_eer(&set(&[0.2, 0.6, 0.8], &[0.1, 0.3, 0.5])).unwrap();
        assert!((eer - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(thr, 0.5);
    }

    #[test]
    fn one_class_input_is_an_error() {
        assert!(compute_eer(&set(&[0.5], &[])).is_err());
        assert!(compute_eer(&set(&[], &[0.5])).is_err());
    }

    #[test]
    fn zero_error_cm_has_zero_min_tdcf() {
        let (tdcf, _) =
            compute_min_tdcf(&set(&[0.9, 0.8], &[0.1, 0.2]), &TdcfParams::default()).unwrap();
        assert_eq!(tdcf, 0.0);
    }

    #[test]
    fn min_tdcf_never_exceeds_one() {
        // labels effectively shuffled: interleaved scores
        let bona: Vec<f64> = (0..50).map(|i| (i * 7 % 13) as f64).collect();
        let spoof: Vec<f64> = (0..50).map(|i| (i * 5 % 13) as f64).collect();
        let (tdcf, _) = compute_min_tdcf(&set(&bona, &spoof), &TdcfParams::default()).unwrap();
        assert!(tdcf <= 1.0);
        assert!(
            tdcf > 0.6,
            "shuffled scores should be near-worthless: {tdcf}"
        );
    }

    #[test]
    fn degenerate_params_are_rejected() {
        let p = TdcfParams {
            prior_spoof: 0.0,
            ..TdcfParams::default()
        };
        assert!(p.coefficients().is_err()); // C2 = 0
        let p = TdcfParams {
            cost_cm_miss: -1.0,
            ..TdcfParams::default()
        };
        assert!(p.coefficients().is_err());
    }

    #[test]
    fn breakdown_single_attack_row_equals_pooled() {
        let s = set(&[0.7, 0.9, 0.4], &[0.3, 0.5]);
        let rep = breakdown_report(&s, &TdcfParams::default(), None).unwrap();
        assert_eq!(rep.per_attack.len(), 1);
        assert_eq!(rep.per_attack[0].0, "A01");
        assert_eq!(rep.per_attack[0].1, rep.pooled_eer);
    }

    #[test]
    fn breakdown_separates_easy_and_confusable_attacks() {
        let mut s = ScoreSet::default();
        for i in 0..4 {
            s.push(
                format!("b{i}"),
                AttackLabel::Bonafide,
                0.8 + 0.01 * i as f64,
            );
        }
        // A01 perfectly detected (low scores), A02 perfectly reversed (high)
        for i in 0..4 {
            s.push(
                format!("e{i}"),
                AttackLabel::Attack("A01".into()),
                0.1 + 0.01 * i as f64,
            );
        }
        for i in 0..4 {
            s.push(
                format!("h{i}"),
                AttackLabel::Attack("A02".into()),
                0.9 + 0.01 * i as f64,
            );
        }
        let rep = breakdown_report(&s, &TdcfParams::default(), None).unwrap();
        let rows: BTreeMap<_, _> = rep.per_attack.iter().cloned().collect();
        assert_eq!(rows["A01"], 0.0);
        assert_eq!(rows["A02"], 1.0);
        assert!(rep.pooled_eer > 0.0 && rep.pooled_eer < 1.0);
    }

    #[test]
    fn report_layout_has_one_column_per_attack_plus_pooled_columns() {
        let mut s = set(&[0.9, 0.8, 0.7], &[0.2, 0.3]);
        s.push("x", AttackLabel::Attack("A07".into()), 0.1);
        let rep = breakdown_report(
            &s,
            &TdcfParams::default(),
            Some(&["A01".into(), "A07".into(), "A99".into()]),
        )
        .unwrap();
        let table = rep.to_table();
        assert!(table.contains("A01"));
        assert!(table.contains("A07"));
        assert!(table.contains("min t-DCF"));
        assert!(table.contains("pooled EER"));
        assert!(table.contains("A99 has zero trials"));
        let csv = rep.to_csv();
        assert!(csv.starts_with("attack,eer_percent"));
        assert!(csv.contains("pooled,"));
        assert!(csv.contains("min_tdcf,"));
        assert_eq!(rep.skipped, vec!["A99".to_string()]);
    }

    #[test]
    fn score_file_round_trip() {
        let s = set(&[0.5, 0.25], &[0.125]);
        let p = std::env::temp_dir().join(format!("rawspoof_scores_{}.txt", std::process::id()));
        write_score_file(&p, &s).unwrap();
        let back = read_score_file(&p).unwrap();
        assert_eq!(back.trials.len(), 3);
        assert_eq!(back.trials[0].trial_id, "b0");
        assert_eq!(back.trials[2].label, AttackLabel::Attack("A01".into()));
        assert!((back.trials[2].score - 0.125).abs() < 1e-9);
        std::fs::remove_file(&p).ok();
    }
}
