//! Metric invariants beyond the exact sweep-oracle agreement.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rawspoof_core::data::AttackLabel;
use rawspoof_core::metrics::{compute_eer, compute_min_tdcf, ScoreSet, TdcfParams};
use rawspoof_core::selfcheck::eer_by_exhaustive_sweep;

fn set_from(bona: &[f64], spoof: &[f64]) -> ScoreSet {
    let mut s = ScoreSet::default();
    for (i, &v) in bona.iter().enumerate() {
        s.push(format!("b{i}"), AttackLabel::Bonafide, v);
    }
    for (i, &v) in spoof.iter().enumerate() {
        s.push(format!("s{i}"), AttackLabel::Attack("A01".into()), v);
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// EER is invariant under any strictly increasing transform of scores.
    #[test]
    fn eer_invariant_under_monotone_transforms(
        bona in prop::collection::vec(-5.0f64..5.0, 1..40),
        spoof in prop::collection::vec(-5.0f64..5.0, 1..40),
        scale in 0.1f64..4.0,
        shift in -3.0f64..3.0,
    ) {
        let (base, _) = compute_eer(&set_from(&bona, &spoof)).unwrap();
        let affine = |v: f64| v * scale + shift;
        let (e1, _) = compute_eer(&set_from(
            &bona.iter().map(|&v| affine(v)).collect::<Vec<_>>(),
            &spoof.iter().map(|&v| affine(v)).collect::<Vec<_>>(),
        )).unwrap();
        prop_assert!((base - e1).abs() < 1e-12);
        // a nonlinear strictly increasing map
        let warp = |v: f64| v + v.tanh() * 2.0;
        let (e2, _) = compute_eer(&set_from(
            &bona.iter().map(|&v| warp(v)).collect::<Vec<_>>(),
            &spoof.iter().map(|&v| warp(v)).collect::<Vec<_>>(),
        )).unwrap();
        prop_assert!((base - e2).abs() < 1e-9);
    }

    /// EER stays in [0, 1]; min t-DCF stays in [0, 1].
    #[test]
    fn metric_ranges(
        bona in prop::collection::vec(-5.0f64..5.0, 1..30),
        spoof in prop::collection::vec(-5.0f64..5.0, 1..30),
    ) {
        let s = set_from(&bona, &spoof);
        let (eer, _) = compute_eer(&s).unwrap();
        prop_assert!((0.0..=1.0).contains(&eer));
        let (tdcf, _) = compute_min_tdcf(&s, &TdcfParams::default()).unwrap();
        prop_assert!((0.0..=1.0).contains(&tdcf));
    }
}

#[test]
fn label_swap_agrees_with_the_oracle_rather_than_a_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for _ in 0..50 {
        let nb = rng.random_range(2..30usize);
        let ns = rng.random_range(2..30usize);
        let bona: Vec<f64> = (0..nb).map(|_| rng.random_range(-2.0..2.0)).collect();
        let spoof: Vec<f64> = (0..ns).map(|_| rng.random_range(-2.0..2.0)).collect();
        // swapping class labels: the library must agree with the oracle on
        // the swapped problem (no closed-form relation is assumed)
        let (lib, _) = compute_eer(&set_from(&spoof, &bona)).unwrap();
        let (oracle, _) = eer_by_exhaustive_sweep(&spoof, &bona);
        assert_eq!(lib, oracle);
    }
}

#[test]
fn min_tdcf_never_increases_as_the_classes_separate() {
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    let bona: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
    let spoof: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
    let params = TdcfParams::default();
    let mut prev = f64::INFINITY;
    for sep in [0.0, 0.25, 0.5, 1.0, 2.0, 4.0] {
        let shifted: Vec<f64> = bona.iter().map(|v| v + sep).collect();
        let (tdcf, _) = compute_min_tdcf(&set_from(&shifted, &spoof), &params).unwrap();
        assert!(
            tdcf <= prev + 1e-12,
            "separation {sep}: cost rose from {prev} to {tdcf}"
        );
        prev = tdcf;
    }
}

#[test]
fn eer_threshold_sits_between_the_classes_for_separable_sets() {
    let (eer, thr) = compute_eer(&set_from(&[1.0, 1.2, 1.4], &[-0.5, -0.2, 0.1])).unwrap();
    assert_eq!(eer, 0.0);
    assert!(thr > 0.1 && thr <= 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Squared deviations of unit-interval scores from 0/1 targets average
    /// to something in [0, 1].
    #[test]
    fn relation_mse_is_bounded_for_unit_interval_scores(
        scores in prop::collection::vec(0.0f64..=1.0, 4..24),
        pattern in 0u8..8,
    ) {
        use rawspoof_core::losses::relation_mse_loss;
        use rawspoof_core::{Graph, Tensor};
        let n = scores.len() / 2 * 2;
        let t = Tensor::from_fn(&[n / 2, 2], |i| {
            if (i as u8) % 3 < pattern % 3 + 1 { 1.0 } else { 0.0 }
        });
        let mut g = Graph::new();
        let s = g.leaf(Tensor::new(vec![n / 2, 2], scores[..n].to_vec()).unwrap()).unwrap();
        let l = relation_mse_loss(&mut g, s, &t).unwrap();
        let v = g.item(l).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }
}
