//! Built-in verification suite: independent oracles for the closed-form
//! energy, the metric sweeps, and gradient checks over every differentiable
//! module. The oracles here deliberately avoid the library code paths they
//! check.

use crate::attention::{
    cbam_refine, se_refine, simam_energy, simam_refine, CbamVars, FeatureMap, SeVars, SimAmConfig,
};
use crate::encoder::{tiny_config, AttentionKind, EncoderParams, Phase};
use crate::episodic::{
    build_pairs, relation_score, sample_episode, ClassIndex, MatchGranularity, RelationNet,
};
use crate::error::Result;
use crate::graph::{grad_check_multi, Graph};
use crate::losses::{
    aam_loss, relation_mse_loss, total_loss, weighted_cross_entropy, AamConfig, AamHead,
    AamHeadVars,
};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimize the per-neuron regularized energy
///
///   f(w, b) = (1/M) sum_{i=1..M} (w x_i + b + 1)^2
///           + (w x_t + b - 1)^2 + lambda w^2
///
/// over (w, b) by plain gradient descent (curvature-bounded step with mild
/// decay), returning the final energy value evaluated by direct summation.
///
/// The negative-label sum runs over the whole channel with 1/M weight, the
/// convention under which the closed-form energy with channel-wide mean and
/// population variance is the exact minimizer (an M-1 "others only" sum and
/// the channel-wide statistics diverge for small M).
///
/// Runs at least `min_steps` steps (step size bounded by the quadratic's
/// curvature, mildly decayed), then keeps going until the energy stops
/// moving; near-uniform channels with a small regularizer are poorly
/// conditioned and can need a few hundred thousand steps.
pub fn energy_min_by_descent(channel: &[f64], t_idx: usize, lambda: f64, min_steps: usize) -> f64 {
    let m = channel.len();
    assert!(m >= 2 && t_idx < m);
    let t = channel[t_idx];
    let inv = 1.0 / m as f64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for &x in channel {
        s1 += x;
        s2 += x * x;
    }
    // constant Hessian entries of the quadratic
    let h_ww = 2.0 * inv * s2 + 2.0 * t * t + 2.0 * lambda;
    let h_bb = 4.0;
    let lr0 = 1.0 / (h_ww + h_bb);
    let energy = |w: f64, b: f64| {
        let mut f = (w * t + b - 1.0).powi(2) + lambda * w * w;
        for &x in channel {
            f += inv * (w * x + b + 1.0).powi(2);
        }
        f
    };
    let (mut w, mut b) = (0.0f64, 0.0f64);
    let cap = 2_000_000usize.max(min_steps);
    let chunk = 2_000usize;
    let mut f_prev = energy(w, b);
    let mut k = 0usize;
    while k < cap {
        for _ in 0..chunk {
            let decay = 1.0 - 0.5 * (k.min(min_steps) as f64) / min_steps as f64;
            let lr = lr0 * decay;
            let gw = 2.0 * inv * (w * s2 + (b + 1.0) * s1)
                + 2.0 * (w * t + b - 1.0) * t
                + 2.0 * lambda * w;
            let gb = 2.0 * (w * inv * s1 + b + 1.0) + 2.0 * (w * t + b - 1.0);
            w -= lr * gw;
            b -= lr * gb;
            k += 1;
        }
        let f_now = energy(w, b);
        if k >= min_steps && (f_prev - f_now).abs() < 1e-12 * f_now.abs().max(1.0) {
            break;
        }
        f_prev = f_now;
    }
    energy(w, b)
}

/// Exhaustive threshold sweep for the equal error rate: naive recounting at
/// every distinct score plus a reject-all sentinel, then the same
/// linear-interpolation crossing rule as the scorer.
pub fn eer_by_exhaustive_sweep(bona: &[f64], spoof: &[f64]) -> (f64, f64) {
    assert!(!bona.is_empty() && !spoof.is_empty());
    let mut taus: Vec<f64> = Vec::new();
    for &s in bona.iter().chain(spoof) {
        if !taus.contains(&s) {
            taus.push(s);
        }
    }
    taus.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let sentinel = taus[taus.len() - 1] + 1.0;
    taus.push(sentinel);
    let nb = bona.len() as f64;
    let ns = spoof.len() as f64;
    let rate = |tau: f64| -> (f64, f64) {
        let mut miss = 0usize;
        for &s in bona {
            if s < tau {
                miss += 1;
            }
        }
        let mut fa = 0usize;
        for &s in spoof {
            if s >= tau {
                fa += 1;
            }
        }
        (miss as f64 / nb, fa as f64 / ns)
    };
    let mut prev: Option<(f64, f64, f64)> = None;
    for &tau in &taus {
        let (frr, far) = rate(tau);
        let d = far - frr;
        if d == 0.0 {
            return (frr, tau);
        }
        if d < 0.0 {
            let (tau0, frr0, far0) = prev.expect("first point has far >= frr");
            let alpha = (far0 - frr0) / ((frr - frr0) - (far - far0));
            let eer = frr0 + alpha * (frr - frr0);
            let thr = tau0 + alpha * (tau - tau0);
            return (eer, thr);
        }
        prev = Some((tau, frr, far));
    }
    unreachable!("sentinel forces a crossing");
}

/// Exhaustive sweep for the minimum normalized tandem cost given the two
/// cost coefficients.
pub fn min_tdcf_by_exhaustive_sweep(bona: &[f64], spoof: &[f64], c1: f64, c2: f64) -> (f64, f64) {
    let mut taus: Vec<f64> = Vec::new();
    for &s in bona.iter().chain(spoof) {
        if !taus.contains(&s) {
            taus.push(s);
        }
    }
    taus.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    taus.push(taus[taus.len() - 1] + 1.0);
    let denom = c1.min(c2);
    let mut best = f64::INFINITY;
    let mut best_tau = f64::NAN;
    for &tau in &taus {
        let pmiss = bona.iter().filter(|&&s| s < tau).count() as f64 / bona.len() as f64;
        let pfa = spoof.iter().filter(|&&s| s >= tau).count() as f64 / spoof.len() as f64;
        let cost = (c1 * pmiss + c2 * pfa) / denom;
        if cost < best {
            best = cost;
            best_tau = tau;
        }
    }
    (best, best_tau)
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub tolerance: f64,
    pub measured: f64,
    pub pass: bool,
}

impl CheckResult {
    fn new(name: &str, tolerance: f64, measured: f64) -> Self {
        Self {
            name: name.to_string(),
            tolerance,
            measured,
            pass: measured <= tolerance,
        }
    }
}

fn grad_tol() -> f64 {
    1e-4
}

fn check_grad_simam() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let x = Tensor::<f64>::randn(&[2, 3, 4], 1.0, &mut rng);
    let err = grad_check_multi(
        |g, vars| {
            let fm = FeatureMap::new(g, vars[0])?;
            let y = simam_refine(g, &fm, &SimAmConfig::default())?;
            g.sum_all(y.var)
        },
        &[x],
        1e-5,
    )?;
    Ok(CheckResult::new(
        "gradient: energy attention refinement",
        grad_tol(),
        err,
    ))
}

fn check_grad_se() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let x = Tensor::<f64>::randn(&[3, 4, 5], 1.0, &mut rng);
    let w1 = Tensor::<f64>::randn(&[4, 2], 0.5, &mut rng);
    let b1 = Tensor::<f64>::randn(&[2], 0.5, &mut rng);
    let w2 = Tensor::<f64>::randn(&[2, 4], 0.5, &mut rng);
    let b2 = Tensor::<f64>::randn(&[4], 0.5, &mut rng);
    let err = grad_check_multi(
        |g, vars| {
            let fm = FeatureMap::new(g, vars[0])?;
            let p = SeVars {
                w1: vars[1],
                b1: vars[2],
                w2: vars[3],
                b2: vars[4],
            };
            let y = se_refine(g, &fm, &p)?;
            g.sum_all(y.var)
        },
        &[x, w1, b1, w2, b2],
        1e-5,
    )?;
    Ok(CheckResult::new(
        "gradient: squeeze-excite refinement",
        grad_tol(),
        err,
    ))
}

fn check_grad_cbam() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let x = Tensor::<f64>::randn(&[4, 3, 5], 1.0, &mut rng);
    let w1 = Tensor::<f64>::randn(&[4, 2], 0.5, &mut rng);
    let b1 = Tensor::<f64>::randn(&[2], 0.5, &mut rng);
    let w2 = Tensor::<f64>::randn(&[2, 4], 0.5, &mut rng);
    let b2 = Tensor::<f64>::randn(&[4], 0.5, &mut rng);
    let cw = Tensor::<f64>::randn(&[1, 2, 3, 3], 0.5, &mut rng);
    let cb = Tensor::<f64>::randn(&[1], 0.5, &mut rng);
    let err = grad_check_multi(
        |g, vars| {
            let fm = FeatureMap::new(g, vars[0])?;
            let p = CbamVars {
                w1: vars[1],
                b1: vars[2],
                w2: vars[3],
                b2: vars[4],
                conv_w: vars[5],
                conv_b: vars[6],
            };
            let y = cbam_refine(g, &fm, &p)?;
            g.sum_all(y.var)
        },
        &[x, w1, b1, w2, b2, cw, cb],
        1e-5,
    )?;
    Ok(CheckResult::new(
        "gradient: channel/frequency-temporal attention",
        grad_tol(),
        err,
    ))
}

fn check_grad_encoder() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let cfg = tiny_config(AttentionKind::SimAm);
    let enc = EncoderParams::<f64>::init(cfg.clone(), &mut rng)?;
    let wave = Tensor::<f64>::randn(&[cfg.segment_len], 0.2, &mut rng);
    let err = grad_check_multi(
        |g, vars| {
            let ev = enc.bind(g)?;
            let e = enc.forward(g, &ev, vars[0], Phase::Train, None)?;
            let sq = g.square(e.var)?;
            g.sum_all(sq)
        },
        &[wave],
        1e-5,
    )?;
    Ok(CheckResult::new(
        "gradient: tiny encoder end-to-end",
        grad_tol(),
        err,
    ))
}

fn check_grad_aam() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let emb = Tensor::<f64>::randn(&[3, 6], 1.0, &mut rng);
    let anchors = Tensor::<f64>::randn(&[6, 2], 1.0, &mut rng);
    let labels = [0usize, 1, 0];
    let err = grad_check_multi(
        |g, vars| {
            let head = AamHeadVars { weight: vars[1] };
            aam_loss(g, vars[0], &labels, &head, &AamConfig::default())
        },
        &[emb, anchors],
        1e-5,
    )?;
    Ok(CheckResult::new(
        "gradient: angular-margin loss",
        grad_tol(),
        err,
    ))
}

fn check_grad_relation_mse() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    // keep scores away from the [0,1] boundary so probes stay in range
    let scores = Tensor::<f64>::from_fn(&[4, 2], |_| 0.2 + 0.6 * rng.random::<f64>());
    let targets = Tensor::<f64>::from_fn(&[4, 2], |i| if i % 3 == 0 { 1.0 } else { 0.0 });
    let err = grad_check_multi(
        |g, vars| relation_mse_loss(g, vars[0], &targets),
        &[scores],
        1e-5,
    )?;
    Ok(CheckResult::new(
        "gradient: relation mse loss",
        grad_tol(),
        err,
    ))
}

fn check_grad_joint() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let dim = 5;
    let emb = Tensor::<f64>::randn(&[4, dim], 1.0, &mut rng);
    let anchors = Tensor::<f64>::randn(&[dim, 2], 1.0, &mut rng);
    let net = RelationNet::<f64>::init(dim, 4, &mut rng);
    // members: 2 support (spoof A01, genuine), 2 query (spoof A02, genuine)
    let episode = crate::episodic::Episode {
        support: vec![
            crate::episodic::EpisodeMember {
                record: 0,
                label: crate::episodic::MemberLabel::Spoof("A01".into()),
            },
            crate::episodic::EpisodeMember {
                record: 1,
                label: crate::episodic::MemberLabel::Genuine,
            },
        ],
        query: vec![
            crate::episodic::EpisodeMember {
                record: 2,
                label: crate::episodic::MemberLabel::Spoof("A02".into()),
            },
            crate::episodic::EpisodeMember {
                record: 3,
                label: crate::episodic::MemberLabel::Genuine,
            },
        ],
        held_out_type: "A02".into(),
        n: 2,
        k: 1,
    };
    let labels = [1usize, 0, 1, 0];
    let err = grad_check_multi(
        |g, vars| {
            let embs = vars[0];
            let head = AamHeadVars { weight: vars[1] };
            let l_aam = aam_loss(g, embs, &labels, &head, &AamConfig::default())?;
            let rows: Vec<_> = (0..4)
                .map(|i| {
                    let r = g.slice(embs, 0, i, 1)?;
                    g.reshape(r, &[dim])
                })
                .collect::<Result<_>>()?;
            let nv = net.bind(g, "relation")?;
            let (pairs, targets) = build_pairs(
                g,
                &episode,
                &rows[..2],
                &rows[2..],
                MatchGranularity::Binary,
            )?;
            let scores = relation_score(g, pairs, &nv, 2, 2)?;
            let l_mse = relation_mse_loss(g, scores, &targets)?;
            total_loss(g, l_aam, l_mse, 1.0)
        },
        &[emb, anchors],
        1e-5,
    )?;
    Ok(CheckResult::new(
        "gradient: joint objective",
        grad_tol(),
        err,
    ))
}

fn check_energy_closed_form(channels: usize, steps: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut worst: f64 = 0.0;
    for c in 0..channels {
        let m = 2 + (c % 15); // 2..=16 neurons
        let lambda = [1e-4, 1e-2, 1.0][c % 3];
        let vals: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let t = Tensor::new(vec![1, m, 1], vals.clone())?;
        let mut g = Graph::new();
        let x = g.constant(t)?;
        let fm = FeatureMap::new(&g, x)?;
        let e = simam_energy(&mut g, &fm, &SimAmConfig::new(lambda)?)?;
        let closed = g.value(e.var).data().to_vec();
        for (i, &cf) in closed.iter().enumerate() {
            let brute = energy_min_by_descent(&vals, i, lambda, steps);
            worst = worst.max((cf - brute).abs());
        }
    }
    Ok(CheckResult::new(
        "energy closed form vs gradient-descent minimum",
        1e-6,
        worst,
    ))
}

fn check_margin_free_degeneracy() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let cfg = AamConfig {
        scale: 7.5,
        margin_bonafide: 0.0,
        margin_spoof: 0.0,
        weight_bonafide: 1.0,
        weight_spoof: 1.0,
        conventional_weighting: false,
    };
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let b = 4;
        let emb = Tensor::<f64>::randn(&[b, 6], 1.0, &mut rng);
        let anchors = Tensor::<f64>::randn(&[6, 2], 1.0, &mut rng);
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..2usize)).collect();
        let head = AamHead {
            weight: anchors.clone(),
        };
        let mut g = Graph::new();
        let hv = head.bind(&mut g, "aam")?;
        let ev = g.leaf(emb.clone())?;
        let l1 = aam_loss(&mut g, ev, &labels, &hv, &cfg)?;
        let v1 = g.item(l1)?;

        let mut g = Graph::new();
        let ev = g.leaf(emb)?;
        let e2 = g.square(ev)?;
        let rn = g.sum_axes(e2, &[1], true)?;
        let rn = g.sqrt(rn)?;
        let eh = g.div(ev, rn)?;
        let av = g.leaf(anchors)?;
        let a2 = g.square(av)?;
        let cn = g.sum_axes(a2, &[0], true)?;
        let cn = g.sqrt(cn)?;
        let ah = g.div(av, cn)?;
        let cosines = g.matmul(eh, ah)?;
        let scaled = g.scale(cosines, cfg.scale)?;
        let l2 = weighted_cross_entropy(&mut g, scaled, &labels, (1.0, 1.0))?;
        let v2 = g.item(l2)?;
        worst = worst.max((v1 - v2).abs());
    }
    Ok(CheckResult::new(
        "margin-free loss equals cosine cross-entropy",
        1e-10,
        worst,
    ))
}

fn check_episode_combinatorics() -> Result<CheckResult> {
    let mut violations = 0usize;
    for n in 2..=4usize {
        for k in 1..=2usize {
            let mut idx = ClassIndex::default();
            let mut next = 0usize;
            for t in 0..n {
                idx.attacks.insert(
                    format!("A{:02}", t + 1),
                    (0..k + 2)
                        .map(|_| {
                            next += 1;
                            next
                        })
                        .collect(),
                );
            }
            idx.genuine = (0..2 * k + 2)
                .map(|_| {
                    next += 1;
                    next
                })
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(110 + (n * 10 + k) as u64);
            for _ in 0..200 {
                let ep = sample_episode(&idx, n, k, &mut rng)?;
                if ep.support.len() != n * k
                    || ep.query.len() != 2 * k
                    || ep.pair_count() != 2 * n * k * k
                {
                    violations += 1;
                }
                if ep.support.iter().any(|m| {
                    m.label == crate::episodic::MemberLabel::Spoof(ep.held_out_type.clone())
                }) {
                    violations += 1;
                }
                let mut seen = std::collections::HashSet::new();
                if !ep
                    .support
                    .iter()
                    .chain(&ep.query)
                    .all(|m| seen.insert(m.record))
                {
                    violations += 1;
                }
            }
        }
    }
    Ok(CheckResult::new(
        "episode combinatorics",
        0.0,
        violations as f64,
    ))
}

fn check_eer_oracle() -> Result<CheckResult> {
    use crate::data::AttackLabel;
    use crate::metrics::{compute_eer, ScoreSet};
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let nb = rng.random_range(1..60usize);
        let ns = rng.random_range(1..60usize);
        let quantize = rng.random::<f64>() < 0.5;
        let draw = |rng: &mut ChaCha8Rng| {
            let v: f64 = rng.random_range(-3.0..3.0);
            if quantize {
                (v * 4.0).round() / 4.0 // force ties
            } else {
                v
            }
        };
        let bona: Vec<f64> = (0..nb).map(|_| draw(&mut rng)).collect();
        let spoof: Vec<f64> = (0..ns).map(|_| draw(&mut rng)).collect();
        let mut set = ScoreSet::default();
        for (i, &v) in bona.iter().enumerate() {
            set.push(format!("b{i}"), AttackLabel::Bonafide, v);
        }
        for (i, &v) in spoof.iter().enumerate() {
            set.push(format!("s{i}"), AttackLabel::Attack("A01".into()), v);
        }
        let (eer, thr) = compute_eer(&set)?;
        let (oe, ot) = eer_by_exhaustive_sweep(&bona, &spoof);
        worst = worst.max((eer - oe).abs()).max((thr - ot).abs());
    }
    Ok(CheckResult::new("eer equals exhaustive sweep", 0.0, worst))
}

fn check_tdcf_oracle() -> Result<CheckResult> {
    use crate::data::AttackLabel;
    use crate::metrics::{compute_min_tdcf, ScoreSet, TdcfParams};
    let mut rng = ChaCha8Rng::seed_from_u64(112);
    let params = TdcfParams::default();
    let (c1, c2) = params.coefficients()?;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let nb = rng.random_range(1..50usize);
        let ns = rng.random_range(1..50usize);
        let bona: Vec<f64> = (0..nb).map(|_| rng.random_range(-2.0..2.0)).collect();
        let spoof: Vec<f64> = (0..ns).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut set = ScoreSet::default();
        for (i, &v) in bona.iter().enumerate() {
            set.push(format!("b{i}"), AttackLabel::Bonafide, v);
        }
        for (i, &v) in spoof.iter().enumerate() {
            set.push(format!("s{i}"), AttackLabel::Attack("A01".into()), v);
        }
        let (tdcf, _) = compute_min_tdcf(&set, &params)?;
        let (ot, _) = min_tdcf_by_exhaustive_sweep(&bona, &spoof, c1, c2);
        worst = worst.max((tdcf - ot).abs());
    }
    Ok(CheckResult::new(
        "min t-dcf equals exhaustive sweep",
        1e-12,
        worst,
    ))
}

/// Run every check; failures are entries, not errors.
pub fn run_selfcheck() -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_grad_simam()?,
        check_grad_se()?,
        check_grad_cbam()?,
        check_grad_encoder()?,
        check_grad_aam()?,
        check_grad_relation_mse()?,
        check_grad_joint()?,
        check_energy_closed_form(20, 10_000)?,
        check_margin_free_degeneracy()?,
        check_episode_combinatorics()?,
        check_eer_oracle()?,
        check_tdcf_oracle()?,
    ])
}

/// Render one line per check.
pub fn format_report(results: &[CheckResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&format!(
            "[{}] {:<48} measured {:>12.3e}  tolerance {:>8.1e}\n",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.measured,
            r.tolerance
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descent_oracle_matches_closed_form_on_a_hand_case() {
        // channel [0,0,0,4], lambda 1e-4: closed form gives ~0.8 and ~1.7143
        let ch = [0.0, 0.0, 0.0, 4.0];
        let e_out = energy_min_by_descent(&ch, 3, 1e-4, 20_000);
        let e_zero = energy_min_by_descent(&ch, 0, 1e-4, 20_000);
        assert!((e_out - 4.0 * (3.0 + 1e-4) / (9.0 + 6.0 + 2e-4)).abs() < 1e-6);
        assert!((e_zero - 4.0 * (3.0 + 1e-4) / (1.0 + 6.0 + 2e-4)).abs() < 1e-6);
    }

    #[test]
    fn uniform_channel_descent_stays_at_two() {
        let ch = [0.7; 6];
        for &l in &[1e-4, 1e-2, 1.0] {
            assert!((energy_min_by_descent(&ch, 2, l, 5_000) - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sweep_oracle_handles_the_hand_cases() {
        let (eer, thr) = eer_by_exhaustive_sweep(&[0.2, 0.6, 0.8], &[0.1, 0.3, 0.5]);
        assert!((eer - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(thr, 0.5);
        let (eer, _) = eer_by_exhaustive_sweep(&[0.9, 0.8], &[0.1, 0.2]);
        assert_eq!(eer, 0.0);
        let (eer, _) = eer_by_exhaustive_sweep(&[0.1], &[0.9]);
        assert_eq!(eer, 1.0);
    }
}
