//! Episodic sampling and the relation network: each episode holds one
//! spoofing type out of the support set and scores every support/query
//! embedding pair with a learned comparator.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::Rng;
use std::collections::BTreeMap;

/// Class label of one episode member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemberLabel {
    Genuine,
    Spoof(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeMember {
    /// Index into the corpus the episode was sampled from.
    pub record: usize,
    pub label: MemberLabel,
}

/// One meta-learning subtask: NK support members ((N-1)K spoof of the kept
/// types + K genuine) and 2K query members (K spoof of the held-out type +
/// K genuine), disjoint by record.
#[derive(Debug, Clone)]
pub struct Episode {
    pub support: Vec<EpisodeMember>,
    pub query: Vec<EpisodeMember>,
    pub held_out_type: String,
    pub n: usize,
    pub k: usize,
}

impl Episode {
    pub fn pair_count(&self) -> usize {
        self.support.len() * self.query.len()
    }
}

/// Record indices grouped by class, deterministic iteration order.
#[derive(Debug, Clone, Default)]
pub struct ClassIndex {
    pub genuine: Vec<usize>,
    pub attacks: BTreeMap<String, Vec<usize>>,
}

impl ClassIndex {
    pub fn attack_types(&self) -> Vec<String> {
        self.attacks.keys().cloned().collect()
    }
}

/// Whether two spoof members of different attack types count as a match.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchGranularity {
    /// Bona fide vs spoof only: any spoof matches any spoof.
    Binary,
    /// Spoof pairs match only when the attack type agrees.
    PerType,
}

impl MatchGranularity {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Self::Binary),
            "per_type" => Ok(Self::PerType),
            other => Err(Error::Config(format!(
                "unknown match granularity '{other}' (expected binary|per_type)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Binary => "binary",
            Self::PerType => "per_type",
        }
    }

    fn matches(&self, a: &MemberLabel, b: &MemberLabel) -> bool {
        match (a, b) {
            (MemberLabel::Genuine, MemberLabel::Genuine) => true,
            (MemberLabel::Spoof(x), MemberLabel::Spoof(y)) => match self {
                Self::Binary => true,
                Self::PerType => x == y,
            },
            _ => false,
        }
    }
}

fn sample_without_replacement(
    pool: &[usize],
    count: usize,
    label: &str,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    if pool.len() < count {
        return Err(Error::InsufficientSamples {
            label: label.to_string(),
            needed: count,
            available: pool.len(),
        });
    }
    // partial Fisher-Yates over a copy
    let mut ids = pool.to_vec();
    let mut picked = Vec::with_capacity(count);
    for i in 0..count {
        let j = i + rng.random_range(0..ids.len() - i);
        ids.swap(i, j);
        picked.push(ids[i]);
    }
    Ok(picked)
}

/// Draw one episode: choose N attack types (all of them when the corpus has
/// exactly N), hold one out uniformly at random for the query, then sample K
/// spoof records per kept type, K of the held-out type, and 2K genuine
/// records split evenly between support and query.
pub fn sample_episode(
    index: &ClassIndex,
    n: usize,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Episode> {
    if n < 2 || k == 0 {
        return Err(Error::Config(format!(
            "episodes need at least 2 attack types and k >= 1, got n={n} k={k}"
        )));
    }
    let types = index.attack_types();
    if types.len() < n {
        return Err(Error::InsufficientSamples {
            label: "attack types".into(),
            needed: n,
            available: types.len(),
        });
    }
    for t in &types {
        if index.attacks[t].len() < k {
            return Err(Error::InsufficientSamples {
                label: t.clone(),
                needed: k,
                available: index.attacks[t].len(),
            });
        }
    }
    if index.genuine.len() < 2 * k {
        return Err(Error::InsufficientSamples {
            label: "genuine".into(),
            needed: 2 * k,
            available: index.genuine.len(),
        });
    }
    let type_ids: Vec<usize> = (0..types.len()).collect();
    let chosen = sample_without_replacement(&type_ids, n, "attack types", rng)?;
    let held_idx = chosen[rng.random_range(0..n)];
    let held_out_type = types[held_idx].clone();

    let mut support = Vec::with_capacity(n * k);
    for &t in &chosen {
        if t == held_idx {
            continue;
        }
        let name = &types[t];
        for r in sample_without_replacement(&index.attacks[name], k, name, rng)? {
            support.push(EpisodeMember {
                record: r,
                label: MemberLabel::Spoof(name.clone()),
            });
        }
    }
    let genuine = sample_without_replacement(&index.genuine, 2 * k, "genuine", rng)?;
    for &r in &genuine[..k] {
        support.push(EpisodeMember {
            record: r,
            label: MemberLabel::Genuine,
        });
    }
    let mut query = Vec::with_capacity(2 * k);
    for r in sample_without_replacement(&index.attacks[&held_out_type], k, &held_out_type, rng)? {
        query.push(EpisodeMember {
            record: r,
            label: MemberLabel::Spoof(held_out_type.clone()),
        });
    }
    for &r in &genuine[k..] {
        query.push(EpisodeMember {
            record: r,
            label: MemberLabel::Genuine,
        });
    }
    Ok(Episode {
        support,
        query,
        held_out_type,
        n,
        k,
    })
}

/// Concatenate every (support, query) embedding pair into one
/// (NK * 2K) x (2 d) matrix, support embedding first, along with the 0/1
/// match-indicator target matrix of shape NK x 2K.
pub fn build_pairs<S: Scalar>(
    g: &mut Graph<S>,
    episode: &Episode,
    support_embs: &[Var],
    query_embs: &[Var],
    granularity: MatchGranularity,
) -> Result<(Var, Tensor<S>)> {
    if support_embs.len() != episode.support.len() || query_embs.len() != episode.query.len() {
        return Err(Error::Shape {
            op: "build_pairs",
            msg: format!(
                "episode has {} support / {} query members but {} / {} embeddings were given",
                episode.support.len(),
                episode.query.len(),
                support_embs.len(),
                query_embs.len()
            ),
        });
    }
    let d = g.shape(support_embs[0]).to_vec();
    if d.len() != 1 {
        return Err(Error::Shape {
            op: "build_pairs",
            msg: format!("embeddings must be vectors, got {:?}", d),
        });
    }
    let dim = d[0];
    let mut rows = Vec::with_capacity(episode.pair_count());
    for &s in support_embs {
        for &q in query_embs {
            let pair = g.concat(0, &[s, q])?;
            rows.push(g.reshape(pair, &[1, 2 * dim])?);
        }
    }
    let pairs = g.concat(0, &rows)?;
    let nk = episode.support.len();
    let qk = episode.query.len();
    let targets = Tensor::from_fn(&[nk, qk], |i| {
        let si = i / qk;
        let qi = i % qk;
        if granularity.matches(&episode.support[si].label, &episode.query[qi].label) {
            S::one()
        } else {
            S::zero()
        }
    });
    Ok((pairs, targets))
}

/// Two fully connected layers over a concatenated embedding pair, sigmoid
/// output in (0, 1).
#[derive(Debug, Clone)]
pub struct RelationNet<S> {
    pub w1: Tensor<S>, // 2d x hidden
    pub b1: Tensor<S>,
    pub w2: Tensor<S>, // hidden x 1
    pub b2: Tensor<S>,
}

pub struct RelationVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl<S: Scalar> RelationNet<S> {
    pub fn init(embed_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let input = 2 * embed_dim;
        Self {
            w1: Tensor::randn(&[input, hidden], 1.0 / (input as f64).sqrt(), rng),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::randn(&[hidden, 1], 1.0 / (hidden as f64).sqrt(), rng),
            b2: Tensor::zeros(&[1]),
        }
    }

    pub fn bind(&self, g: &mut Graph<S>, prefix: &str) -> Result<RelationVars> {
        Ok(RelationVars {
            w1: g.param(format!("{prefix}.w1"), self.w1.clone())?,
            b1: g.param(format!("{prefix}.b1"), self.b1.clone())?,
            w2: g.param(format!("{prefix}.w2"), self.w2.clone())?,
            b2: g.param(format!("{prefix}.b2"), self.b2.clone())?,
        })
    }

    pub fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<S>)>) {
        out.push((format!("{prefix}.w1"), &self.w1));
        out.push((format!("{prefix}.b1"), &self.b1));
        out.push((format!("{prefix}.w2"), &self.w2));
        out.push((format!("{prefix}.b2"), &self.b2));
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<S>)>) {
        out.push((format!("{prefix}.w1"), &mut self.w1));
        out.push((format!("{prefix}.b1"), &mut self.b1));
        out.push((format!("{prefix}.w2"), &mut self.w2));
        out.push((format!("{prefix}.b2"), &mut self.b2));
    }
}

/// Score every pair row, reshaped to a `rows x cols` matrix (support-major).
pub fn relation_score<S: Scalar>(
    g: &mut Graph<S>,
    pairs: Var,
    net: &RelationVars,
    rows: usize,
    cols: usize,
) -> Result<Var> {
    let psh = g.shape(pairs).to_vec();
    let d_in = g.shape(net.w1)[0];
    if psh.len() != 2 || psh[1] != d_in {
        return Err(Error::Shape {
            op: "relation_score",
            msg: format!("pair matrix {:?} does not match input dim {}", psh, d_in),
        });
    }
    if psh[0] != rows * cols {
        return Err(Error::Shape {
            op: "relation_score",
            msg: format!("{} pairs cannot reshape to {}x{}", psh[0], rows, cols),
        });
    }
    let z = g.linear(pairs, net.w1, Some(net.b1))?;
    let z = g.selu(z)?;
    let z = g.linear(z, net.w2, Some(net.b2))?;
    let s = g.sigmoid(z)?;
    g.reshape(s, &[rows, cols])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// n_types attacks with per_type records each, plus genuine records.
    fn toy_index(n_types: usize, per_type: usize, genuine: usize) -> ClassIndex {
        let mut idx = ClassIndex::default();
        let mut next = 0;
        for t in 0..n_types {
            let ids: Vec<usize> = (0..per_type)
                .map(|_| {
                    next += 1;
                    next
                })
                .collect();
            idx.attacks.insert(format!("A{:02}", t + 1), ids);
        }
        idx.genuine = (0..genuine)
            .map(|_| {
                next += 1;
                next
            })
            .collect();
        idx
    }

    #[test]
    fn episode_sizes_match_the_sampling_scheme() {
        let idx = toy_index(6, 5, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let ep = sample_episode(&idx, 6, 2, &mut rng).unwrap();
        assert_eq!(ep.support.len(), 12); // NK
        assert_eq!(ep.query.len(), 4); // 2K
        assert_eq!(ep.pair_count(), 48); // 2NK^2

        let ep = sample_episode(&toy_index(2, 3, 4), 2, 1, &mut rng).unwrap();
        assert_eq!(ep.support.len(), 2);
        assert_eq!(ep.query.len(), 2);
        assert_eq!(ep.pair_count(), 4);
    }

    #[test]
    fn held_out_type_is_absent_from_support_and_no_record_repeats() {
        let idx = toy_index(5, 4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        for _ in 0..500 {
            let ep = sample_episode(&idx, 5, 2, &mut rng).unwrap();
            for m in &ep.support {
                assert_ne!(m.label, MemberLabel::Spoof(ep.held_out_type.clone()));
            }
            let mut seen = std::collections::HashSet::new();
            for m in ep.support.iter().chain(&ep.query) {
                assert!(seen.insert(m.record), "record {} appears twice", m.record);
            }
        }
    }

    #[test]
    fn every_type_is_held_out_with_frequency_about_one_over_n() {
        let idx = toy_index(6, 3, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let trials = 1000;
        for _ in 0..trials {
            let ep = sample_episode(&idx, 6, 1, &mut rng).unwrap();
            *counts.entry(ep.held_out_type).or_default() += 1;
        }
        for (t, c) in counts {
            let freq = c as f64 / trials as f64;
            assert!(
                (freq - 1.0 / 6.0).abs() < 0.05,
                "type {t} held out with frequency {freq}"
            );
        }
    }

    #[test]
    fn insufficient_samples_error_names_the_type() {
        let mut idx = toy_index(3, 3, 6);
        idx.attacks.insert("A02".into(), vec![900]); // only one record
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let err = sample_episode(&idx, 3, 2, &mut rng)
            .unwrap_err()
            .to_string();
        assert!(err.contains("A02"), "{err}");
    }

    #[test]
    fn sampling_is_reproducible_under_a_fixed_seed() {
        let idx = toy_index(4, 4, 8);
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(55);
            (0..20)
                .map(|_| sample_episode(&idx, 4, 2, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        let a = draw();
        let b = draw();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.support, y.support);
            assert_eq!(x.query, y.query);
            assert_eq!(x.held_out_type, y.held_out_type);
        }
    }

    fn two_by_one_episode() -> Episode {
        Episode {
            support: vec![
                EpisodeMember {
                    record: 0,
                    label: MemberLabel::Spoof("A01".into()),
                },
                EpisodeMember {
                    record: 1,
                    label: MemberLabel::Genuine,
                },
            ],
            query: vec![
                EpisodeMember {
                    record: 2,
                    label: MemberLabel::Spoof("A02".into()),
                },
                EpisodeMember {
                    record: 3,
                    label: MemberLabel::Genuine,
                },
            ],
            held_out_type: "A02".into(),
            n: 2,
            k: 1,
        }
    }

    #[test]
    fn pair_matrix_and_binary_targets_match_exhaustive_enumeration() {
        let ep = two_by_one_episode();
        let mut g = Graph::<f64>::new();
        let embs: Vec<Var> = (0..4)
            .map(|i| {
                g.leaf(Tensor::from_vec(vec![i as f64, 10.0 + i as f64]))
                    .unwrap()
            })
            .collect();
        let (pairs, targets) = build_pairs(
            &mut g,
            &ep,
            &embs[..2],
            &embs[2..],
            MatchGranularity::Binary,
        )
        .unwrap();
        assert_eq!(g.shape(pairs), &[4, 4]);
        // support-major enumeration: (s0,q0), (s0,q1), (s1,q0), (s1,q1)
        let want = [
            [0.0, 10.0, 2.0, 12.0],
            [0.0, 10.0, 3.0, 13.0],
            [1.0, 11.0, 2.0, 12.0],
            [1.0, 11.0, 3.0, 13.0],
        ];
        for (i, row) in want.iter().enumerate() {
            assert_eq!(&g.value(pairs).data()[i * 4..(i + 1) * 4], row);
        }
        // spoof-spoof and genuine-genuine match under binary labels: 2 of 4
        assert_eq!(targets.data(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(targets.data().iter().filter(|&&v| v == 1.0).count(), 2);

        let (_, per_type) = build_pairs(
            &mut g,
            &ep,
            &embs[..2],
            &embs[2..],
            MatchGranularity::PerType,
        )
        .unwrap();
        // held-out type never appears in support, so only genuine-genuine matches
        assert_eq!(per_type.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn zeroed_relation_net_scores_half_everywhere() {
        let ep = two_by_one_episode();
        let mut g = Graph::<f64>::new();
        let embs: Vec<Var> = (0..4)
            .map(|i| g.leaf(Tensor::full(&[3], i as f64)).unwrap())
            .collect();
        let (pairs, _) = build_pairs(
            &mut g,
            &ep,
            &embs[..2],
            &embs[2..],
            MatchGranularity::Binary,
        )
        .unwrap();
        let net = RelationNet {
            w1: Tensor::zeros(&[6, 4]),
            b1: Tensor::zeros(&[4]),
            w2: Tensor::zeros(&[4, 1]),
            b2: Tensor::zeros(&[1]),
        };
        let nv = net.bind(&mut g, "relation").unwrap();
        let s = relation_score(&mut g, pairs, &nv, 2, 2).unwrap();
        assert_eq!(g.shape(s), &[2, 2]);
        for &v in g.value(s).data() {
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn relation_scores_stay_in_open_unit_interval_and_match_scalar_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        let net = RelationNet::<f64>::init(3, 5, &mut rng);
        let ep = two_by_one_episode();
        let mut g = Graph::new();
        let emb_vals: Vec<Vec<f64>> = (0..4)
            .map(|_| Tensor::<f64>::randn(&[3], 1.0, &mut rng).into_data())
            .collect();
        let embs: Vec<Var> = emb_vals
            .iter()
            .map(|v| g.leaf(Tensor::from_vec(v.clone())).unwrap())
            .collect();
        let (pairs, _) = build_pairs(
            &mut g,
            &ep,
            &embs[..2],
            &embs[2..],
            MatchGranularity::Binary,
        )
        .unwrap();
        let nv = net.bind(&mut g, "relation").unwrap();
        let s = relation_score(&mut g, pairs, &nv, 2, 2).unwrap();
        let got = g.value(s).data().to_vec();

        // independent scalar forward
        let selu = |x: f64| {
            let (a, l) = (1.6732632423543772, 1.0507009873554805);
            if x > 0.0 {
                l * x
            } else {
                l * a * (x.exp() - 1.0)
            }
        };
        let mut want = Vec::new();
        for si in 0..2 {
            for qi in 0..2 {
                let mut pair = emb_vals[si].clone();
                pair.extend_from_slice(&emb_vals[2 + qi]);
                let mut h = vec![0.0; 5];
                for j in 0..5 {
                    let mut acc = net.b1.data()[j];
                    for (i, &x) in pair.iter().enumerate() {
                        acc += x * net.w1.data()[i * 5 + j];
                    }
                    h[j] = selu(acc);
                }
                let mut z = net.b2.data()[0];
                for (j, &hj) in h.iter().enumerate() {
                    z += hj * net.w2.data()[j];
                }
                want.push(1.0 / (1.0 + (-z).exp()));
            }
        }
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
            assert!(*a > 0.0 && *a < 1.0);
        }
    }
}
