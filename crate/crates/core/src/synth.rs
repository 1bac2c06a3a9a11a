//! Synthetic knowledge-graph pairs with a known concept correspondence.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kg::{KnowledgeGraph, Triplet};

pub const COVERAGE_MEAN: f64 = 0.5;
pub const COVERAGE_MIN: f64 = 0.05;
pub const COVERAGE_MAX: f64 = 1.0;

/// One point of the synthetic sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub entities: usize,
    pub relation_proportion: f64,
    pub triplet_proportion: f64,
    /// `None` is the uniform baseline; `Some(alpha)` draws per-relation coverage.
    pub alpha: Option<f64>,
    /// Concepts in the network graph per human concept.
    pub nn_concept_ratio: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            entities: 20,
            relation_proportion: 0.2,
            triplet_proportion: 0.2,
            alpha: None,
            nn_concept_ratio: 1.0,
        }
    }
}

/// Non-negative rounding with halves going up.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Variance of the coverage distribution for a given alpha.
pub fn coverage_variance(alpha: f64) -> f64 {
    0.1 * (1.0 - alpha) + 0.01 * alpha
}

/// One clipped coverage draw.
pub fn draw_coverage<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let normal = Normal::new(COVERAGE_MEAN, coverage_variance(alpha).sqrt())
        .expect("variance is positive for alpha in (0, 1)");
    normal.sample(rng).clamp(COVERAGE_MIN, COVERAGE_MAX)
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.entities < 2 {
            return Err(invalid("synthetic graphs need at least 2 entities"));
        }
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.relation_proportion) || !unit(self.triplet_proportion) {
            return Err(invalid("proportions must lie in (0, 1]"));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(invalid(format!("alpha {a} outside (0, 1)")));
            }
        }
        if !(self.nn_concept_ratio >= 1.0) || !self.nn_concept_ratio.is_finite() {
            return Err(invalid("concept ratio must be at least 1"));
        }
        if self.n_relations() == 0 {
            return Err(invalid("relation proportion yields no relations"));
        }
        Ok(())
    }

    pub fn n_relations(&self) -> usize {
        round_half_up(self.entities as f64 * self.relation_proportion)
    }

    /// Triplets per relation in the uniform case.
    pub fn per_relation_budget(&self) -> f64 {
        self.triplet_proportion * (self.entities * self.entities) as f64
    }
}

/// Human graph, network graph, and the correspondence between them.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPair {
    pub kg_g: KnowledgeGraph,
    pub kg_nn: KnowledgeGraph,
    /// `entity_map[g] = nn` for every human entity.
    pub entity_map: Vec<usize>,
    /// `relation_map[g] = nn` for every human relation.
    pub relation_map: Vec<usize>,
}

pub fn generate_synthetic_kg(spec: &SynthSpec, seed: u64) -> Result<SyntheticPair> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_e = spec.entities;
    let n_r = spec.n_relations();
    let cells = n_e * n_e;

    let mut triplets = BTreeSet::new();
    for r in 0..n_r {
        let count = match spec.alpha {
            None => round_half_up(spec.per_relation_budget()),
            Some(a) => round_half_up(draw_coverage(a, &mut rng) * spec.per_relation_budget()),
        }
        .clamp(1, cells);
        for cell in sample(&mut rng, cells, count) {
            triplets.insert(Triplet::new(cell / n_e, r, cell % n_e));
        }
    }
    let density = triplets.len() as f64 / (cells * n_r) as f64;

    // Surplus concepts live after the shared ones until the final shuffle.
    let extra_e = round_half_up((spec.nn_concept_ratio - 1.0) * n_e as f64);
    let extra_r = round_half_up((spec.nn_concept_ratio - 1.0) * n_r as f64);
    let mut nn_triplets: Vec<Triplet> = triplets.iter().copied().collect();
    let mut e_now = n_e;
    for _ in 0..extra_e {
        let e = e_now;
        e_now += 1;
        // Cells touching `e` in any current relation.
        let mut fresh = Vec::new();
        for r in 0..n_r {
            for x in 0..e_now {
                fresh.push(Triplet::new(e, r, x));
                if x != e {
                    fresh.push(Triplet::new(x, r, e));
                }
            }
        }
        let k = round_half_up(density * fresh.len() as f64);
        nn_triplets.extend(sample(&mut rng, fresh.len(), k).into_iter().map(|i| fresh[i]));
    }
    let total_e = e_now;
    for r in n_r..n_r + extra_r {
        let k = round_half_up(density * (total_e * total_e) as f64);
        for cell in sample(&mut rng, total_e * total_e, k) {
            nn_triplets.push(Triplet::new(cell / total_e, r, cell % total_e));
        }
    }
    let total_r = n_r + extra_r;

    let mut e_perm: Vec<usize> = (0..total_e).collect();
    e_perm.shuffle(&mut rng);
    let mut r_perm: Vec<usize> = (0..total_r).collect();
    r_perm.shuffle(&mut rng);

    let kg_g = KnowledgeGraph::new(
        (0..n_e).map(|i| format!("e{i}")).collect(),
        (0..n_r).map(|i| format!("r{i}")).collect(),
        triplets,
    )?;
    let kg_nn = KnowledgeGraph::new(
        (0..total_e).map(|i| format!("x{i}")).collect(),
        (0..total_r).map(|i| format!("q{i}")).collect(),
        nn_triplets
            .into_iter()
            .map(|t| Triplet::new(e_perm[t.head], r_perm[t.relation], e_perm[t.tail])),
    )?;
    Ok(SyntheticPair {
        kg_g,
        kg_nn,
        entity_map: e_perm[..n_e].to_vec(),
        relation_map: r_perm[..n_r].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_320_triplets() {
        let p = generate_synthetic_kg(&SynthSpec::default(), 7).unwrap();
        assert_eq!(p.kg_g.n_entities(), 20);
        assert_eq!(p.kg_g.n_relations(), 4);
        assert_eq!(p.kg_g.len(), 320);
    }

    #[test]
    fn ratio_one_is_a_relabeled_copy() {
        let p = generate_synthetic_kg(&SynthSpec::default(), 3).unwrap();
        assert_eq!(p.kg_nn.n_entities(), 20);
        assert_eq!(p.kg_nn.n_relations(), 4);
        let mapped: BTreeSet<Triplet> = p
            .kg_g
            .triplets()
            .map(|t| {
                Triplet::new(
                    p.entity_map[t.head],
                    p.relation_map[t.relation],
                    p.entity_map[t.tail],
                )
            })
            .collect();
        let nn: BTreeSet<Triplet> = p.kg_nn.triplets().collect();
        assert_eq!(mapped, nn);
    }

    #[test]
    fn surplus_concepts_keep_the_shared_part() {
        let spec = SynthSpec {
            nn_concept_ratio: 1.5,
            ..SynthSpec::default()
        };
        let p = generate_synthetic_kg(&spec, 11).unwrap();
        assert_eq!(p.kg_nn.n_entities(), 30);
        assert_eq!(p.kg_nn.n_relations(), 6);
        for t in p.kg_g.triplets() {
            let m = Triplet::new(
                p.entity_map[t.head],
                p.relation_map[t.relation],
                p.entity_map[t.tail],
            );
            assert!(p.kg_nn.contains(m));
        }
        // Same density on the surplus: the extra cells hold roughly 0.2 of their candidates.
        let density = p.kg_nn.len() as f64 / (30.0 * 30.0 * 6.0);
        assert!((density - 0.2).abs() < 0.02, "density {density}");
    }

    #[test]
    fn same_seed_same_pair() {
        let spec = SynthSpec {
            alpha: Some(0.5),
            nn_concept_ratio: 2.0,
            ..SynthSpec::default()
        };
        assert_eq!(
            generate_synthetic_kg(&spec, 5).unwrap(),
            generate_synthetic_kg(&spec, 5).unwrap()
        );
        assert_ne!(
            generate_synthetic_kg(&spec, 5).unwrap().kg_g,
            generate_synthetic_kg(&spec, 6).unwrap().kg_g
        );
    }

    /// Mean and std of `clamp(N(mu, var), lo, hi)` by direct quadrature.
    fn clipped_normal_moments(mu: f64, var: f64, lo: f64, hi: f64) -> (f64, f64) {
        let sd = var.sqrt();
        let pdf = |x: f64| (-(x - mu).powi(2) / (2.0 * var)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        let (a, b, n) = (mu - 12.0 * sd, mu + 12.0 * sd, 200_000);
        let h = (b - a) / n as f64;
        let (mut m1, mut m2) = (0.0, 0.0);
        for i in 0..n {
            let x = a + (i as f64 + 0.5) * h;
            let c = x.clamp(lo, hi);
            m1 += c * pdf(x) * h;
            m2 += c * c * pdf(x) * h;
        }
        (m1, (m2 - m1 * m1).sqrt())
    }

    #[test]
    fn coverage_matches_clipped_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for alpha in [0.01, 0.5, 0.99] {
            let draws: Vec<f64> = (0..1000).map(|_| draw_coverage(alpha, &mut rng)).collect();
            let mean = draws.iter().sum::<f64>() / 1000.0;
            let std = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0).sqrt();
            let (em, es) = clipped_normal_moments(0.5, coverage_variance(alpha), COVERAGE_MIN, COVERAGE_MAX);
            assert!((mean - em).abs() < 0.03, "alpha {alpha}: mean {mean} vs {em}");
            assert!((std - es).abs() < 0.1 * es, "alpha {alpha}: std {std} vs {es}");
        }
        // Near alpha = 1 the spread approaches the 0.1 floor of the variance formula.
        let draws: Vec<f64> = (0..1000).map(|_| draw_coverage(0.999, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / 1000.0;
        let std = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0).sqrt();
        assert!(std <= 0.1 * 1.1, "std {std}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = [
            SynthSpec { entities: 1, ..SynthSpec::default() },
            SynthSpec { relation_proportion: 0.01, ..SynthSpec::default() },
            SynthSpec { triplet_proportion: 0.0, ..SynthSpec::default() },
            SynthSpec { alpha: Some(1.0), ..SynthSpec::default() },
            SynthSpec { nn_concept_ratio: 0.5, ..SynthSpec::default() },
        ];
        for spec in bad {
            assert!(generate_synthetic_kg(&spec, 0).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn rounding_goes_half_up() {
        assert_eq!(round_half_up(0.5), 1);
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(2.49), 2);
        assert_eq!(SynthSpec { entities: 5, ..SynthSpec::default() }.n_relations(), 1);
        assert_eq!(SynthSpec { entities: 40, ..SynthSpec::default() }.n_relations(), 8);
    }
}
