mod common;

use citefusion::bundle::thresholded_iri;
use citefusion::corpus::{LabelSchema, CITES_FOR_INFORMATION};
use citefusion::eval;
use citefusion::explain::{exact_shapley, mass_from_contributions, pearson};
use citefusion::features::Variant;
use citefusion::fusion::{self, ZVector};
use citefusion::weighting::{self, ClassWeights, StackingHead, VotingRule};
use proptest::prelude::*;

use common::*;

fn z_strategy(max_classes: usize) -> impl Strategy<Value = Vec<f64>> {
    (2..=max_classes).prop_flat_map(|k| {
        prop::collection::vec(prop_oneof![(0u8..=10).prop_map(|v| f64::from(v) / 10.0), 0.0..1.0f64], 2 * k)
    })
}

fn weights_for(k: usize, raw: &[(f64, f64)]) -> Vec<ClassWeights> {
    (0..k).map(|j| ClassWeights::from_raw(j, [raw[j].0, raw[j].1])).collect()
}

fn swap_pairs(z: &[f64]) -> Vec<f64> {
    z.chunks(2).flat_map(|p| [p[1], p[0]]).collect()
}

proptest! {
    #[test]
    fn voting_matches_brute_force(z in z_strategy(7), gamma in prop_oneof![Just(0.5), 0.0..=1.0f64]) {
        prop_assert_eq!(fusion::max_vote(&z), brute_max(&z));
        prop_assert_eq!(fusion::avg_vote(&z).1, brute_avg(&z));
        prop_assert_eq!(fusion::majority_vote(&z, gamma), brute_majority(&z, gamma));
    }

    #[test]
    fn weighted_voting_matches_brute_force(
        z in z_strategy(7),
        raw in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 7),
        gamma in 0.0..=1.0f64,
    ) {
        let k = z.len() / 2;
        let weights = weights_for(k, &raw);
        let pairs: Vec<[f64; 2]> = weights.iter().map(|w| w.weights).collect();
        let slots = brute_reweight(&z, &pairs);
        let zv = ZVector::new(z.clone()).unwrap();
        prop_assert_eq!(weighting::weighted_vote(&zv, &weights, VotingRule::Max).unwrap(), brute_max(&slots));
        prop_assert_eq!(weighting::weighted_vote(&zv, &weights, VotingRule::Avg).unwrap(), brute_avg(&slots));
        prop_assert_eq!(
            weighting::weighted_vote(&zv, &weights, VotingRule::Majority { gamma }).unwrap(),
            brute_majority(&slots, gamma)
        );
    }

    #[test]
    fn uniform_weights_reduce_to_plain_voting(z in z_strategy(7), gamma in 0.0..=1.0f64, c in -2.0..2.0f64) {
        let k = z.len() / 2;
        let weights = weights_for(k, &vec![(c, c); k]);
        let zv = ZVector::new(z.clone()).unwrap();
        prop_assert_eq!(weighting::weighted_vote(&zv, &weights, VotingRule::Max).unwrap(), fusion::max_vote(&z));
        prop_assert_eq!(weighting::weighted_vote(&zv, &weights, VotingRule::Avg).unwrap(), fusion::avg_vote(&z).1);
        prop_assert_eq!(
            weighting::weighted_vote(&zv, &weights, VotingRule::Majority { gamma }).unwrap(),
            fusion::majority_vote(&z, gamma)
        );
    }

    #[test]
    fn max_vote_is_invariant_under_monotone_transforms(z in z_strategy(7)) {
        let squared: Vec<f64> = z.iter().map(|v| v * v).collect();
        let logit: Vec<f64> = z.iter().map(|v| (v + 1e-3).ln() - (1.001 - v).ln()).collect();
        prop_assert_eq!(fusion::max_vote(&squared), fusion::max_vote(&z));
        prop_assert_eq!(fusion::max_vote(&logit), fusion::max_vote(&z));
    }

    #[test]
    fn swapping_experts_within_a_class_changes_nothing(z in z_strategy(7), gamma in 0.0..=1.0f64) {
        let swapped = swap_pairs(&z);
        prop_assert_eq!(fusion::max_vote(&swapped), fusion::max_vote(&z));
        prop_assert_eq!(fusion::avg_vote(&swapped).1, fusion::avg_vote(&z).1);
        prop_assert_eq!(fusion::majority_vote(&swapped, gamma), fusion::majority_vote(&z, gamma));
    }

    #[test]
    fn gamma_extremes_fall_back_to_average_voting(z in z_strategy(7)) {
        // γ = 0: every expert votes; γ above every score: nobody votes.
        prop_assert_eq!(fusion::majority_vote(&z, 0.0), fusion::avg_vote(&z).1);
        prop_assert_eq!(fusion::majority_vote(&z, 1.0 + 1e-9), fusion::avg_vote(&z).1);
    }

    #[test]
    fn class_weights_are_a_distribution(a in -50.0..50.0f64, b in -50.0..50.0f64) {
        let w = ClassWeights::from_raw(0, [a, b]);
        prop_assert!(w.weights[0] >= 0.0 && w.weights[1] >= 0.0);
        prop_assert!((w.weights[0] + w.weights[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stackingc_probabilities_and_shift_invariance(
        z in z_strategy(6),
        heads in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64), 6),
        shift in -10.0..10.0f64,
    ) {
        let k = z.len() / 2;
        let zv = ZVector::new(z).unwrap();
        let make = |s: f64| -> Vec<StackingHead> {
            (0..k)
                .map(|j| StackingHead {
                    class: j,
                    theta: [heads[j].0, heads[j].1],
                    intercept: heads[j].2 + s,
                    degenerate: false,
                    residual_ss: 0.0,
                })
                .collect()
        };
        let (p, label) = weighting::stackingc_predict(&zv, &make(0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let (q, shifted) = weighting::stackingc_predict(&zv, &make(shift));
        prop_assert_eq!(label, shifted);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_are_equivariant_under_label_permutation(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200),
        perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let gold: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let base = eval::metrics(&eval::confusion(&gold, &pred, 4).unwrap()).unwrap();
        let pg: Vec<usize> = gold.iter().map(|g| perm[*g]).collect();
        let pp: Vec<usize> = pred.iter().map(|p| perm[*p]).collect();
        let moved = eval::metrics(&eval::confusion(&pg, &pp, 4).unwrap()).unwrap();
        prop_assert!((base.macro_f1 - moved.macro_f1).abs() < 1e-12);
        prop_assert!((base.accuracy - moved.accuracy).abs() < 1e-12);
        for (j, class) in base.per_class.iter().enumerate() {
            prop_assert_eq!(class, &moved.per_class[perm[j]]);
        }
        // Single-label multi-class: micro-F1 coincides with accuracy.
        prop_assert!((base.micro_f1 - base.accuracy).abs() < 1e-12);
        let correct = gold.iter().zip(&pred).filter(|(g, p)| g == p).count();
        prop_assert!((base.accuracy - correct as f64 / gold.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn shapley_efficiency_and_linear_closed_form(
        w in prop::collection::vec(-5.0..5.0f64, 1..=10),
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = w.len();
        let z: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let (phi, all, none) = exact_shapley(|p| p.iter().zip(&w).map(|(x, c)| x * c).sum(), &z, &b).unwrap();
        for f in 0..n {
            prop_assert!((phi[f] - w[f] * (z[f] - b[f])).abs() < 1e-12);
        }
        // A non-additive game: interactions between neighbours.
        let game = |p: &[f64]| p.windows(2).map(|q| (q[0] * q[1]).sin()).sum::<f64>() + p[0].exp();
        let (phi, all2, none2) = exact_shapley(game, &z, &b).unwrap();
        prop_assert!((phi.iter().sum::<f64>() - (all2 - none2)).abs() < 1e-9);
        prop_assert!(all.is_finite() && none.is_finite());
    }

    #[test]
    fn raising_the_threshold_never_makes_an_item_reliable(
        raw in prop::collection::vec(0.001..1.0f64, 3),
        t1 in 0.01..1.0f64,
        t2 in 0.01..1.0f64,
    ) {
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let schema = LabelSchema::scicite();
        let label = fusion::argmax(&p);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let (rel_lo, _) = thresholded_iri(&schema, &p, label, lo).unwrap();
        let (rel_hi, iri_hi) = thresholded_iri(&schema, &p, label, hi).unwrap();
        prop_assert!(!rel_hi || rel_lo);
        if !rel_hi {
            prop_assert_eq!(iri_hi, CITES_FOR_INFORMATION);
        }
    }

    #[test]
    fn attribution_mass_telescopes(contrib in prop::collection::vec(-10.0..10.0f64, 0..40)) {
        let m = mass_from_contributions(0, 0, Variant::Domain, contrib.iter().copied());
        prop_assert!(m.positive >= 0.0 && m.negative >= 0.0);
        prop_assert_eq!(m.signed, m.positive - m.negative);
        prop_assert!((m.signed - contrib.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn pearson_is_symmetric_and_bounded(
        pairs in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 2..50),
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        match (pearson(&a, &b), pearson(&b, &a)) {
            (Some(x), Some(y)) => {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&x));
            }
            (None, None) => {}
            other => prop_assert!(false, "asymmetric definedness {:?}", other),
        }
        if let Some(r) = pearson(&a, &a) {
            prop_assert!((r - 1.0).abs() < 1e-12);
        }
    }
}
