mod common;

use proptest::prelude::*;
use triplere::eval::rank;
use triplere::models::{score, ModelKind, ModelSpec, Norm};
use triplere::training::{adversarial_weights, loss};

fn vecs(dim: usize, n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, dim), n)
}

fn instance() -> impl Strategy<Value = (usize, Norm, Vec<Vec<f64>>)> {
    (1usize..16, prop_oneof![Just(Norm::L1), Just(Norm::L2)]).prop_flat_map(|(d, n)| (Just(d), Just(n), vecs(d, 5)))
}

fn s(kind: ModelKind, norm: Norm, u: f64, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let spec = ModelSpec::new(kind, h.len()).with_norm(norm).with_u(u);
    score(&spec, h, r, t).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn special_cases_reduce_exactly((d, norm, v) in instance(), u in -2.0f64..2.0) {
        let (h, t, a, b, c) = (&v[0], &v[1], &v[2], &v[3], &v[4]);
        let cat = |parts: &[&[f64]]| parts.concat();
        let ones = vec![1.0; d];
        let zeros = vec![0.0; d];
        // v2 with u = 0 is v1
        prop_assert_eq!(
            s(ModelKind::TripleREv2, norm, 0.0, h, &cat(&[a, b, c]), t).to_bits(),
            s(ModelKind::TripleREv1, norm, u, h, &cat(&[a, b, c]), t).to_bits()
        );
        // v1 without translation is PairRE
        prop_assert_eq!(
            s(ModelKind::TripleREv1, norm, u, h, &cat(&[a, &zeros, c]), t).to_bits(),
            s(ModelKind::PairRE, norm, u, h, &cat(&[a, c]), t).to_bits()
        );
        // v1 with unit projections is TransE
        prop_assert_eq!(
            s(ModelKind::TripleREv1, norm, u, h, &cat(&[&ones, b, &ones]), t).to_bits(),
            s(ModelKind::TransE, norm, u, h, b, t).to_bits()
        );
        // v2 with zero projections and u = 1 is TransE
        prop_assert_eq!(
            s(ModelKind::TripleREv2, norm, 1.0, h, &cat(&[&zeros, b, &zeros]), t).to_bits(),
            s(ModelKind::TransE, norm, u, h, b, t).to_bits()
        );
        // PairRE with unit projections is TransE without a translation
        prop_assert_eq!(
            s(ModelKind::PairRE, norm, u, h, &cat(&[&ones, &ones]), t).to_bits(),
            s(ModelKind::TransE, norm, u, h, &zeros, t).to_bits()
        );
    }

    #[test]
    fn score_is_non_positive_and_matches_definition((d, norm, v) in instance(), u in -2.0f64..2.0, k in 0usize..4) {
        let kind = common::KINDS[k];
        let spec = ModelSpec::new(kind, d).with_norm(norm).with_u(u);
        let r: Vec<f64> = v[2..2 + spec.kind.segments()].concat();
        let got = score(&spec, &v[0], &r, &v[1]).unwrap();
        prop_assert!(got <= 0.0);
        let want = common::reference_score(&spec, &v[0], &r, &v[1]);
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn true_triple_scores_zero(h in prop::collection::vec(-5.0f64..5.0, 1..10)) {
        let d = h.len();
        let spec = ModelSpec::new(ModelKind::TripleREv2, d).with_u(0.0);
        let r = [vec![1.0; d], vec![0.0; d], vec![1.0; d]].concat();
        prop_assert_eq!(score(&spec, &h, &r, &h).unwrap(), 0.0);
    }

    #[test]
    fn rank_is_within_bounds(scores in prop::collection::vec(-3i32..3, 1..50), pick in any::<prop::sample::Index>()) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let i = pick.index(scores.len());
        let r = rank(&scores, i).unwrap();
        prop_assert!(r >= 1.0 && r <= scores.len() as f64);
    }

    #[test]
    fn weights_are_a_distribution(scores in prop::collection::vec(-500.0f64..0.0, 1..64), alpha in 0.0f64..4.0) {
        let w = adversarial_weights(&scores, alpha);
        prop_assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn loss_is_positive_and_monotone(pos in -15.0f64..0.0, negs in prop::collection::vec(-15.0f64..0.0, 1..16), gamma in 0.1f64..10.0) {
        let w = adversarial_weights(&negs, 1.0);
        let l = loss(pos, &negs, &w, gamma);
        prop_assert!(l > 0.0 && l.is_finite());
        prop_assert!(loss(pos + 0.5, &negs, &w, gamma) < l);
        let worse: Vec<f64> = negs.iter().map(|n| n + 0.5).collect();
        prop_assert!(loss(pos, &worse, &w, gamma) > l);
    }
}
