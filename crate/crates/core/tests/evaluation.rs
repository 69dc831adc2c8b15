mod common;

use common::{oracle, random_kg, KINDS};
use rand::Rng;
use triplere::eval::{evaluate, rank, EvalProtocol};
use triplere::kgdata::{FilterIndex, KnowledgeGraph, Split, Triple, Vocabulary};
use triplere::models::{init_params, EntityTable, Matrix, ModelKind, ModelSpec, RelationParams};
use triplere::KgeError;

/// Parameters drawn from a tiny grid so that exact score ties are common.
fn coarse_params(spec: &ModelSpec, n_e: usize, n_r: usize, seed: u64) -> (EntityTable<f64>, RelationParams<f64>) {
    let mut rng = common::rng(seed);
    let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-2..=2) as f64 * 0.5).collect::<Vec<_>>();
    let ent = EntityTable::new(Matrix::from_vec(n_e, spec.dim, draw(n_e * spec.dim)).unwrap());
    let w = spec.relation_width();
    let rel = RelationParams::new(Matrix::from_vec(n_r, w, draw(n_r * w)).unwrap());
    (ent, rel)
}

#[test]
fn filtered_full_matches_brute_force() {
    for seed in 0..20u64 {
        let mut rng = common::rng(100 + seed);
        let n_e = rng.gen_range(5..=50);
        let n_r = rng.gen_range(1..=5);
        let n_t = rng.gen_range(10..=(n_e * n_r).min(120));
        let kg = random_kg(seed, n_e, n_r, n_t);
        let filter = FilterIndex::build(&kg);
        let kind = KINDS[seed as usize % 4];
        let spec = ModelSpec::new(kind, rng.gen_range(1..6));
        let (ent, rel) = if seed % 2 == 0 {
            coarse_params(&spec, n_e, n_r, seed)
        } else {
            init_params::<f64>(&spec, n_e, n_r, seed)
        };
        for split in [Split::Train, Split::Test] {
            let got = evaluate(&kg, &filter, &spec, &ent, &rel, &EvalProtocol::filtered_full(), split).unwrap();
            assert_eq!(
                got,
                oracle::filtered_full(&kg, &spec, &ent, &rel, split),
                "seed {seed} {split:?}"
            );
        }
    }
}

#[test]
fn filtered_never_below_raw_and_fields_ordered() {
    for seed in 0..10u64 {
        let kg = random_kg(seed, 30, 3, 150);
        let filter = FilterIndex::build(&kg);
        let spec = ModelSpec::new(KINDS[seed as usize % 4], 4);
        let (ent, rel) = coarse_params(&spec, 30, 3, seed);
        for split in Split::ALL {
            let f = evaluate(&kg, &filter, &spec, &ent, &rel, &EvalProtocol::filtered_full(), split).unwrap();
            let r = evaluate(&kg, &filter, &spec, &ent, &rel, &EvalProtocol::raw_full(), split).unwrap();
            assert!(f.mrr >= r.mrr && f.mr <= r.mr);
            let s = evaluate(&kg, &filter, &spec, &ent, &rel, &EvalProtocol::sampled(7, seed), split).unwrap();
            for m in [&f, &r, &s] {
                assert!(m.hits1 <= m.hits3 && m.hits3 <= m.hits10);
                assert!(m.mrr >= m.hits1 && m.mrr > 0.0 && m.mrr <= 1.0);
                assert!(m.mr >= 1.0);
            }
        }
    }
}

#[test]
fn scaling_transe_preserves_every_metric() {
    let kg = random_kg(3, 40, 4, 200);
    let filter = FilterIndex::build(&kg);
    let spec = ModelSpec::new(ModelKind::TransE, 6);
    let (ent, rel) = init_params::<f64>(&spec, 40, 4, 3);
    let base = evaluate(
        &kg,
        &filter,
        &spec,
        &ent,
        &rel,
        &EvalProtocol::filtered_full(),
        Split::Test,
    )
    .unwrap();
    // scores scale by 4, a strictly increasing map; powers of two keep it exact
    let scale =
        |m: &Matrix<f64>| Matrix::from_vec(m.rows(), m.cols(), m.as_slice().iter().map(|x| x * 4.0).collect()).unwrap();
    let ent4 = EntityTable::new(scale(&ent.0));
    let rel4 = RelationParams::new(scale(&rel.0));
    let scaled = evaluate(
        &kg,
        &filter,
        &spec,
        &ent4,
        &rel4,
        &EvalProtocol::filtered_full(),
        Split::Test,
    )
    .unwrap();
    assert_eq!(base, scaled);
}

#[test]
fn rank_invariant_under_monotone_maps() {
    let mut rng = common::rng(5);
    for _ in 0..200 {
        let n = rng.gen_range(1..40);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-3..=3) as f64 * 0.25).collect();
        let truth = rng.gen_range(0..n);
        let base = rank(&scores, truth).unwrap();
        for f in [
            |x: f64| x.exp(),
            |x: f64| x * x * x,
            |x: f64| 2.0 * x + 7.0,
            |x: f64| x.atan(),
        ] {
            let mapped: Vec<f64> = scores.iter().map(|&x| f(x)).collect();
            assert_eq!(rank(&mapped, truth).unwrap(), base);
        }
    }
}

#[test]
fn perfect_model_scores_one_everywhere() {
    // a chain 0 -> 1 -> ... -> 9 under one relation, embedded on a line
    let train: Vec<Triple> = (0..9).map(|i| Triple::new(i, 0, i + 1)).collect();
    let kg = KnowledgeGraph::new(Vocabulary::numeric(10, 1), train, vec![], vec![]).unwrap();
    let spec = ModelSpec::new(ModelKind::TransE, 1);
    let ent = EntityTable::new(Matrix::from_vec(10, 1, (0..10).map(|i| i as f32).collect()).unwrap());
    let rel = RelationParams::new(Matrix::from_vec(1, 1, vec![1.0f32]).unwrap());
    let r = evaluate(
        &kg,
        &FilterIndex::build(&kg),
        &spec,
        &ent,
        &rel,
        &EvalProtocol::filtered_full(),
        Split::Train,
    )
    .unwrap();
    assert_eq!((r.mrr, r.mr, r.hits1, r.hits3, r.hits10), (1.0, 1.0, 1.0, 1.0, 1.0));
}

#[test]
fn sampled_protocol_is_deterministic_across_thread_counts() {
    let kg = random_kg(8, 50, 3, 300);
    let filter = FilterIndex::build(&kg);
    let spec = ModelSpec::new(ModelKind::TripleREv2, 8);
    let (ent, rel) = init_params::<f32>(&spec, 50, 3, 8);
    let run = |threads: usize, seed: u64| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            evaluate(
                &kg,
                &filter,
                &spec,
                &ent,
                &rel,
                &EvalProtocol::sampled(10, seed),
                Split::Test,
            )
            .unwrap()
        })
    };
    let a = run(1, 1);
    assert_eq!(a, run(4, 1));
    assert_eq!(a, run(1, 1));
    assert_ne!(a, run(1, 2));
}

#[test]
fn empty_split_is_a_validation_error() {
    let kg = KnowledgeGraph::new(Vocabulary::numeric(3, 1), vec![Triple::new(0, 0, 1)], vec![], vec![]).unwrap();
    let spec = ModelSpec::new(ModelKind::PairRE, 2);
    let (ent, rel) = init_params::<f32>(&spec, 3, 1, 0);
    let err = evaluate(
        &kg,
        &FilterIndex::build(&kg),
        &spec,
        &ent,
        &rel,
        &EvalProtocol::filtered_full(),
        Split::Valid,
    )
    .unwrap_err();
    assert!(matches!(err, KgeError::Validation(_)));
}
