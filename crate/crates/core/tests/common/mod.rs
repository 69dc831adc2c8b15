#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triplere::kgdata::{KnowledgeGraph, Triple, Vocabulary};
use triplere::models::{ModelKind, ModelSpec};

pub const KINDS: [ModelKind; 4] = [
    ModelKind::TransE,
    ModelKind::PairRE,
    ModelKind::TripleREv1,
    ModelKind::TripleREv2,
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// The difference vector written directly from the model definitions.
pub fn difference(spec: &ModelSpec, h: &[f64], r: &[f64], t: &[f64]) -> Vec<f64> {
    let d = spec.dim;
    (0..d)
        .map(|i| match spec.kind {
            ModelKind::TransE => h[i] + r[i] - t[i],
            ModelKind::PairRE => h[i] * r[i] - t[i] * r[d + i],
            ModelKind::TripleREv1 => h[i] * r[i] - t[i] * r[2 * d + i] + r[d + i],
            ModelKind::TripleREv2 => h[i] * (r[i] + spec.u) - t[i] * (r[2 * d + i] + spec.u) + r[d + i],
        })
        .collect()
}

pub fn reference_score(spec: &ModelSpec, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let x = difference(spec, h, r, t);
    match spec.norm {
        triplere::models::Norm::L1 => -x.iter().map(|v| v.abs()).sum::<f64>(),
        triplere::models::Norm::L2 => -x.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

/// Relative error with a floor so near-zero gradients compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Random graph with every entity in at least one train triple when possible.
pub fn random_kg(seed: u64, n_entities: usize, n_relations: usize, n_triples: usize) -> KnowledgeGraph {
    let mut rng = rng(seed);
    let mut seen = std::collections::BTreeSet::new();
    while seen.len() < n_triples {
        let h = rng.gen_range(0..n_entities as u32);
        let t = rng.gen_range(0..n_entities as u32);
        let r = rng.gen_range(0..n_relations as u32);
        seen.insert(Triple::new(h, r, t));
    }
    let mut all: Vec<Triple> = seen.into_iter().collect();
    for i in (1..all.len()).rev() {
        all.swap(i, rng.gen_range(0..=i));
    }
    let n_test = n_triples / 5;
    let test = all.split_off(n_triples - n_test);
    let valid = all.split_off(all.len() - n_test / 2);
    KnowledgeGraph::new(Vocabulary::numeric(n_entities, n_relations), all, valid, test).unwrap()
}

pub mod fd {
    use super::{difference, rel_err, uniform_vec};
    use rand::Rng;
    use triplere::kgdata::{EntityId, Triple};
    use triplere::models::{grad, score, EntityTable, Matrix, ModelKind, ModelSpec, Norm, RelationParams};
    use triplere::training::{batch_objective, LossSettings};

    pub const STEP: f64 = 1e-5;
    /// Components closer than this to zero count as sitting on an L1 kink.
    pub const KINK: f64 = 1e-7;

    #[derive(Clone, Copy, Debug, Default)]
    pub struct FdReport {
        pub max_rel_err: f64,
        pub checked: usize,
        pub skipped: usize,
    }

    impl FdReport {
        fn record(&mut self, analytic: f64, numeric: f64) {
            self.max_rel_err = self.max_rel_err.max(rel_err(analytic, numeric));
            self.checked += 1;
        }

        pub fn merge(self, other: FdReport) -> FdReport {
            FdReport {
                max_rel_err: self.max_rel_err.max(other.max_rel_err),
                checked: self.checked + other.checked,
                skipped: self.skipped + other.skipped,
            }
        }
    }

    /// Sign pattern of every difference-vector component, `None` when a
    /// component lies on a kink.
    fn signs(spec: &ModelSpec, xs: impl Iterator<Item = Vec<f64>>) -> Option<Vec<bool>> {
        let mut out = Vec::new();
        for x in xs {
            for v in x {
                if v.abs() < KINK {
                    return None;
                }
                out.push(v > 0.0);
            }
        }
        if spec.norm == Norm::L2 {
            out.clear();
        }
        Some(out)
    }

    /// Central difference of `f` at coordinate value `x0`, or `None` when the
    /// stencil touches or crosses an L1 kink.
    fn central(
        x0: f64,
        f: &mut dyn FnMut(f64) -> f64,
        pattern: &mut dyn FnMut(f64) -> Option<Vec<bool>>,
    ) -> Option<f64> {
        let base = pattern(x0)?;
        let (hi_p, lo_p) = (pattern(x0 + STEP)?, pattern(x0 - STEP)?);
        pattern(x0);
        if hi_p != base || lo_p != base {
            return None;
        }
        let hi = f(x0 + STEP);
        let lo = f(x0 - STEP);
        f(x0);
        Some((hi - lo) / (2.0 * STEP))
    }

    /// Score gradients on `instances` random toy triples.
    pub fn score_report(kind: ModelKind, norm: Norm, instances: usize, seed: u64) -> FdReport {
        let mut rng = super::rng(seed);
        let mut report = FdReport::default();
        for _ in 0..instances {
            let dim = rng.gen_range(1..9);
            let spec = ModelSpec::new(kind, dim)
                .with_norm(norm)
                .with_u(rng.gen_range(0.0..1.0));
            let mut args = [
                uniform_vec(&mut rng, dim, 1.0),
                uniform_vec(&mut rng, spec.relation_width(), 1.0),
                uniform_vec(&mut rng, dim, 1.0),
            ];
            let g = grad(&spec, &args[0], &args[1], &args[2]).unwrap();
            for (which, analytic) in [g.h, g.r, g.t].into_iter().enumerate() {
                for (i, &a) in analytic.iter().enumerate() {
                    let x0 = args[which][i];
                    let cell = std::cell::RefCell::new(&mut args);
                    let mut f = |v: f64| {
                        let mut a = cell.borrow_mut();
                        a[which][i] = v;
                        -score(&spec, &a[0], &a[1], &a[2]).unwrap()
                    };
                    let mut p = |v: f64| {
                        let mut a = cell.borrow_mut();
                        a[which][i] = v;
                        signs(&spec, std::iter::once(difference(&spec, &a[0], &a[1], &a[2])))
                    };
                    match central(x0, &mut f, &mut p) {
                        Some(n) => report.record(a, n),
                        None => report.skipped += 1,
                    }
                }
            }
        }
        report
    }

    struct Batch {
        spec: ModelSpec,
        entities: EntityTable<f64>,
        relations: RelationParams<f64>,
        positives: Vec<Triple>,
        negatives: Vec<[Vec<EntityId>; 2]>,
    }

    impl Batch {
        fn differences(&self) -> Vec<Vec<f64>> {
            let e = |i: u32| self.entities.row(i);
            let mut out = Vec::new();
            for (p, [heads, tails]) in self.positives.iter().zip(&self.negatives) {
                let r = self.relations.row(p.relation);
                out.push(difference(&self.spec, e(p.head), r, e(p.tail)));
                out.extend(heads.iter().map(|&x| difference(&self.spec, e(x), r, e(p.tail))));
                out.extend(tails.iter().map(|&x| difference(&self.spec, e(p.head), r, e(x))));
            }
            out
        }
    }

    /// Gradients of the full batch loss (adversarial weights frozen at the
    /// evaluation point) on `instances` random toy batches.
    pub fn loss_report(kind: ModelKind, norm: Norm, regularization: f64, instances: usize, seed: u64) -> FdReport {
        let mut rng = super::rng(seed);
        let mut report = FdReport::default();
        for _ in 0..instances {
            let dim = rng.gen_range(2..6);
            let spec = ModelSpec::new(kind, dim).with_norm(norm).with_u(0.25).with_gamma(2.0);
            let (n_e, n_r) = (8usize, 3usize);
            let width = spec.relation_width();
            let positives: Vec<Triple> = (0..3)
                .map(|_| {
                    Triple::new(
                        rng.gen_range(0..n_e as u32),
                        rng.gen_range(0..n_r as u32),
                        rng.gen_range(0..n_e as u32),
                    )
                })
                .collect();
            let negatives = positives
                .iter()
                .map(|_| [0, 1].map(|_| (0..4).map(|_| rng.gen_range(0..n_e as u32)).collect()))
                .collect();
            let mut b = Batch {
                spec: spec.clone(),
                entities: EntityTable::new(Matrix::from_vec(n_e, dim, uniform_vec(&mut rng, n_e * dim, 1.0)).unwrap()),
                relations: RelationParams::new(
                    Matrix::from_vec(n_r, width, uniform_vec(&mut rng, n_r * width, 1.0)).unwrap(),
                ),
                positives,
                negatives,
            };
            let settings = LossSettings {
                gamma: spec.gamma,
                temperature: 1.0,
                regularization,
            };
            let base = batch_objective(
                &spec,
                &settings,
                |e| b.entities.row(e),
                &b.relations,
                &b.positives,
                &b.negatives,
                None,
            );
            let frozen = base.weights.clone();
            let loss = |b: &Batch| {
                batch_objective(
                    &spec,
                    &settings,
                    |e| b.entities.row(e),
                    &b.relations,
                    &b.positives,
                    &b.negatives,
                    Some(&frozen),
                )
                .loss
            };
            let mut coords: Vec<(bool, u32, usize, f64)> = Vec::new();
            for id in 0..n_e as u32 {
                let g = base.entities.get(&id);
                coords.extend((0..dim).map(|i| (true, id, i, g.map_or(0.0, |g| g[i]))));
            }
            for id in 0..n_r as u32 {
                let g = base.relations.get(&id);
                coords.extend((0..width).map(|i| (false, id, i, g.map_or(0.0, |g| g[i]))));
            }
            for (is_entity, id, i, analytic) in coords {
                let x0 = if is_entity {
                    b.entities.row(id)[i]
                } else {
                    b.relations.row(id)[i]
                };
                let cell = std::cell::RefCell::new(&mut b);
                let set = |b: &mut Batch, v: f64| {
                    if is_entity {
                        b.entities.0.row_mut(id as usize)[i] = v;
                    } else {
                        b.relations.0.row_mut(id as usize)[i] = v;
                    }
                };
                let mut f = |v: f64| {
                    let mut b = cell.borrow_mut();
                    set(&mut b, v);
                    loss(&b)
                };
                let mut p = |v: f64| {
                    let mut b = cell.borrow_mut();
                    set(&mut b, v);
                    signs(&spec, b.differences().into_iter())
                };
                match central(x0, &mut f, &mut p) {
                    Some(n) => report.record(analytic, n),
                    None => report.skipped += 1,
                }
            }
        }
        report
    }
}

pub mod oracle {
    use triplere::eval::{EvalResult, SideMetrics};
    use triplere::kgdata::{KnowledgeGraph, Side, Split, Triple};
    use triplere::models::{score, EntityTable, ModelSpec, RelationParams};

    /// Scores every candidate with the scalar `score`, filters by scanning
    /// all triples, and counts ranks directly.
    pub fn filtered_full(
        kg: &KnowledgeGraph,
        spec: &ModelSpec,
        ent: &EntityTable<f64>,
        rel: &RelationParams<f64>,
        split: Split,
    ) -> EvalResult {
        let known: Vec<Triple> = kg.all_triples().copied().collect();
        let mut ranks = Vec::new();
        for q in kg.split(split) {
            for side in [Side::Head, Side::Tail] {
                let corrupt = |c: u32| match side {
                    Side::Head => Triple::new(c, q.relation, q.tail),
                    Side::Tail => Triple::new(q.head, q.relation, c),
                };
                let s = |t: Triple| score(spec, ent.row(t.head), rel.row(t.relation), ent.row(t.tail)).unwrap();
                let truth = s(*q);
                let (mut greater, mut ties) = (0usize, 0usize);
                for c in 0..kg.num_entities() as u32 {
                    let cand = corrupt(c);
                    if cand == *q || known.contains(&cand) {
                        continue;
                    }
                    let v = s(cand);
                    if v > truth {
                        greater += 1;
                    } else if v == truth {
                        ties += 1;
                    }
                }
                ranks.push((side, 1.0 + greater as f64 + ties as f64 / 2.0));
            }
        }
        let summarize = |rs: &[f64]| {
            let n = rs.len() as f64;
            let mut sum = 0.0;
            let mut inv = 0.0;
            for r in rs {
                sum += r;
                inv += 1.0 / r;
            }
            let hits = |k: f64| rs.iter().filter(|&&r| r <= k).count() as f64 / n;
            SideMetrics {
                mr: sum / n,
                mrr: inv / n,
                hits1: hits(1.0),
                hits3: hits(3.0),
                hits10: hits(10.0),
                n_queries: rs.len(),
            }
        };
        let side = |s: Side| summarize(&ranks.iter().filter(|r| r.0 == s).map(|r| r.1).collect::<Vec<_>>());
        let all = summarize(&ranks.iter().map(|r| r.1).collect::<Vec<_>>());
        EvalResult {
            mr: all.mr,
            mrr: all.mrr,
            hits1: all.hits1,
            hits3: all.hits3,
            hits10: all.hits10,
            n_queries: all.n_queries,
            head: Some(side(Side::Head)),
            tail: Some(side(Side::Tail)),
        }
    }
}
