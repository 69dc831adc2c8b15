//! Self-adversarial negative-sampling loss and its gradients.

use std::collections::BTreeMap;

use crate::kgdata::{EntityId, RelationId, Triple};
use crate::models::score::{add_grad_at, distance_unchecked};
use crate::models::{add_distance_grad, ModelSpec, RelationParams};
use crate::real::Real;

/// `softmax(α · scores)`. Treated as constants by the loss gradient.
pub fn adversarial_weights<T: Real>(neg_scores: &[T], temperature: T) -> Vec<T> {
    if neg_scores.is_empty() {
        return Vec::new();
    }
    let scaled: Vec<T> = neg_scores.iter().map(|&s| temperature * s).collect();
    let max = scaled.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scaled.iter().map(|&x| (x - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `log σ(x)` without overflow.
pub fn log_sigmoid<T: Real>(x: T) -> T {
    x.min(T::zero()) - (-x.abs()).exp().ln_1p()
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `−log σ(γ + pos) − Σ wᵢ log σ(−(γ + negᵢ))`.
pub fn loss<T: Real>(pos_score: T, neg_scores: &[T], weights: &[T], gamma: T) -> T {
    let positive = -log_sigmoid(gamma + pos_score);
    let negative = neg_scores
        .iter()
        .zip(weights)
        .fold(T::zero(), |acc, (&s, &w)| acc - w * log_sigmoid(-(gamma + s)));
    positive + negative
}

/// Hyperparameters of the batch objective.
#[derive(Clone, Copy, Debug)]
pub struct LossSettings<T> {
    pub gamma: T,
    pub temperature: T,
    /// L3 penalty on the embeddings of positive triples.
    pub regularization: T,
}

/// Loss value plus gradients keyed by entity and relation id.
#[derive(Clone, Debug, Default)]
pub struct BatchGrads<T> {
    pub loss: T,
    pub entities: BTreeMap<EntityId, Vec<T>>,
    pub relations: BTreeMap<RelationId, Vec<T>>,
    /// Adversarial weights used, `[positive][side]`, frozen for gradient checks.
    pub weights: Vec<[Vec<T>; 2]>,
}

fn add_into<T: Real>(map: &mut BTreeMap<u32, Vec<T>>, id: u32, g: &[T]) {
    let row = map.entry(id).or_insert_with(|| vec![T::zero(); g.len()]);
    row.iter_mut().zip(g).for_each(|(r, &x)| *r += x);
}

/// Mean loss over `positives` and its gradient with respect to every
/// entity and relation row the batch touches.
///
/// `negatives[i]` holds the head-side and tail-side corruptions of
/// `positives[i]`. Adversarial weights are recomputed from the current
/// scores unless `frozen` supplies them; either way they are treated as
/// constants. Every touched row appears in the output maps, possibly with
/// an all-zero gradient.
#[allow(clippy::too_many_arguments)]
pub fn batch_objective<'a, T: Real>(
    spec: &ModelSpec,
    settings: &LossSettings<T>,
    entity: impl Fn(EntityId) -> &'a [T],
    relations: &RelationParams<T>,
    positives: &[Triple],
    negatives: &[[Vec<EntityId>; 2]],
    frozen: Option<&[[Vec<T>; 2]]>,
) -> BatchGrads<T> {
    let dim = spec.dim;
    let width = spec.relation_width();
    let scale = T::one() / T::lit(positives.len().max(1) as f64);
    let half = T::lit(0.5) * scale;
    let mut out = BatchGrads {
        loss: T::zero(),
        entities: BTreeMap::new(),
        relations: BTreeMap::new(),
        weights: Vec::with_capacity(positives.len()),
    };
    let mut acc_h = vec![T::zero(); dim];
    let mut acc_t = vec![T::zero(); dim];
    let mut acc_r = vec![T::zero(); width];
    let mut neg_scores = Vec::new();

    for (i, pos) in positives.iter().enumerate() {
        let (h, r, t) = (entity(pos.head), relations.row(pos.relation), entity(pos.tail));
        acc_h
            .iter_mut()
            .chain(acc_t.iter_mut())
            .chain(acc_r.iter_mut())
            .for_each(|v| *v = T::zero());
        let pos_score = -distance_unchecked(spec, h, r, t);

        let mut used: [Vec<T>; 2] = Default::default();
        let mut pos_coeff = T::zero();
        for (side_idx, candidates) in negatives[i].iter().enumerate() {
            neg_scores.clear();
            neg_scores.extend(candidates.iter().map(|&c| {
                let e = entity(c);
                if side_idx == 0 {
                    -distance_unchecked(spec, e, r, t)
                } else {
                    -distance_unchecked(spec, h, r, e)
                }
            }));
            let weights = match frozen {
                Some(w) => w[i][side_idx].clone(),
                None => adversarial_weights(&neg_scores, settings.temperature),
            };
            out.loss += half * loss(pos_score, &neg_scores, &weights, settings.gamma);
            pos_coeff += half * sigmoid(-(settings.gamma + pos_score));

            for ((&c, &s), &w) in candidates.iter().zip(&neg_scores).zip(&weights) {
                let coeff = -half * w * sigmoid(settings.gamma + s);
                let e = entity(c);
                let row = out.entities.entry(c).or_insert_with(|| vec![T::zero(); dim]);
                if side_idx == 0 {
                    add_grad_at(spec, e, r, t, -s, coeff, row, &mut acc_r, &mut acc_t);
                } else {
                    add_grad_at(spec, h, r, e, -s, coeff, &mut acc_h, &mut acc_r, row);
                }
            }
            used[side_idx] = weights;
        }
        out.weights.push(used);
        add_distance_grad(spec, h, r, t, pos_coeff, &mut acc_h, &mut acc_r, &mut acc_t);

        if settings.regularization > T::zero() {
            let lambda = settings.regularization * scale;
            let three = T::lit(3.0);
            for (v, acc) in [(h, &mut acc_h), (r, &mut acc_r), (t, &mut acc_t)] {
                out.loss += lambda * v.iter().map(|x| x.abs().powi(3)).sum::<T>();
                acc.iter_mut()
                    .zip(v)
                    .for_each(|(a, &x)| *a += lambda * three * x.abs() * x);
            }
        }
        add_into(&mut out.entities, pos.head, &acc_h);
        add_into(&mut out.entities, pos.tail, &acc_t);
        add_into(&mut out.relations, pos.relation, &acc_r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_examples() {
        assert_eq!(adversarial_weights(&[0.0f64, 0.0], 1.0), vec![0.5, 0.5]);
        let w = adversarial_weights(&[2f64.ln(), 0.0], 1.0);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 3.0).abs() < 1e-15);
        let u = adversarial_weights(&[-3.0f64, 7.0, 1e3], 0.0);
        assert!(u.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        let big = adversarial_weights(&[-400.0f64, 0.0, -1000.0], 2.0);
        assert!((big.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loss_at_zero_margin() {
        let l = loss(-1.0f64, &[-1.0], &[1.0], 1.0);
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((l - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn loss_limits_and_monotonicity() {
        let negs = [-3.0f64, -12.5];
        let w = [0.25, 0.75];
        let neg_only: f64 = -negs
            .iter()
            .zip(&w)
            .map(|(&s, &w)| w * log_sigmoid(-(6.0 + s)))
            .sum::<f64>();
        assert!((loss(1e6, &negs, &w, 6.0) - neg_only).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let l = loss(-20.0 + i as f64, &negs, &w, 6.0);
            assert!(l < prev && l > 0.0);
            prev = l;
        }
        assert!(loss(-1.0, &[-2.0], &[1.0], 1.0) < loss(-1.0, &[-1.0], &[1.0], 1.0));
    }

    #[test]
    fn log_sigmoid_is_stable() {
        for &x in &[-500.0f64, -50.0, 0.0, 50.0, 500.0] {
            let v = log_sigmoid(x);
            assert!(v.is_finite() && v <= 0.0);
        }
        assert!((log_sigmoid(-500.0f64) + 500.0).abs() < 1e-9);
        assert!((log_sigmoid(0.0f32) + 2f32.ln()).abs() < 1e-7);
        assert!(log_sigmoid(-500.0f32).is_finite());
    }
}
