use super::{EntityTable, ModelKind, ModelSpec, Norm, RelationParams};
use crate::error::{KgeError, Result};
use crate::kgdata::{EntityId, Side, Triple};
use crate::real::Real;

/// Gradient of the distance `‖x‖_p = −score` with respect to each input.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreGrad<T> {
    pub h: Vec<T>,
    pub r: Vec<T>,
    pub t: Vec<T>,
}

fn check_inputs<T: Real>(spec: &ModelSpec, h: &[T], r: &[T], t: &[T]) -> Result<()> {
    let d = spec.dim;
    if h.len() != d || t.len() != d || r.len() != spec.relation_width() {
        return Err(KgeError::contract(format!(
            "{:?} with dim {d} expects h[{d}], r[{}], t[{d}]; got h[{}], r[{}], t[{}]",
            spec.kind,
            spec.relation_width(),
            h.len(),
            r.len(),
            t.len()
        )));
    }
    if !h.iter().chain(r).chain(t).all(|x| x.is_finite()) {
        return Err(KgeError::contract("non-finite embedding value"));
    }
    Ok(())
}

const LANES: usize = 8;

/// `Σ|x|` or `sqrt(Σx²)` over `x(0..n)`, summed in a fixed lane order so
/// the compiler can vectorize it.
#[inline(always)]
fn accumulate<T: Real>(norm: Norm, n: usize, x: impl Fn(usize) -> T) -> T {
    let mut lanes = [T::zero(); LANES];
    let full = n - n % LANES;
    match norm {
        Norm::L1 => {
            for base in (0..full).step_by(LANES) {
                for (j, lane) in lanes.iter_mut().enumerate() {
                    *lane += x(base + j).abs();
                }
            }
            for (j, i) in (full..n).enumerate() {
                lanes[j] += x(i).abs();
            }
            lanes.iter().fold(T::zero(), |a, &b| a + b)
        }
        Norm::L2 => {
            for base in (0..full).step_by(LANES) {
                for (j, lane) in lanes.iter_mut().enumerate() {
                    let v = x(base + j);
                    *lane += v * v;
                }
            }
            for (j, i) in (full..n).enumerate() {
                let v = x(i);
                lanes[j] += v * v;
            }
            lanes.iter().fold(T::zero(), |a, &b| a + b).sqrt()
        }
    }
}

/// `‖x‖_p` without input validation.
#[inline]
pub(crate) fn distance_unchecked<T: Real>(spec: &ModelSpec, h: &[T], r: &[T], t: &[T]) -> T {
    let d = spec.dim;
    let (h, t) = (&h[..d], &t[..d]);
    match spec.kind {
        ModelKind::TransE => {
            let r = &r[..d];
            accumulate(spec.norm, d, |i| (h[i] - t[i]) + r[i])
        }
        ModelKind::PairRE => {
            let (rh, rt) = (&r[..d], &r[d..2 * d]);
            accumulate(spec.norm, d, |i| h[i] * rh[i] - t[i] * rt[i])
        }
        ModelKind::TripleREv1 => {
            let (rh, rm, rt) = (&r[..d], &r[d..2 * d], &r[2 * d..3 * d]);
            accumulate(spec.norm, d, |i| (h[i] * rh[i] - t[i] * rt[i]) + rm[i])
        }
        ModelKind::TripleREv2 => {
            let u = T::lit(spec.u);
            let (rh, rm, rt) = (&r[..d], &r[d..2 * d], &r[2 * d..3 * d]);
            accumulate(spec.norm, d, |i| (h[i] * (rh[i] + u) - t[i] * (rt[i] + u)) + rm[i])
        }
    }
}

/// Plausibility of `(h, r, t)`; always `<= 0`, higher is more plausible.
pub fn score<T: Real>(spec: &ModelSpec, h: &[T], r: &[T], t: &[T]) -> Result<T> {
    check_inputs(spec, h, r, t)?;
    Ok(-distance_unchecked(spec, h, r, t))
}

/// Scores `triple` with its `side` replaced by each candidate in turn.
///
/// Element `i` is bit-identical to `score` on the corrupted triple.
pub fn score_batch_corrupted<T: Real>(
    spec: &ModelSpec,
    entities: &EntityTable<T>,
    relations: &RelationParams<T>,
    triple: &Triple,
    side: Side,
    candidates: &[EntityId],
) -> Result<Vec<T>> {
    let h = entities.get(triple.head)?;
    let r = relations.get(triple.relation)?;
    let t = entities.get(triple.tail)?;
    check_inputs(spec, h, r, t)?;
    if let Some(&bad) = candidates.iter().find(|&&c| c as usize >= entities.len()) {
        return Err(KgeError::contract(format!(
            "candidate {bad} out of range for {} entities",
            entities.len()
        )));
    }
    Ok(candidates
        .iter()
        .map(|&c| {
            let e = entities.row(c);
            match side {
                Side::Head => -distance_unchecked(spec, e, r, t),
                Side::Tail => -distance_unchecked(spec, h, r, e),
            }
        })
        .collect())
}

/// Gradient of `L = −score` with respect to `h`, `r` and `t`.
///
/// For L1 the subgradient `sign(x)` with `sign(0) = 0` is used; for L2 the
/// gradient at `x = 0` is taken as zero.
pub fn grad<T: Real>(spec: &ModelSpec, h: &[T], r: &[T], t: &[T]) -> Result<ScoreGrad<T>> {
    check_inputs(spec, h, r, t)?;
    Ok(distance_grad(spec, h, r, t).1)
}

/// Distance and its gradient in one pass. Inputs are not validated.
pub fn distance_grad<T: Real>(spec: &ModelSpec, h: &[T], r: &[T], t: &[T]) -> (T, ScoreGrad<T>) {
    let mut g = ScoreGrad {
        h: vec![T::zero(); h.len()],
        r: vec![T::zero(); r.len()],
        t: vec![T::zero(); t.len()],
    };
    let dist = add_distance_grad(spec, h, r, t, T::one(), &mut g.h, &mut g.r, &mut g.t);
    (dist, g)
}

/// Adds `coeff` times the distance gradient into `gh`, `gr` and `gt` and
/// returns the distance. Inputs are not validated.
#[allow(clippy::too_many_arguments)]
pub fn add_distance_grad<T: Real>(
    spec: &ModelSpec,
    h: &[T],
    r: &[T],
    t: &[T],
    coeff: T,
    gh: &mut [T],
    gr: &mut [T],
    gt: &mut [T],
) -> T {
    let dist = distance_unchecked(spec, h, r, t);
    add_grad_at(spec, h, r, t, dist, coeff, gh, gr, gt);
    dist
}

/// `add_distance_grad` with the distance already known.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn add_grad_at<T: Real>(
    spec: &ModelSpec,
    h: &[T],
    r: &[T],
    t: &[T],
    dist: T,
    coeff: T,
    gh: &mut [T],
    gr: &mut [T],
    gt: &mut [T],
) {
    let d = spec.dim;
    let (h, t, gh, gt) = (&h[..d], &t[..d], &mut gh[..d], &mut gt[..d]);
    let unit = |x: T| match spec.norm {
        Norm::L1 => sign(x),
        Norm::L2 if dist > T::zero() => x / dist,
        Norm::L2 => T::zero(),
    };
    match spec.kind {
        ModelKind::TransE => {
            let (r, gr) = (&r[..d], &mut gr[..d]);
            for i in 0..d {
                let c = coeff * unit((h[i] - t[i]) + r[i]);
                gh[i] += c;
                gr[i] += c;
                gt[i] -= c;
            }
        }
        ModelKind::PairRE => {
            let (rh, rt) = (&r[..d], &r[d..2 * d]);
            let (grh, grt) = gr[..2 * d].split_at_mut(d);
            for i in 0..d {
                let c = coeff * unit(h[i] * rh[i] - t[i] * rt[i]);
                gh[i] += c * rh[i];
                grh[i] += c * h[i];
                grt[i] -= c * t[i];
                gt[i] -= c * rt[i];
            }
        }
        ModelKind::TripleREv1 | ModelKind::TripleREv2 => {
            let shift = if spec.kind == ModelKind::TripleREv2 {
                T::lit(spec.u)
            } else {
                T::zero()
            };
            let (rh, rm, rt) = (&r[..d], &r[d..2 * d], &r[2 * d..3 * d]);
            let (grh, rest) = gr[..3 * d].split_at_mut(d);
            let (grm, grt) = rest.split_at_mut(d);
            for i in 0..d {
                let (ph, pt) = (rh[i] + shift, rt[i] + shift);
                let c = coeff * unit((h[i] * ph - t[i] * pt) + rm[i]);
                gh[i] += c * ph;
                grh[i] += c * h[i];
                grm[i] += c;
                grt[i] -= c * t[i];
                gt[i] -= c * pt;
            }
        }
    }
}

#[inline]
fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_params, Matrix};

    fn spec(kind: ModelKind, dim: usize) -> ModelSpec {
        ModelSpec::new(kind, dim)
    }

    #[test]
    fn triplere_v1_hand_example() {
        // h∘r_h = [1, 1], t∘r_t = [1, 0.5], + r_m = [0.5, 1.0], L1 = 1.5
        let h = [0.5, 1.0];
        let r = [2.0, 1.0, 0.5, 0.5, 1.0, 0.5];
        let t = [1.0, 1.0];
        let s = score(&spec(ModelKind::TripleREv1, 2), &h, &r, &t).unwrap();
        assert_eq!(s, -1.5);
        let g = grad(&spec(ModelKind::TripleREv1, 2), &h, &r, &t).unwrap();
        assert_eq!(&g.r[2..4], &[1.0, 1.0]);
    }

    #[test]
    fn identity_case_scores_zero() {
        let h = [0.3, -1.2, 4.0];
        let r = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let s = score(&spec(ModelKind::TripleREv1, 3), &h, &r, &h).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn transe_zero_is_stationary() {
        let sp = spec(ModelKind::TransE, 3).with_norm(Norm::L2);
        let z = [0.0f64; 3];
        let g = grad(&sp, &z, &z, &z).unwrap();
        assert!(g.h.iter().chain(&g.r).chain(&g.t).all(|&x| x == 0.0));
    }

    #[test]
    fn contract_errors() {
        let sp = spec(ModelKind::PairRE, 2);
        assert!(score(&sp, &[0.0, 0.0], &[0.0; 3], &[0.0, 0.0]).is_err());
        assert!(score(&sp, &[f64::NAN, 0.0], &[0.0; 4], &[0.0, 0.0]).is_err());
        assert!(score(&sp, &[0.0, 0.0], &[0.0; 4], &[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn batch_matches_scalar_loop_bitwise() {
        for kind in ModelKind::ALL {
            for norm in [Norm::L1, Norm::L2] {
                let sp = spec(kind, 7).with_norm(norm).with_u(0.5);
                let (e, r) = init_params::<f64>(&sp, 20, 3, 4);
                let triple = Triple::new(2, 1, 5);
                let cands: Vec<u32> = (0..20).rev().collect();
                for side in Side::BOTH {
                    let batch = score_batch_corrupted(&sp, &e, &r, &triple, side, &cands).unwrap();
                    for (i, &c) in cands.iter().enumerate() {
                        let (h, t) = match side {
                            Side::Head => (c, triple.tail),
                            Side::Tail => (triple.head, c),
                        };
                        let s = score(&sp, e.row(h), r.row(1), e.row(t)).unwrap();
                        assert_eq!(batch[i].to_bits(), s.to_bits());
                    }
                }
                let empty = score_batch_corrupted(&sp, &e, &r, &triple, Side::Tail, &[]).unwrap();
                assert!(empty.is_empty());
                assert!(score_batch_corrupted(&sp, &e, &r, &triple, Side::Tail, &[20]).is_err());
            }
        }
    }

    #[test]
    fn batch_single_true_candidate() {
        let sp = spec(ModelKind::TripleREv2, 4);
        let (e, r) = init_params::<f32>(&sp, 6, 2, 1);
        let triple = Triple::new(1, 0, 3);
        let b = score_batch_corrupted(&sp, &e, &r, &triple, Side::Tail, &[3]).unwrap();
        let s = score(&sp, e.row(1), r.row(0), e.row(3)).unwrap();
        assert_eq!(b, vec![s]);
    }

    #[test]
    fn transe_is_homogeneous_under_joint_scaling() {
        let sp = spec(ModelKind::TransE, 3);
        let h = [0.5, -1.0, 2.0];
        let r = [1.5, 0.25, -0.5];
        let t = [-0.5, 1.0, 0.75];
        let base = score(&sp, &h, &r, &t).unwrap();
        let scale = |v: &[f64]| v.iter().map(|x| x * 4.0).collect::<Vec<_>>();
        let scaled = score(&sp, &scale(&h), &scale(&r), &scale(&t)).unwrap();
        assert_eq!(scaled, 4.0 * base);
    }

    #[test]
    fn matrix_backed_rows_score() {
        let e = EntityTable(Matrix::from_vec(2, 1, vec![1.0f64, 3.0]).unwrap());
        let r = RelationParams(Matrix::from_vec(1, 1, vec![2.0f64]).unwrap());
        let s = score_batch_corrupted(
            &spec(ModelKind::TransE, 1),
            &e,
            &r,
            &Triple::new(0, 0, 1),
            Side::Tail,
            &[1, 0],
        )
        .unwrap();
        assert_eq!(s, vec![0.0, -2.0]);
    }
}
