//! Projection-length InfoNCE.
//!
//! The probability that a query belongs to candidate `n` is a softmax over
//! projection lengths, `p(n|v) = exp(s_n/τ) / Σ_m exp(s_m/τ)` with
//! `s_n = ‖W̃_nᵀ v‖₂`. The loss is `−log p(positive|v)`. Candidate bases are
//! constants: gradients flow only into the query.

use crate::error::{Error, Result};
use crate::scalar::{dot, norm, Scalar};
use crate::subspace::{Embedding, InstanceSubspace};

/// Temperature used for every reported run.
pub const DEFAULT_TEMPERATURE: f64 = 0.2;

/// Below this projection length the score is treated as non-differentiable
/// and contributes a zero subgradient.
pub const GRAD_EPSILON: f64 = 1e-8;

/// Projection lengths of one query against N candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveScores<T> {
    positive_index: usize,
    lengths: Vec<T>,
    temperature: T,
}

impl<T: Scalar> ContrastiveScores<T> {
    pub fn new(positive_index: usize, lengths: Vec<T>, temperature: T) -> Result<Self> {
        if positive_index >= lengths.len() {
            return Err(Error::PositiveOutOfRange {
                index: positive_index,
                count: lengths.len(),
            });
        }
        check_temperature(temperature)?;
        let hi = T::one() + T::unit_tolerance();
        if let Some(bad) = lengths.iter().find(|&&s| !(s >= T::zero() && s <= hi)) {
            return Err(Error::InvalidConfig {
                key: "lengths",
                reason: format!("projection length {bad} outside [0, 1]"),
            });
        }
        Ok(Self {
            positive_index,
            lengths,
            temperature,
        })
    }

    pub fn positive_index(&self) -> usize {
        self.positive_index
    }

    pub fn lengths(&self) -> &[T] {
        &self.lengths
    }

    pub fn temperature(&self) -> T {
        self.temperature
    }
}

fn check_temperature<T: Scalar>(t: T) -> Result<()> {
    if !(t > T::zero()) || !t.is_finite() {
        return Err(Error::InvalidConfig {
            key: "temperature",
            reason: format!("must be positive, got {t}"),
        });
    }
    Ok(())
}

/// Softmax of `scores / temperature` with max subtraction.
pub fn softmax<T: Scalar>(scores: &[T], temperature: T) -> Vec<T> {
    let m = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scores
        .iter()
        .map(|&s| ((s - m) / temperature).exp())
        .collect();
    let z: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// `−log softmax(scores/τ)[index]`, computed as log-sum-exp minus the logit.
fn nll<T: Scalar>(scores: &[T], temperature: T, index: usize) -> T {
    let m = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let z: T = scores.iter().map(|&s| ((s - m) / temperature).exp()).sum();
    z.ln() - (scores[index] - m) / temperature
}

pub fn kshot_probabilities<T: Scalar>(scores: &ContrastiveScores<T>) -> Vec<T> {
    softmax(&scores.lengths, scores.temperature)
}

/// Loss, candidate probabilities and the gradient with respect to the query.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    pub loss: T,
    pub probabilities: Vec<T>,
    pub grad_wrt_query: Vec<T>,
}

/// Projection-length InfoNCE for a unit query.
pub fn kshot_loss_and_grad<T: Scalar, S: AsRef<InstanceSubspace<T>>>(
    query: &Embedding<T>,
    candidates: &[S],
    positive_index: usize,
    temperature: T,
) -> Result<LossOutput<T>> {
    kshot_loss_and_grad_raw(query.as_slice(), candidates, positive_index, temperature)
}

/// Same as [`kshot_loss_and_grad`] without the unit-norm requirement on the
/// query, so the loss can be differentiated numerically around a point.
pub fn kshot_loss_and_grad_raw<T: Scalar, S: AsRef<InstanceSubspace<T>>>(
    query: &[T],
    candidates: &[S],
    positive_index: usize,
    temperature: T,
) -> Result<LossOutput<T>> {
    check_temperature(temperature)?;
    let n = candidates.len();
    if positive_index >= n {
        return Err(Error::PositiveOutOfRange {
            index: positive_index,
            count: n,
        });
    }
    let dim = query.len();
    let mut coeffs = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for c in candidates {
        let c = c.as_ref();
        let w = c.coefficients(query)?;
        scores.push(norm(&w));
        coeffs.push(w);
    }

    let probabilities = softmax(&scores, temperature);
    let loss = nll(&scores, temperature, positive_index);

    let mut grad = vec![T::zero(); dim];
    let eps = T::lit(GRAD_EPSILON);
    for (i, ((c, w), (&s, &p))) in candidates
        .iter()
        .zip(&coeffs)
        .zip(scores.iter().zip(&probabilities))
        .enumerate()
    {
        if s <= eps {
            continue;
        }
        let indicator = if i == positive_index {
            T::one()
        } else {
            T::zero()
        };
        let weight = (p - indicator) / (temperature * s);
        if weight == T::zero() {
            continue;
        }
        let c = c.as_ref();
        for (l, &wl) in w.iter().enumerate() {
            let f = weight * wl;
            for (g, &b) in grad.iter_mut().zip(c.basis_vector(l)) {
                *g += f * b;
            }
        }
    }

    Ok(LossOutput {
        loss,
        probabilities,
        grad_wrt_query: grad,
    })
}

/// One-shot contrastive probabilities with inner-product similarity.
pub fn oneshot_probabilities<T: Scalar>(
    query: &Embedding<T>,
    keys: &[Embedding<T>],
    temperature: T,
) -> Result<Vec<T>> {
    check_temperature(temperature)?;
    let sims = cosine_scores(query, keys)?;
    Ok(softmax(&sims, temperature))
}

/// `−log p(positive)` of the one-shot probabilities.
pub fn oneshot_loss<T: Scalar>(
    query: &Embedding<T>,
    keys: &[Embedding<T>],
    positive_index: usize,
    temperature: T,
) -> Result<T> {
    check_temperature(temperature)?;
    if positive_index >= keys.len() {
        return Err(Error::PositiveOutOfRange {
            index: positive_index,
            count: keys.len(),
        });
    }
    let sims = cosine_scores(query, keys)?;
    Ok(nll(&sims, temperature, positive_index))
}

fn cosine_scores<T: Scalar>(query: &Embedding<T>, keys: &[Embedding<T>]) -> Result<Vec<T>> {
    keys.iter()
        .map(|k| {
            if k.dim() != query.dim() {
                return Err(Error::DimensionMismatch {
                    context: "one-shot similarity",
                    expected: query.dim(),
                    got: k.dim(),
                });
            }
            Ok(dot(k.as_slice(), query.as_slice()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, max_relative_error};
    use crate::subspace::{build_subspace, TruncationPolicy};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn unit(rng: &mut ChaCha8Rng, d: usize) -> Embedding<f64> {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        Embedding::normalize(v).unwrap()
    }

    fn basis_vec(d: usize, i: usize) -> Embedding<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        Embedding::new(v).unwrap()
    }

    fn random_subspace(rng: &mut ChaCha8Rng, d: usize, k: usize) -> InstanceSubspace<f64> {
        let keys: Vec<_> = (0..k).map(|_| unit(rng, d)).collect();
        build_subspace(&keys, &TruncationPolicy::full(), 0).unwrap()
    }

    #[test]
    fn probability_examples() {
        let s = ContrastiveScores::new(0, vec![0.5, 0.5], 0.7).unwrap();
        assert_eq!(kshot_probabilities(&s), vec![0.5, 0.5]);
        let s = ContrastiveScores::new(0, vec![1.0, 0.0], 0.2).unwrap();
        let p = kshot_probabilities(&s);
        // direct evaluation: e^5 / (e^5 + 1)
        let e5 = 5f64.exp();
        assert_abs_diff_eq!(p[0], e5 / (e5 + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], 0.993307, epsilon = 1e-6);
        let s = ContrastiveScores::new(2, vec![0.9; 3], 0.2).unwrap();
        for p in kshot_probabilities(&s) {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn score_validation() {
        assert!(ContrastiveScores::new(2, vec![0.1, 0.2], 0.2).is_err());
        assert!(ContrastiveScores::new(0, vec![0.1, 0.2], 0.0).is_err());
        assert!(ContrastiveScores::new(0, vec![1.5, 0.2], 0.2).is_err());
        assert!(ContrastiveScores::new(0, vec![-0.1, 0.2], 0.2).is_err());
    }

    #[test]
    fn shift_invariance() {
        let a = softmax(&[0.1, 0.7, 0.3], 0.2);
        let b = softmax(&[10.1, 10.7, 10.3], 0.2);
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(a.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn query_inside_positive_orthogonal_to_negative() {
        let d = 4;
        let pos = build_subspace(
            &[basis_vec(d, 0), basis_vec(d, 1)],
            &TruncationPolicy::full(),
            0,
        )
        .unwrap();
        let neg = build_subspace(
            &[basis_vec(d, 2), basis_vec(d, 3)],
            &TruncationPolicy::full(),
            1,
        )
        .unwrap();
        let q = Embedding::normalize(vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let out = kshot_loss_and_grad(&q, &[&pos, &neg], 0, 0.2).unwrap();
        let e5 = 5f64.exp();
        assert_abs_diff_eq!(out.loss, -(e5 / (e5 + 1.0)).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(out.loss, 0.006715, epsilon = 1e-6);
    }

    #[test]
    fn single_candidate_has_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_subspace(&mut rng, 6, 2);
        let q = unit(&mut rng, 6);
        let out = kshot_loss_and_grad(&q, &[&s], 0, 0.2).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grad_wrt_query.iter().all(|&g| g == 0.0));
        assert_eq!(out.probabilities, vec![1.0]);
    }

    #[test]
    fn loss_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_subspace(&mut rng, 6, 2);
        let q = unit(&mut rng, 6);
        assert!(matches!(
            kshot_loss_and_grad(&q, &[&s], 1, 0.2),
            Err(Error::PositiveOutOfRange { .. })
        ));
        let q5 = unit(&mut rng, 5);
        assert!(matches!(
            kshot_loss_and_grad(&q5, &[&s], 0, 0.2),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(oneshot_probabilities(&q5, std::slice::from_ref(&q), 0.2).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let cands: Vec<_> = (0..8).map(|_| random_subspace(&mut rng, 16, 3)).collect();
            let q = unit(&mut rng, 16);
            let out = kshot_loss_and_grad(&q, &cands, 2, 0.2).unwrap();
            let fd = central_difference(
                |v| kshot_loss_and_grad_raw(v, &cands, 2, 0.2).unwrap().loss,
                q.as_slice(),
                1e-5,
            );
            let err = max_relative_error(&out.grad_wrt_query, &fd);
            assert!(err <= 1e-5, "relative error {err}");
        }
    }

    #[test]
    fn descent_step_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let cands: Vec<_> = (0..8).map(|_| random_subspace(&mut rng, 16, 3)).collect();
            let q = unit(&mut rng, 16);
            let out = kshot_loss_and_grad(&q, &cands, 0, 0.2).unwrap();
            let stepped: Vec<f64> = q
                .as_slice()
                .iter()
                .zip(&out.grad_wrt_query)
                .map(|(v, g)| v - 1e-3 * g)
                .collect();
            let after = kshot_loss_and_grad_raw(&stepped, &cands, 0, 0.2)
                .unwrap()
                .loss;
            assert!(after < out.loss);
        }
    }

    #[test]
    fn one_shot_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // query equals key 0, others orthogonal: cosines are non-negative so both agree
        let keys = vec![basis_vec(3, 0), basis_vec(3, 1), basis_vec(3, 2)];
        let q = basis_vec(3, 0);
        let one = oneshot_probabilities(&q, &keys, 0.2).unwrap();
        let subs: Vec<_> = keys
            .iter()
            .map(|k| build_subspace(std::slice::from_ref(k), &TruncationPolicy::full(), 0).unwrap())
            .collect();
        let lengths = subs
            .iter()
            .map(|s| crate::subspace::projection_length(s, &q).unwrap())
            .collect();
        let ks = kshot_probabilities(&ContrastiveScores::new(0, lengths, 0.2).unwrap());
        for (a, b) in one.iter().zip(&ks) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        let e5 = 5f64.exp();
        assert_abs_diff_eq!(one[0], e5 / (e5 + 2.0), epsilon = 1e-15);

        // a negative cosine separates the two formulations
        let neg = Embedding::new(vec![-1.0, 0.0, 0.0]).unwrap();
        let keys2 = vec![basis_vec(3, 1), neg.clone()];
        let one = oneshot_probabilities(&q, &keys2, 0.2).unwrap();
        let s_neg = build_subspace(&[neg], &TruncationPolicy::full(), 0).unwrap();
        let s_pos = build_subspace(&[basis_vec(3, 1)], &TruncationPolicy::full(), 0).unwrap();
        let out = kshot_loss_and_grad(&q, &[&s_pos, &s_neg], 0, 0.2).unwrap();
        assert!((one[1] - out.probabilities[1]).abs() > 0.5);

        // uniform when keys are symmetric about the query
        let r = 0.5f64.sqrt();
        let sym = vec![
            Embedding::new(vec![r, r, 0.0]).unwrap(),
            Embedding::new(vec![r, -r, 0.0]).unwrap(),
        ];
        let p = oneshot_probabilities(&q, &sym, 0.2).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);

        // temperature flattening
        let keys: Vec<_> = (0..5).map(|_| unit(&mut rng, 3)).collect();
        let p = oneshot_probabilities(&q, &keys, 1e6).unwrap();
        for x in p {
            assert_abs_diff_eq!(x, 0.2, epsilon = 1e-6);
        }
    }

    #[test]
    fn kshot_with_single_shots_equals_absolute_cosine_infonce() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let keys: Vec<_> = (0..6).map(|_| unit(&mut rng, 10)).collect();
            let q = unit(&mut rng, 10);
            let subs: Vec<_> = keys
                .iter()
                .map(|k| {
                    build_subspace(std::slice::from_ref(k), &TruncationPolicy::full(), 0).unwrap()
                })
                .collect();
            let ks = kshot_loss_and_grad(&q, &subs, 0, 0.2).unwrap().loss;
            // flip keys so every cosine is non-negative; the one-shot loss then uses |cos|
            let flipped: Vec<_> = keys
                .iter()
                .map(|k| {
                    let c = dot(k.as_slice(), q.as_slice());
                    let v = k.as_slice().iter().map(|x| x * c.signum()).collect();
                    Embedding::new(v).unwrap()
                })
                .collect();
            let os = oneshot_loss(&q, &flipped, 0, 0.2).unwrap();
            assert_abs_diff_eq!(ks, os, epsilon = 1e-12);
        }
    }
}
