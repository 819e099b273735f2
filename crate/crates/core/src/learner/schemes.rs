//! Per-cell weighting scheme updates: the second-order aggregation recursion,
//! multiplicative weights, polynomially weighted averages, follow-the-leader,
//! and the shrinkage operators applied to the reduced weights.

use ndarray::{s, Array3};

use crate::error::{CombineError, Result};
use crate::learner::LearnerState;

/// Ceiling multiplier for the learning rate when no regret has been observed
/// yet (both moment estimators are zero).
pub const ETA_CEILING: f64 = 1e6;

/// One second-order aggregation step on the reduced regret.
///
/// Elementwise per (d, p, k):
/// V <- (1-theta) V + r^2
/// E <- max((1-theta) E, |r|)
/// eta <- gamma * min(sqrt(-log beta0 / V), 1 / (2E))
/// R <- (1-theta) R + r (1 - eta r) / 2 + E 1{-2 eta r > 1}
/// then per (d, p): beta <- K beta0 (*) softmax(eta R + log eta), so weight
/// moves toward experts with positive accumulated regret (the ones that beat
/// the combination).
pub fn boa_update(state: &mut LearnerState, r_red: &Array3<f64>, theta: f64, gamma: f64) {
    let (dr, pr, k) = state.beta.dim();
    let keep = 1.0 - theta;
    for d in 0..dr {
        for p in 0..pr {
            for j in 0..k {
                let r = r_red[[d, p, j]];
                let v = keep * state.variance[[d, p, j]] + r * r;
                let e = (keep * state.range[[d, p, j]]).max(r.abs());
                state.variance[[d, p, j]] = v;
                state.range[[d, p, j]] = e;

                let b0 = state.beta0[[d, p, j]].clamp(1e-12, 1.0 - 1e-12);
                let sqrt_term = if v > 0.0 {
                    (-b0.ln() / v).sqrt()
                } else {
                    f64::INFINITY
                };
                let bound = if e > 0.0 { 0.5 / e } else { f64::INFINITY };
                let mut eta = gamma * sqrt_term.min(bound);
                if !eta.is_finite() {
                    // no regret observed yet: pin the rate so beta stays at beta0
                    eta = gamma * ETA_CEILING;
                }
                state.eta[[d, p, j]] = eta;

                let excess = if -2.0 * eta * r > 1.0 { e } else { 0.0 };
                state.cum_regret[[d, p, j]] =
                    keep * state.cum_regret[[d, p, j]] + r * (1.0 - eta * r) / 2.0 + excess;
            }
            // beta = K beta0 (*) softmax(eta R + log eta)
            let mut z = vec![0.0; k];
            for j in 0..k {
                z[j] = state.eta[[d, p, j]] * state.cum_regret[[d, p, j]]
                    + state.eta[[d, p, j]].ln();
            }
            let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for v in z.iter_mut() {
                *v = (*v - zmax).exp();
                denom += *v;
            }
            for j in 0..k {
                state.beta[[d, p, j]] = k as f64 * state.beta0[[d, p, j]] * z[j] / denom;
            }
        }
    }
}

/// Exponentially weighted average step for one cell.
///
/// Multiplicative-weights recursion with max-subtraction inside the
/// exponentials to guard against overflow.
pub fn ewa_update(weights: &[f64], losses: &[f64], eta: f64) -> Result<Vec<f64>> {
    if weights.len() != losses.len() {
        return Err(CombineError::ShapeMismatch(format!(
            "{} weights vs {} losses",
            weights.len(),
            losses.len()
        )));
    }
    if !(eta > 0.0) {
        return Err(CombineError::InvalidArgument(format!(
            "EWA learning rate eta = {eta} must be positive"
        )));
    }
    let min_loss = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut out: Vec<f64> = weights
        .iter()
        .zip(losses)
        .map(|(w, l)| w * (-eta * (l - min_loss)).exp())
        .collect();
    let sum: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= sum;
    }
    Ok(out)
}

/// Polynomially weighted averages with multiple learning rates for one cell.
///
/// Per expert: eta = 1 / (1 + sum of squared regrets); weights are
/// proportional to eta (*) positive part of the cumulative regret, uniform
/// when every positive part vanishes.
pub fn mlpoly_update(cum_regret: &[f64], sq_regret: &[f64]) -> Vec<f64> {
    let k = cum_regret.len();
    let mut out: Vec<f64> = cum_regret
        .iter()
        .zip(sq_regret)
        .map(|(r, v)| r.max(0.0) / (1.0 + v))
        .collect();
    let sum: f64 = out.iter().sum();
    if sum <= 0.0 {
        return vec![1.0 / k as f64; k];
    }
    for v in out.iter_mut() {
        *v /= sum;
    }
    out
}

/// One-hot weight on the expert with the smallest cumulative loss.
///
/// Ties break to the lowest expert index.
pub fn ftl_select(cumulative_losses: &[f64]) -> Result<Vec<f64>> {
    let best = cumulative_losses
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
        .map(|(i, _)| i)
        .ok_or_else(|| {
            CombineError::InvalidArgument("follow-the-leader needs a finite loss".into())
        })?;
    let mut out = vec![0.0; cumulative_losses.len()];
    out[best] = 1.0;
    Ok(out)
}

/// Applies soft threshold, hard threshold, sum-to-one projection, and fixed
/// share to the reduced weights, in that order.
///
/// The thresholds can zero out a whole cell; that cell falls back to uniform
/// weights with a logged warning.
pub fn apply_shrinkage(beta: &mut Array3<f64>, phi: f64, kappa: f64, nu: f64) {
    let (dr, pr, k) = beta.dim();
    let uniform = 1.0 / k as f64;
    for d in 0..dr {
        for p in 0..pr {
            let mut cell = beta.slice_mut(s![d, p, ..]);
            let mut sum = 0.0;
            for v in cell.iter_mut() {
                // standard soft threshold (positive part), then hard threshold
                let soft = v.signum() * (v.abs() - nu).max(0.0);
                let hard = if soft.abs() > kappa { soft } else { 0.0 };
                *v = hard;
                sum += hard;
            }
            if sum.abs() <= 1e-12 {
                log::warn!("all weights thresholded away at reduced cell (d={d}, p={p}); falling back to uniform");
                cell.fill(uniform);
            } else {
                for v in cell.iter_mut() {
                    *v /= sum;
                }
            }
            for v in cell.iter_mut() {
                *v = phi * uniform + (1.0 - phi) * *v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr3;

    #[test]
    fn ewa_hand_example() {
        let w = ewa_update(&[0.5, 0.5], &[0.0, 1.0], 1.0).unwrap();
        let e1 = (-1.0f64).exp();
        assert_abs_diff_eq!(w[0], 1.0 / (1.0 + e1), epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], e1 / (1.0 + e1), epsilon = 1e-12);
    }

    #[test]
    fn ewa_equal_losses_leave_weights_unchanged() {
        let w = ewa_update(&[0.3, 0.7], &[2.0, 2.0], 1.0).unwrap();
        assert_abs_diff_eq!(w[0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 0.7, epsilon = 1e-12);
    }

    #[test]
    fn ewa_tiny_eta_leaves_weights_almost_unchanged() {
        let w = ewa_update(&[0.2, 0.8], &[0.0, 5.0], 1e-12).unwrap();
        assert_abs_diff_eq!(w[0], 0.2, epsilon = 1e-9);
        assert_abs_diff_eq!(w[1], 0.8, epsilon = 1e-9);
    }

    #[test]
    fn mlpoly_zero_history_is_uniform() {
        assert_eq!(mlpoly_update(&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn mlpoly_concentrates_on_persistent_regret() {
        let mut r = [0.0, 0.0];
        let mut v = [0.0, 0.0];
        for _ in 0..300 {
            r[0] += 0.5;
            v[0] += 0.25;
        }
        let w = mlpoly_update(&r, &v);
        assert!(w[0] > 0.99, "weight {w:?}");
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(w.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn ftl_examples() {
        assert_eq!(ftl_select(&[3.0, 1.0, 2.0]).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(ftl_select(&[1.0, 1.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(ftl_select(&[4.2]).unwrap(), vec![1.0]);
        assert!(ftl_select(&[f64::NAN]).is_err());
    }

    #[test]
    fn shrinkage_identity_when_disabled() {
        let mut beta = arr3(&[[[0.6, 0.4]]]);
        apply_shrinkage(&mut beta, 0.0, 0.0, 0.0);
        assert_abs_diff_eq!(beta[[0, 0, 0]], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(beta[[0, 0, 1]], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn full_fixed_share_is_uniform() {
        let mut beta = arr3(&[[[0.9, 0.1], [0.2, 0.8]]]);
        apply_shrinkage(&mut beta, 1.0, 0.0, 0.0);
        for v in beta.iter() {
            assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn hard_threshold_hand_example() {
        let mut beta = arr3(&[[[0.7, 0.3]]]);
        apply_shrinkage(&mut beta, 0.0, 0.5, 0.0);
        assert_abs_diff_eq!(beta[[0, 0, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(beta[[0, 0, 1]], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn all_thresholded_falls_back_to_uniform() {
        let mut beta = arr3(&[[[0.05, -0.05]]]);
        apply_shrinkage(&mut beta, 0.0, 0.0, 0.2);
        assert_abs_diff_eq!(beta[[0, 0, 0]], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(beta[[0, 0, 1]], 0.5, epsilon = 1e-12);
    }
}
