//! Scoring and statistical testing: CRPS tables, the Diebold-Mariano test
//! with small-sample adjustment, coverage backtests, quantile-crossing
//! statistics, and expert-correlation diagnostics.

use ndarray::{s, Array2, ArrayView3};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::error::{CombineError, Result};
use crate::grids::ProbGrid;
use crate::loss::crps_from_quantiles;
use crate::panel::{ExpertPanel, ObservationSeries};

/// Per-(t, d) CRPS values plus the aggregate over the evaluation window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreTable {
    pub crps: Array2<f64>,
    /// First time index included in the aggregate (burn-in excluded before it).
    pub window_start: usize,
    pub aggregate: f64,
}

/// Significance code for a p-value: `***`, `**`, `*`, `.`, or empty.
pub fn significance_code(p: f64) -> &'static str {
    if p <= 0.001 {
        "***"
    } else if p <= 0.01 {
        "**"
    } else if p <= 0.05 {
        "*"
    } else if p <= 0.1 {
        "."
    } else {
        ""
    }
}

/// Per-(t, d) CRPS of a prediction cube, aggregated over the window starting
/// at `window_start`.
pub fn score_model(
    predictions: ArrayView3<f64>,
    obs: &ObservationSeries,
    pgrid: &ProbGrid,
    window_start: usize,
    scale2: bool,
) -> Result<ScoreTable> {
    let (t, d, p) = predictions.dim();
    if obs.n_time() != t || obs.n_marginals() != d || pgrid.len() != p {
        return Err(CombineError::ShapeMismatch(format!(
            "predictions {:?} vs observations ({}, {}) and grid {}",
            predictions.dim(),
            obs.n_time(),
            obs.n_marginals(),
            pgrid.len()
        )));
    }
    if window_start >= t {
        return Err(CombineError::InvalidArgument(format!(
            "evaluation window start {window_start} leaves no observations (T = {t})"
        )));
    }
    let mut crps = Array2::zeros((t, d));
    for ti in 0..t {
        for di in 0..d {
            let preds = predictions.slice(s![ti, di, ..]);
            crps[[ti, di]] = crps_from_quantiles(
                pgrid,
                preds.as_slice().expect("contiguous prediction row"),
                obs.values[[ti, di]],
                scale2,
            )?;
        }
    }
    let window = crps.slice(s![window_start.., ..]);
    let aggregate = window.sum() / window.len() as f64;
    Ok(ScoreTable {
        crps,
        window_start,
        aggregate,
    })
}

/// Diebold-Mariano test on the daily L1 loss differential with the
/// small-sample adjustment of Harvey, Leybourne and Newbold at horizon 1.
///
/// The differential is ref - model per day, summed over marginals; a positive
/// statistic favors the model. The p-value is two-sided from the
/// t-distribution with T - 1 degrees of freedom; `one_sided` halves it on the
/// model-better side.
pub fn dm_test(
    model_losses: &Array2<f64>,
    ref_losses: &Array2<f64>,
    one_sided: bool,
) -> Result<(f64, f64)> {
    if model_losses.dim() != ref_losses.dim() {
        return Err(CombineError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            model_losses.dim(),
            ref_losses.dim()
        )));
    }
    let t = model_losses.nrows();
    if t < 2 {
        return Err(CombineError::InvalidArgument(
            "the DM test needs at least two days".into(),
        ));
    }
    let diffs: Vec<f64> = (0..t)
        .map(|ti| ref_losses.row(ti).sum() - model_losses.row(ti).sum())
        .collect();
    let tn = t as f64;
    let mean = diffs.iter().sum::<f64>() / tn;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / tn;
    if var <= 0.0 {
        // degenerate: identical loss series
        let stat = if mean == 0.0 {
            0.0
        } else {
            mean.signum() * f64::INFINITY
        };
        let p = if stat == 0.0 { 1.0 } else { 0.0 };
        return Ok((stat, p));
    }
    let dm = mean / (var / tn).sqrt();
    // horizon h = 1
    let correction = ((tn + 1.0 - 2.0 + 0.0) / tn).sqrt();
    let stat = dm * correction;
    let dist = StudentsT::new(0.0, 1.0, tn - 1.0)
        .map_err(|e| CombineError::InvalidArgument(e.to_string()))?;
    let p = if one_sided {
        1.0 - dist.cdf(stat)
    } else {
        2.0 * (1.0 - dist.cdf(stat.abs()))
    };
    Ok((stat, p))
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Unconditional coverage likelihood-ratio test.
///
/// `level` is the nominal miss rate alpha; the null is that violations occur
/// with probability alpha. Chi-square(1) p-value; the 0*log(0) convention
/// covers the x = 0 and x = n edge cases.
pub fn kupiec_test(violations: usize, n_obs: usize, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(CombineError::InvalidArgument(format!(
            "nominal miss rate {level} must lie in (0, 1)"
        )));
    }
    if violations > n_obs || n_obs == 0 {
        return Err(CombineError::InvalidArgument(format!(
            "{violations} violations out of {n_obs} observations"
        )));
    }
    let x = violations as f64;
    let n = n_obs as f64;
    let rate = x / n;
    let log_null = xlogy(n - x, 1.0 - level) + xlogy(x, level);
    let log_alt = xlogy(n - x, 1.0 - rate) + xlogy(x, rate);
    let lr = (-2.0 * (log_null - log_alt)).max(0.0);
    let chi = ChiSquared::new(1.0).unwrap();
    Ok((lr, 1.0 - chi.cdf(lr)))
}

/// Conditional coverage test: unconditional coverage plus first-order Markov
/// independence of the violation series.
///
/// Returns (LR, p, degenerate); LR is the sum of the unconditional and
/// independence components, with a chi-square(2) p-value.
pub fn christoffersen_test(violation_series: &[bool], level: f64) -> Result<(f64, f64, bool)> {
    let n = violation_series.len();
    if n < 2 {
        return Err(CombineError::InvalidArgument(
            "the conditional coverage test needs at least two observations".into(),
        ));
    }
    let x = violation_series.iter().filter(|v| **v).count();
    let (lr_uc, _) = kupiec_test(x, n, level)?;

    let mut counts = [[0.0f64; 2]; 2];
    for w in violation_series.windows(2) {
        counts[w[0] as usize][w[1] as usize] += 1.0;
    }
    let n0 = counts[0][0] + counts[0][1];
    let n1 = counts[1][0] + counts[1][1];
    let ones = counts[0][1] + counts[1][1];
    let total = n0 + n1;
    let pi = ones / total;
    let log_iid = xlogy(total - ones, 1.0 - pi) + xlogy(ones, pi);
    let mut log_markov = 0.0;
    for (row, &denom) in counts.iter().zip([n0, n1].iter()) {
        if denom > 0.0 {
            let p1 = row[1] / denom;
            log_markov += xlogy(row[0], 1.0 - p1) + xlogy(row[1], p1);
        }
    }
    let lr_ind = (-2.0 * (log_iid - log_markov)).max(0.0);
    let degenerate = x == 0 || x == n;

    let lr = lr_uc + lr_ind;
    let chi = ChiSquared::new(2.0).unwrap();
    Ok((lr, 1.0 - chi.cdf(lr), degenerate))
}

/// Runs the Kupiec test for a central prediction interval.
///
/// The 50% interval uses the 0.25/0.75 quantiles, the 90% interval 0.05/0.95;
/// a day violates when the observation falls outside the interval.
pub fn coverage_violations(
    predictions: ArrayView3<f64>,
    obs: &ObservationSeries,
    pgrid: &ProbGrid,
    marginal: usize,
    level: f64,
    window_start: usize,
) -> Result<Vec<bool>> {
    let lo_p = (1.0 - level) / 2.0;
    let hi_p = 1.0 - lo_p;
    let find = |target: f64| -> Result<usize> {
        pgrid
            .iter()
            .position(|&p| (p - target).abs() < 1e-9)
            .ok_or_else(|| {
                CombineError::InvalidArgument(format!(
                    "probability grid has no point at {target} for the {level} interval"
                ))
            })
    };
    let lo = find(lo_p)?;
    let hi = find(hi_p)?;
    let t = predictions.dim().0;
    Ok((window_start..t)
        .map(|ti| {
            let y = obs.values[[ti, marginal]];
            y < predictions[[ti, marginal, lo]] || y > predictions[[ti, marginal, hi]]
        })
        .collect())
}

/// Counts days with a strict quantile decrease in at least one marginal.
///
/// Returns the count and the per-day mask.
pub fn crossing_days(predictions: ArrayView3<f64>) -> (usize, Vec<bool>) {
    let (t, d, p) = predictions.dim();
    let mask: Vec<bool> = (0..t)
        .map(|ti| {
            (0..d).any(|di| {
                (1..p).any(|pi| predictions[[ti, di, pi]] < predictions[[ti, di, pi - 1]])
            })
        })
        .collect();
    (mask.iter().filter(|m| **m).count(), mask)
}

/// Pearson correlation between experts, reduced to the median-quantile
/// forecast per (t, d).
///
/// Zero-variance experts produce NaN entries off the diagonal; such entries
/// are reported in the returned flag list.
pub fn pearson_corr_matrix(panel: &ExpertPanel) -> Result<(Array2<f64>, Vec<usize>)> {
    let (t, d, p, k) = panel.values.dim();
    if t < 2 {
        return Err(CombineError::InvalidArgument(
            "correlation requires at least two time steps".into(),
        ));
    }
    let mid = p / 2;
    let n = t * d;
    // median-quantile series per expert, flattened over (t, d)
    let mut series = Array2::zeros((n, k));
    for ti in 0..t {
        for di in 0..d {
            for ki in 0..k {
                series[[ti * d + di, ki]] = panel.values[[ti, di, mid, ki]];
            }
        }
    }
    let means: Vec<f64> = (0..k).map(|ki| series.column(ki).sum() / n as f64).collect();
    let sds: Vec<f64> = (0..k)
        .map(|ki| {
            series
                .column(ki)
                .iter()
                .map(|v| (v - means[ki]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let flagged: Vec<usize> = sds
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == 0.0)
        .map(|(i, _)| i)
        .collect();
    let mut corr = Array2::from_elem((k, k), f64::NAN);
    for a in 0..k {
        corr[[a, a]] = 1.0;
        for b in a + 1..k {
            if sds[a] > 0.0 && sds[b] > 0.0 {
                let cov: f64 = (0..n)
                    .map(|i| (series[[i, a]] - means[a]) * (series[[i, b]] - means[b]))
                    .sum();
                let r = (cov / (sds[a] * sds[b])).clamp(-1.0, 1.0);
                corr[[a, b]] = r;
                corr[[b, a]] = r;
            }
        }
    }
    Ok((corr, flagged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_forecasts_score_zero() {
        let pgrid = ProbGrid::equidistant(5).unwrap();
        let mut preds = Array3::zeros((4, 2, 5));
        let mut obs = Array2::zeros((4, 2));
        for ti in 0..4 {
            for di in 0..2 {
                let y = (ti + di) as f64;
                obs[[ti, di]] = y;
                for pi in 0..5 {
                    preds[[ti, di, pi]] = y;
                }
            }
        }
        let table = score_model(
            preds.view(),
            &ObservationSeries::new(obs),
            &pgrid,
            0,
            false,
        )
        .unwrap();
        assert_eq!(table.aggregate, 0.0);
        assert!(table.crps.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_forecasts_match_direct_quantile_loss_sum() {
        let pgrid = ProbGrid::equidistant(7).unwrap();
        let mut preds = Array3::zeros((3, 1, 7));
        let mut obs = Array2::zeros((3, 1));
        for ti in 0..3 {
            obs[[ti, 0]] = ti as f64 - 0.7;
            for pi in 0..7 {
                preds[[ti, 0, pi]] = 0.5 + 0.1 * pi as f64;
            }
        }
        let table = score_model(
            preds.view(),
            &ObservationSeries::new(obs.clone()),
            &pgrid,
            0,
            false,
        )
        .unwrap();
        for ti in 0..3 {
            let oracle: f64 = pgrid
                .iter()
                .enumerate()
                .map(|(pi, &p)| {
                    crate::loss::quantile_loss(p, preds[[ti, 0, pi]], obs[[ti, 0]]).unwrap()
                })
                .sum::<f64>()
                / 7.0;
            assert_abs_diff_eq!(table.crps[[ti, 0]], oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn doubling_errors_increases_every_cell() {
        let pgrid = ProbGrid::equidistant(5).unwrap();
        let mut close = Array3::zeros((2, 2, 5));
        let mut far = Array3::zeros((2, 2, 5));
        let obs = ObservationSeries::new(Array2::zeros((2, 2)));
        for ((t, d, p), v) in close.indexed_iter_mut() {
            *v = 0.3 + 0.1 * (t + d + p) as f64;
            far[[t, d, p]] = 2.0 * *v;
        }
        let a = score_model(close.view(), &obs, &pgrid, 0, false).unwrap();
        let b = score_model(far.view(), &obs, &pgrid, 0, false).unwrap();
        for (x, y) in a.crps.iter().zip(b.crps.iter()) {
            assert!(y > x);
        }
    }

    /// Independent reference implementation of the adjusted DM statistic.
    fn dm_oracle(diffs: &[f64]) -> f64 {
        let t = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / t;
        let gamma0 = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / t;
        let s1 = mean / (gamma0 / t).sqrt();
        // Harvey, Leybourne, Newbold adjustment at h = 1
        s1 * ((t + 1.0 - 2.0 + 0.0) / t).sqrt()
    }

    #[test]
    fn dm_matches_oracle_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let t = rng.gen_range(10..200);
            let model = Array2::from_shape_fn((t, 3), |_| rng.gen_range(0.0..2.0));
            let reference = Array2::from_shape_fn((t, 3), |_| rng.gen_range(0.0..2.0));
            let (stat, p) = dm_test(&model, &reference, false).unwrap();
            let diffs: Vec<f64> = (0..t)
                .map(|ti| reference.row(ti).sum() - model.row(ti).sum())
                .collect();
            assert_abs_diff_eq!(stat, dm_oracle(&diffs), epsilon = 1e-8);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn dm_degenerate_and_antisymmetry() {
        let losses = Array2::from_elem((10, 2), 1.0);
        let (stat, p) = dm_test(&losses, &losses.clone(), false).unwrap();
        assert_eq!(stat, 0.0);
        assert_eq!(p, 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Array2::from_shape_fn((30, 2), |_| rng.gen_range(0.0..1.0));
        let b = Array2::from_shape_fn((30, 2), |_| rng.gen_range(0.0..1.0));
        let (s1, _) = dm_test(&a, &b, false).unwrap();
        let (s2, _) = dm_test(&b, &a, false).unwrap();
        assert_abs_diff_eq!(s1, -s2, epsilon = 1e-12);
    }

    #[test]
    fn dm_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Array2::from_shape_fn((40, 3), |_| rng.gen_range(0.0..1.0));
        let b = Array2::from_shape_fn((40, 3), |_| rng.gen_range(0.0..1.0));
        let (s1, _) = dm_test(&a, &b, false).unwrap();
        let (s2, _) = dm_test(&(7.5 * &a), &(7.5 * &b), false).unwrap();
        assert_abs_diff_eq!(s1, s2, epsilon = 1e-10);
    }

    #[test]
    fn kupiec_null_attained_gives_zero() {
        let (lr, p) = kupiec_test(10, 100, 0.1).unwrap();
        assert_abs_diff_eq!(lr, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn kupiec_zero_violation_hand_value() {
        let (lr, _) = kupiec_test(0, 100, 0.1).unwrap();
        assert_abs_diff_eq!(lr, -2.0 * 100.0 * 0.9f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn kupiec_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let n = rng.gen_range(20..400);
            let x = rng.gen_range(0..=n);
            let alpha = rng.gen_range(0.01..0.5);
            let (lr, _) = kupiec_test(x, n, alpha).unwrap();
            let rate = x as f64 / n as f64;
            let mut oracle = 0.0;
            // brute force: per-observation log-likelihood contributions
            for i in 0..n {
                let (null_p, alt_p) = if i < x { (alpha, rate) } else { (1.0 - alpha, 1.0 - rate) };
                oracle += -2.0 * (null_p.ln() - if alt_p > 0.0 { alt_p.ln() } else { 0.0 });
            }
            // 0 log 0 terms vanish exactly when rate hits 0 or 1
            assert_abs_diff_eq!(lr, oracle.max(0.0), epsilon = 1e-8);
        }
    }

    #[test]
    fn christoffersen_decomposition_and_alternation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // i.i.d. violations near the nominal rate: small statistic
        let series: Vec<bool> = (0..2000).map(|_| rng.gen_bool(0.1)).collect();
        let (lr, p, degenerate) = christoffersen_test(&series, 0.1).unwrap();
        assert!(!degenerate);
        assert!(p > 0.01, "iid series should not be strongly rejected: lr = {lr}");

        // perfect alternation: huge independence component
        let alternating: Vec<bool> = (0..200).map(|i| i % 2 == 0).collect();
        let (lr_alt, p_alt, _) = christoffersen_test(&alternating, 0.5).unwrap();
        assert!(lr_alt > 50.0);
        assert!(p_alt < 1e-6);
    }

    #[test]
    fn christoffersen_matches_markov_likelihood_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let n = rng.gen_range(20..300);
            let series: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.2)).collect();
            let alpha = 0.2;
            let (lr, _, _) = christoffersen_test(&series, alpha).unwrap();

            // independent oracle: explicit likelihoods
            let x = series.iter().filter(|v| **v).count() as f64;
            let nn = n as f64;
            let rate = x / nn;
            let ll = |k: f64, p: f64| if k == 0.0 { 0.0 } else { k * p.ln() };
            let lr_uc =
                -2.0 * (ll(nn - x, 1.0 - alpha) + ll(x, alpha) - ll(nn - x, 1.0 - rate) - ll(x, rate));
            let (mut n00, mut n01, mut n10, mut n11) = (0.0, 0.0, 0.0, 0.0);
            for w in series.windows(2) {
                match (w[0], w[1]) {
                    (false, false) => n00 += 1.0,
                    (false, true) => n01 += 1.0,
                    (true, false) => n10 += 1.0,
                    (true, true) => n11 += 1.0,
                }
            }
            let pi = (n01 + n11) / (n00 + n01 + n10 + n11);
            let p01 = if n00 + n01 > 0.0 { n01 / (n00 + n01) } else { 0.0 };
            let p11 = if n10 + n11 > 0.0 { n11 / (n10 + n11) } else { 0.0 };
            let l0 = ll(n00 + n10, 1.0 - pi) + ll(n01 + n11, pi);
            let l1 = ll(n00, 1.0 - p01) + ll(n01, p01) + ll(n10, 1.0 - p11) + ll(n11, p11);
            let lr_ind = -2.0 * (l0 - l1);
            assert_abs_diff_eq!(lr, (lr_uc.max(0.0) + lr_ind.max(0.0)), epsilon = 1e-8);
        }
    }

    #[test]
    fn kupiec_order_invariant_christoffersen_not() {
        let series: Vec<bool> = (0..40).map(|i| i < 8).collect(); // block of violations
        let mut shuffled = series.clone();
        shuffled.reverse();
        let x = series.iter().filter(|v| **v).count();
        let (k1, _) = kupiec_test(x, series.len(), 0.2).unwrap();
        let (k2, _) = kupiec_test(x, shuffled.len(), 0.2).unwrap();
        assert_eq!(k1, k2);

        let alternating: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let blocked: Vec<bool> = (0..40).map(|i| i < 20).collect();
        let (c1, _, _) = christoffersen_test(&alternating, 0.5).unwrap();
        let (c2, _, _) = christoffersen_test(&blocked, 0.5).unwrap();
        assert!((c1 - c2).abs() > 1.0, "order must matter: {c1} vs {c2}");
    }

    #[test]
    fn crossing_day_counting() {
        let mut preds = Array3::zeros((3, 2, 4));
        for ((_, _, p), v) in preds.indexed_iter_mut() {
            *v = p as f64;
        }
        assert_eq!(crossing_days(preds.view()).0, 0);
        preds[[1, 1, 2]] = -5.0; // one inverted pair on day 1
        let (count, mask) = crossing_days(preds.view());
        assert_eq!(count, 1);
        assert_eq!(mask, vec![false, true, false]);
    }

    #[test]
    fn correlation_diagnostics() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut values = ndarray::Array4::zeros((50, 2, 3, 3));
        for ti in 0..50 {
            for di in 0..2 {
                let base: f64 = rng.gen_range(-1.0..1.0);
                for pi in 0..3 {
                    values[[ti, di, pi, 0]] = base;
                    values[[ti, di, pi, 1]] = -base;
                    values[[ti, di, pi, 2]] = rng.gen_range(-1.0..1.0);
                }
            }
        }
        let panel = ExpertPanel::new(values, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let (corr, flagged) = pearson_corr_matrix(&panel).unwrap();
        assert!(flagged.is_empty());
        assert_abs_diff_eq!(corr[[0, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(corr[[0, 1]], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(corr[[1, 0]], corr[[0, 1]], epsilon = 1e-15);
        assert!(corr[[0, 2]].abs() < 1.0);

        // textbook-formula oracle for a random pair
        let n = 100;
        let mut v = ndarray::Array4::zeros((n, 1, 1, 2));
        for ti in 0..n {
            v[[ti, 0, 0, 0]] = rng.gen_range(-1.0..1.0);
            v[[ti, 0, 0, 1]] = rng.gen_range(-1.0..1.0);
        }
        let a: Vec<f64> = (0..n).map(|i| v[[i, 0, 0, 0]]).collect();
        let b: Vec<f64> = (0..n).map(|i| v[[i, 0, 0, 1]]).collect();
        let pnl = ExpertPanel::new(v, vec!["a".into(), "b".into()]).unwrap();
        let (corr, _) = pearson_corr_matrix(&pnl).unwrap();
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let sa: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>().sqrt();
        let sb: f64 = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>().sqrt();
        assert_abs_diff_eq!(corr[[0, 1]], cov / (sa * sb), epsilon = 1e-12);
    }

    #[test]
    fn zero_variance_expert_is_flagged() {
        let mut v = ndarray::Array4::zeros((10, 1, 1, 2));
        for ti in 0..10 {
            v[[ti, 0, 0, 0]] = 1.0; // constant
            v[[ti, 0, 0, 1]] = ti as f64;
        }
        let panel = ExpertPanel::new(v, vec!["const".into(), "ramp".into()]).unwrap();
        let (corr, flagged) = pearson_corr_matrix(&panel).unwrap();
        assert_eq!(flagged, vec![0]);
        assert!(corr[[0, 1]].is_nan());
    }

    #[test]
    fn significance_codes() {
        assert_eq!(significance_code(0.0005), "***");
        assert_eq!(significance_code(0.005), "**");
        assert_eq!(significance_code(0.03), "*");
        assert_eq!(significance_code(0.07), ".");
        assert_eq!(significance_code(0.5), "");
    }
}
