use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{CombineError, Result};

/// Parameters steering the placement of B-spline knots on (0, 1).
///
/// The defaults (mu = 0.5, sigma = 1, noncentrality = 0, tail = 1) produce
/// equidistant knots with interior spacing 1/(J+2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnotSpec {
    /// Inner-knot count J.
    pub inner: usize,
    /// Spline degree; the order is degree + 1.
    pub degree: usize,
    /// Location parameter mu in (0, 1).
    pub mu: f64,
    /// Scale parameter sigma > 0.
    pub sigma: f64,
    /// Non-centrality parameter c (may be negative; negative values mirror).
    pub noncentrality: f64,
    /// Tail-weight parameter tau > 0 scaling the exterior knot spacing.
    pub tail: f64,
}

impl KnotSpec {
    pub fn equidistant(inner: usize, degree: usize) -> Self {
        Self {
            inner,
            degree,
            mu: 0.5,
            sigma: 1.0,
            noncentrality: 0.0,
            tail: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.inner < 1 {
            return Err(CombineError::InvalidArgument(
                "knot spec requires at least one inner knot".into(),
            ));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(CombineError::InvalidArgument(format!(
                "knot location mu = {} must lie in (0, 1)",
                self.mu
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(CombineError::InvalidArgument(format!(
                "knot scale sigma = {} must be positive",
                self.sigma
            )));
        }
        if !(self.tail > 0.0) {
            return Err(CombineError::InvalidArgument(format!(
                "tail weight tau = {} must be positive",
                self.tail
            )));
        }
        if !self.noncentrality.is_finite() {
            return Err(CombineError::NonFinite("knot noncentrality".into()));
        }
        Ok(())
    }
}

const POISSON_TAIL: f64 = 1e-12;
const MAX_SERIES_TERMS: usize = 500;

/// CDF of the non-central beta distribution via its Poisson mixture series.
///
/// The series is truncated once the accumulated Poisson weight exceeds
/// 1 - 1e-12, capped at 500 terms. At c = 0 this is the central regularized
/// incomplete beta function.
pub fn noncentral_beta_cdf(x: f64, a: f64, b: f64, c: f64) -> Result<f64> {
    if !(x >= 0.0 && x <= 1.0) {
        return Err(CombineError::InvalidArgument(format!(
            "beta cdf argument x = {x} outside [0, 1]"
        )));
    }
    if !(a > 0.0 && b > 0.0) {
        return Err(CombineError::InvalidArgument(format!(
            "beta shape parameters must be positive, got a = {a}, b = {b}"
        )));
    }
    if !(c >= 0.0) {
        return Err(CombineError::InvalidArgument(format!(
            "noncentrality c = {c} must be nonnegative"
        )));
    }
    if c == 0.0 {
        return Ok(beta_reg(a, b, x));
    }
    let half_c = c / 2.0;
    let mut weight = (-half_c).exp(); // Poisson pmf at j = 0
    let mut cum_weight = 0.0;
    let mut cdf = 0.0;
    for j in 0..MAX_SERIES_TERMS {
        cdf += weight * beta_reg(a + j as f64, b, x);
        cum_weight += weight;
        if 1.0 - cum_weight < POISSON_TAIL {
            break;
        }
        weight *= half_c / (j as f64 + 1.0);
    }
    Ok(cdf.clamp(0.0, 1.0))
}

/// Places B-spline knots on (0, 1).
///
/// Central knots follow the non-central beta CDF evaluated on the equidistant
/// anchor grid (0, ..., J+2)/(J+2), mirrored when the noncentrality is
/// negative. `degree` exterior knots are appended on each side with spacing
/// taken from the adjacent central block and scaled by the tail weight. The
/// output has J + 2*degree + 3 nondecreasing entries.
pub fn make_knots(spec: &KnotSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let j = spec.inner;
    let deg = spec.degree;
    let m = (j + 2) as f64;

    let a = 2.0 * spec.sigma * (1.0 - spec.mu);
    let b = 2.0 * spec.sigma * spec.mu;

    let mut central: Vec<f64> = (0..=j + 2)
        .map(|i| noncentral_beta_cdf(i as f64 / m, a, b, spec.noncentrality.abs()))
        .collect::<Result<_>>()?;
    if spec.noncentrality < 0.0 {
        central = central.iter().rev().map(|v| 1.0 - v).collect();
    }

    let tau = spec.tail.abs();
    let left_gap = central[1] - central[0];
    // literal pseudocode indexing: the gap between the 1-based entries J+1 and J+2
    let right_gap = central[j + 1] - central[j];

    let mut knots = Vec::with_capacity(j + 2 * deg + 3);
    for i in (1..=deg).rev() {
        knots.push(-tau * left_gap * i as f64);
    }
    knots.extend_from_slice(&central);
    for i in 1..=deg {
        knots.push(tau * right_gap * i as f64 + 1.0);
    }
    Ok(knots)
}
