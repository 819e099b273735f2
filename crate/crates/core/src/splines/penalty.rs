use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CombineError, Result};

/// Roughness penalty configuration for one smoothing axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    /// Difference order q (1 or 2 for the mixed form).
    pub order: usize,
    /// Roughness penalty lambda >= 0.
    pub lambda: f64,
    /// Mixing weight in [0, 1] between first- and second-difference penalties.
    pub alpha: f64,
}

impl PenaltySpec {
    pub fn new(order: usize, lambda: f64, alpha: f64) -> Result<Self> {
        if order == 0 {
            return Err(CombineError::InvalidArgument(
                "difference order must be at least 1".into(),
            ));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(CombineError::InvalidArgument(format!(
                "penalty lambda = {lambda} must be finite and nonnegative"
            )));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(CombineError::InvalidArgument(format!(
                "penalty mixing alpha = {alpha} must lie in [0, 1]"
            )));
        }
        Ok(Self {
            order,
            lambda,
            alpha,
        })
    }

    /// First-difference penalty, which shrinks toward constant weights.
    pub fn first_difference(lambda: f64) -> Self {
        Self {
            order: 1,
            lambda,
            alpha: 1.0,
        }
    }
}

fn first_difference_op(cols: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(cols - 1, cols);
    for i in 0..cols - 1 {
        d[(i, i)] = -1.0;
        d[(i, i + 1)] = 1.0;
    }
    d
}

/// Diagonal knot-spacing weights for difference level `j`; entry i holds
/// (t[o+i] - t[j+i]) / (o - j).
fn weight_diagonal(knots: &[f64], order: usize, j: usize, len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| (knots[order + i] - knots[j + i]) / (order - j) as f64)
        .collect()
}

/// Weighted difference matrix for a (possibly non-equidistant) knot sequence.
///
/// Composes W_j^{-1} * Delta from j = 1 up to q, mapping the m = #knots - o
/// basis coefficients to m - q weighted differences. For equidistant knots the
/// result is proportional to the plain q-th difference operator.
pub fn difference_matrix_general(knots: &[f64], order: usize, q: usize) -> Result<DMatrix<f64>> {
    if q == 0 || q >= order {
        return Err(CombineError::InvalidArgument(format!(
            "difference order q = {q} must satisfy 1 <= q < o = {order}"
        )));
    }
    let m = knots
        .len()
        .checked_sub(order)
        .filter(|&m| m > q)
        .ok_or_else(|| {
            CombineError::InvalidArgument(format!(
                "{} knots are too few for order {order} and difference order {q}",
                knots.len()
            ))
        })?;

    let mut out = DMatrix::identity(m, m);
    for j in 1..=q {
        let rows = m - j;
        let mut step = first_difference_op(m - j + 1);
        let w = weight_diagonal(knots, order, j, rows);
        for (i, wi) in w.iter().enumerate() {
            if *wi <= 0.0 {
                return Err(CombineError::InvalidArgument(format!(
                    "degenerate knot spacing weight at difference level {j}, row {i}"
                )));
            }
            for c in 0..step.ncols() {
                step[(i, c)] /= wi;
            }
        }
        out = step * out;
    }
    Ok(out)
}

/// Scaled penalty matrix (Tr(W_q)/(m-q))^{2q} * D'D.
///
/// The trace scaling makes lambda values comparable between equidistant and
/// non-equidistant knot sequences; for equidistant knots the result equals the
/// standard difference penalty.
pub fn penalty_matrix(dmat: &DMatrix<f64>, knots: &[f64], order: usize, q: usize) -> DMatrix<f64> {
    let m = knots.len() - order;
    let w = weight_diagonal(knots, order, q, m - q);
    let trace: f64 = w.iter().sum();
    let scale = (trace / (m - q) as f64).powi(2 * q as i32);
    scale * (dmat.transpose() * dmat)
}
