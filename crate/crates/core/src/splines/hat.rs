use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{CombineError, Result};
use crate::splines::BasisMatrix;

/// Precomputed linear smoother B (B'B + lambda * mix)^{-1} B'.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HatMatrix {
    pub values: DMatrix<f64>,
}

impl HatMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            values: DMatrix::identity(n, n),
        }
    }

    /// Row-averaging smoother, the hat matrix of the single-column constant basis.
    pub fn averaging(n: usize) -> Self {
        Self {
            values: DMatrix::from_element(n, n, 1.0 / n as f64),
        }
    }
}

/// Builds the hat matrix B (B'B + lambda (alpha P1 + (1-alpha) P2))^{-1} B'.
///
/// P1 and P2 are the scaled first- and second-difference penalties of the
/// basis. The system matrix is factorized once; the hat matrix does not depend
/// on time-varying quantities and is reused across all online steps.
pub fn hat_matrix(
    basis: &BasisMatrix,
    lambda: f64,
    alpha: f64,
    p1: &DMatrix<f64>,
    p2: Option<&DMatrix<f64>>,
) -> Result<HatMatrix> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(CombineError::InvalidArgument(format!(
            "lambda = {lambda} must be finite and nonnegative"
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CombineError::InvalidArgument(format!(
            "alpha = {alpha} must lie in [0, 1]"
        )));
    }
    let b = &basis.values;
    let m = b.ncols();
    if m == 1 {
        // constant basis: the smoother is plain averaging
        return Ok(HatMatrix::averaging(b.nrows()));
    }
    if p1.nrows() != m || p1.ncols() != m {
        return Err(CombineError::ShapeMismatch(format!(
            "penalty P1 is {}x{}, basis has {m} columns",
            p1.nrows(),
            p1.ncols()
        )));
    }
    let mut system = b.transpose() * b;
    if lambda > 0.0 {
        system += lambda * alpha * p1;
        if alpha < 1.0 {
            let p2 = p2.ok_or_else(|| {
                CombineError::InvalidArgument(
                    "alpha < 1 requires a second-difference penalty".into(),
                )
            })?;
            system += lambda * (1.0 - alpha) * p2;
        }
    }
    let chol = Cholesky::new(system).ok_or_else(|| {
        CombineError::SingularSystem(format!(
            "B'B + lambda * penalty of size {m} is not positive definite"
        ))
    })?;
    let inv = chol.inverse();
    Ok(HatMatrix {
        values: b * inv * b.transpose(),
    })
}
