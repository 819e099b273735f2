use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CombineError, Result};

/// A B-spline design matrix: one row per grid point, one column per basis
/// function. Rows form a partition of unity on the basis support.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisMatrix {
    pub values: DMatrix<f64>,
    /// Generating knot sequence; empty for the synthetic identity/constant bases.
    pub knots: Vec<f64>,
    pub degree: usize,
}

impl BasisMatrix {
    /// Identity basis: one indicator column per grid point (pointwise case).
    pub fn identity(n: usize) -> Self {
        Self {
            values: DMatrix::identity(n, n),
            knots: Vec::new(),
            degree: 0,
        }
    }

    /// Single all-ones column (constant case).
    pub fn constant(n: usize) -> Self {
        Self {
            values: DMatrix::from_element(n, 1, 1.0),
            knots: Vec::new(),
            degree: 0,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_basis(&self) -> usize {
        self.values.ncols()
    }
}

/// Evaluates the B-spline basis of the given degree on a grid via the
/// Cox-de Boor recursion.
///
/// Every grid point must lie inside the support [knots[deg], knots[n-1-deg]];
/// the right support boundary is treated as part of the last span so the
/// partition of unity holds on the closed support.
pub fn bspline_basis(grid: &[f64], knots: &[f64], degree: usize) -> Result<BasisMatrix> {
    let n_knots = knots.len();
    if n_knots < degree + 2 {
        return Err(CombineError::InvalidArgument(format!(
            "{n_knots} knots are too few for degree {degree}"
        )));
    }
    for w in knots.windows(2) {
        if w[1] < w[0] {
            return Err(CombineError::InvalidArgument(
                "knot sequence must be nondecreasing".into(),
            ));
        }
    }
    let n_basis = n_knots - degree - 1;
    let lo = knots[degree];
    let hi = knots[n_knots - 1 - degree];
    let mut values = DMatrix::zeros(grid.len(), n_basis);

    for (row, &x) in grid.iter().enumerate() {
        if !x.is_finite() || x < lo - 1e-14 || x > hi + 1e-14 {
            return Err(CombineError::OutsideSupport { point: x, lo, hi });
        }
        for col in 0..n_basis {
            values[(row, col)] = cox_de_boor(x, col, degree, knots, lo, hi);
        }
    }
    Ok(BasisMatrix {
        values,
        knots: knots.to_vec(),
        degree,
    })
}

fn cox_de_boor(x: f64, i: usize, deg: usize, knots: &[f64], lo: f64, hi: f64) -> f64 {
    if deg == 0 {
        // half-open spans, closing the last interval at the support boundary
        let in_span = if x >= hi {
            knots[i] < hi && hi <= knots[i + 1]
        } else {
            knots[i] <= x && x < knots[i + 1]
        };
        let _ = lo;
        return if in_span { 1.0 } else { 0.0 };
    }
    let mut out = 0.0;
    let d1 = knots[i + deg] - knots[i];
    if d1 > 0.0 {
        out += (x - knots[i]) / d1 * cox_de_boor(x, i, deg - 1, knots, lo, hi);
    }
    let d2 = knots[i + deg + 1] - knots[i + 1];
    if d2 > 0.0 {
        out += (knots[i + deg + 1] - x) / d2 * cox_de_boor(x, i + 1, deg - 1, knots, lo, hi);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splines::{make_knots, KnotSpec};
    use approx::assert_abs_diff_eq;

    fn assert_partition_of_unity(b: &BasisMatrix) {
        for r in 0..b.n_rows() {
            let s: f64 = b.values.row(r).iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn degree_zero_is_indicator_basis() {
        let b = bspline_basis(&[0.25, 0.75], &[0.0, 0.5, 1.0], 0).unwrap();
        assert_eq!(b.n_basis(), 2);
        assert_eq!(b.values[(0, 0)], 1.0);
        assert_eq!(b.values[(0, 1)], 0.0);
        assert_eq!(b.values[(1, 0)], 0.0);
        assert_eq!(b.values[(1, 1)], 1.0);
    }

    #[test]
    fn partition_of_unity_various_specs() {
        let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        for spec in [
            KnotSpec::equidistant(10, 3),
            KnotSpec::equidistant(98, 3),
            KnotSpec {
                inner: 12,
                degree: 2,
                mu: 0.3,
                sigma: 0.7,
                noncentrality: 4.0,
                tail: 1.5,
            },
        ] {
            let knots = make_knots(&spec).unwrap();
            let b = bspline_basis(&grid, &knots, spec.degree).unwrap();
            assert_eq!(b.n_basis(), knots.len() - spec.degree - 1);
            assert!(b.values.iter().all(|&v| v >= -1e-12));
            assert_partition_of_unity(&b);
        }
    }

    #[test]
    fn cubic_equidistant_interior_columns_are_shifted_copies() {
        let spec = KnotSpec::equidistant(12, 3);
        let knots = make_knots(&spec).unwrap();
        let h = knots[1] - knots[0];
        // dense grid aligned with the knot spacing
        let grid: Vec<f64> = (0..=56).map(|i| i as f64 / 56.0).collect();
        let b = bspline_basis(&grid, &knots, 3).unwrap();
        let shift = (h * 56.0).round() as usize; // grid points per knot interval
        // interior columns, away from the boundary
        for col in 4..b.n_basis() - 5 {
            for row in 0..grid.len() - shift {
                assert_abs_diff_eq!(
                    b.values[(row, col)],
                    b.values[(row + shift, col + 1)],
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn support_violation_names_the_point() {
        let knots = make_knots(&KnotSpec::equidistant(4, 2)).unwrap();
        let err = bspline_basis(&[1.7], &knots, 2).unwrap_err();
        assert!(err.to_string().contains("1.7"));
    }

    #[test]
    fn boundary_points_are_inside_the_support() {
        let knots = make_knots(&KnotSpec::equidistant(4, 3)).unwrap();
        let b = bspline_basis(&[0.0, 1.0], &knots, 3).unwrap();
        assert_partition_of_unity(&b);
    }
}
