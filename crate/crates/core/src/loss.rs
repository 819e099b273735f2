//! Quantile loss, its subgradient, and the grid approximation of the CRPS.

use crate::error::{CombineError, Result};
use crate::grids::ProbGrid;

/// Quantile (pinball) loss rho_p(y - pred) with rho_p(z) = z(p - 1{z < 0}).
pub fn quantile_loss(p: f64, pred: f64, y: f64) -> Result<f64> {
    check_prob(p)?;
    check_finite(pred, "pred")?;
    check_finite(y, "y")?;
    let z = y - pred;
    Ok(z * (p - if z < 0.0 { 1.0 } else { 0.0 }))
}

/// Subgradient of the quantile loss in its first argument: 1{pred > y} - p.
///
/// At pred == y the right-derivative convention is used, returning -p.
pub fn quantile_loss_subgradient(p: f64, pred: f64, y: f64) -> Result<f64> {
    check_prob(p)?;
    check_finite(pred, "pred")?;
    check_finite(y, "y")?;
    Ok(if pred > y { 1.0 - p } else { -p })
}

/// CRPS approximation as the mean quantile loss over the probability grid.
///
/// With `scale2` set, the textbook factor of 2 is restored; by default it is
/// omitted so that scores are comparable across reporting conventions.
pub fn crps_from_quantiles(grid: &ProbGrid, preds: &[f64], y: f64, scale2: bool) -> Result<f64> {
    if preds.len() != grid.len() {
        return Err(CombineError::ShapeMismatch(format!(
            "{} quantile predictions for a grid of length {}",
            preds.len(),
            grid.len()
        )));
    }
    let mut acc = 0.0;
    for (&p, &pred) in grid.iter().zip(preds) {
        acc += quantile_loss(p, pred, y)?;
    }
    let mean = acc / grid.len() as f64;
    Ok(if scale2 { 2.0 * mean } else { mean })
}

/// Monotone nondecreasing rearrangement of a quantile vector.
pub fn sort_quantiles(preds: &[f64]) -> Result<Vec<f64>> {
    for (i, &v) in preds.iter().enumerate() {
        if !v.is_finite() {
            return Err(CombineError::NonFinite(format!(
                "quantile prediction at index {i}"
            )));
        }
    }
    let mut out = preds.to_vec();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(out)
}

/// Sorts a quantile vector in place, assuming entries are already finite.
pub fn sort_quantiles_in_place(preds: &mut [f64]) {
    preds.sort_by(|a, b| a.partial_cmp(b).unwrap());
}

fn check_prob(p: f64) -> Result<()> {
    if !p.is_finite() || p <= 0.0 || p >= 1.0 {
        return Err(CombineError::InvalidArgument(format!(
            "probability {p} is not in (0, 1)"
        )));
    }
    Ok(())
}

fn check_finite(v: f64, name: &str) -> Result<()> {
    if !v.is_finite() {
        return Err(CombineError::NonFinite(name.into()));
    }
    Ok(())
}
