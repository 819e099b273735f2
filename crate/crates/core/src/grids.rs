use serde::{Deserialize, Serialize};

use crate::error::{CombineError, Result};

/// A strictly increasing grid of probabilities in the open unit interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbGrid {
    probs: Vec<f64>,
}

impl ProbGrid {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(CombineError::InvalidArgument(
                "probability grid must be nonempty".into(),
            ));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p <= 0.0 || p >= 1.0 {
                return Err(CombineError::InvalidArgument(format!(
                    "probability {p} at index {i} is not in (0, 1)"
                )));
            }
            if i > 0 && probs[i - 1] >= p {
                return Err(CombineError::InvalidArgument(format!(
                    "probability grid is not strictly increasing at index {i}"
                )));
            }
        }
        Ok(Self { probs })
    }

    /// The equidistant percentile grid (0.01, ..., 0.99).
    pub fn percentiles() -> Self {
        let probs = (1..100).map(|i| i as f64 / 100.0).collect();
        Self { probs }
    }

    /// Equidistant grid of `n` probabilities i/(n+1).
    pub fn equidistant(n: usize) -> Result<Self> {
        Self::new((1..=n).map(|i| i as f64 / (n + 1) as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.probs.iter()
    }
}

/// Ordered coordinates of the multivariate dimension (e.g. hours 1..24).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalGrid {
    coords: Vec<f64>,
}

impl MarginalGrid {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(CombineError::InvalidArgument(
                "marginal grid must be nonempty".into(),
            ));
        }
        for (i, &c) in coords.iter().enumerate() {
            if !c.is_finite() {
                return Err(CombineError::NonFinite(format!(
                    "marginal coordinate at index {i}"
                )));
            }
            if i > 0 && coords[i - 1] >= c {
                return Err(CombineError::InvalidArgument(format!(
                    "marginal grid is not strictly increasing at index {i}"
                )));
            }
        }
        Ok(Self { coords })
    }

    /// Grid 1, 2, ..., n.
    pub fn indices(n: usize) -> Result<Self> {
        Self::new((1..=n).map(|i| i as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    /// Coordinates rescaled affinely onto [0, 1], used to place spline bases.
    pub fn unit_coords(&self) -> Vec<f64> {
        let lo = self.coords[0];
        let hi = *self.coords.last().unwrap();
        if self.coords.len() == 1 || hi == lo {
            return vec![0.5];
        }
        self.coords.iter().map(|c| (c - lo) / (hi - lo)).collect()
    }
}
