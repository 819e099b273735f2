//! Forecast panels, observation series, weight fields, and shape validation.

use ndarray::{Array2, Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{CombineError, Result};
use crate::grids::{MarginalGrid, ProbGrid};

/// Expert quantile forecasts indexed (time, marginal, probability, expert).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertPanel {
    pub values: Array4<f64>,
    pub expert_names: Vec<String>,
}

impl ExpertPanel {
    pub fn new(values: Array4<f64>, expert_names: Vec<String>) -> Result<Self> {
        if values.shape()[3] != expert_names.len() {
            return Err(CombineError::ShapeMismatch(format!(
                "panel has {} experts but {} names",
                values.shape()[3],
                expert_names.len()
            )));
        }
        Ok(Self {
            values,
            expert_names,
        })
    }

    pub fn n_time(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_marginals(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn n_probs(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn n_experts(&self) -> usize {
        self.values.shape()[3]
    }
}

/// Realized outcomes indexed (time, marginal).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationSeries {
    pub values: Array2<f64>,
}

impl ObservationSeries {
    pub fn new(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn n_time(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_marginals(&self) -> usize {
        self.values.shape()[1]
    }
}

/// One weight surface per expert at a fixed time, indexed (marginal, probability, expert).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightField {
    pub values: Array3<f64>,
}

impl WeightField {
    /// Uniform 1/K weights.
    pub fn uniform(d: usize, p: usize, k: usize) -> Self {
        Self {
            values: Array3::from_elem((d, p, k), 1.0 / k as f64),
        }
    }

    /// Checks that expert weights sum to one at every (marginal, probability) cell.
    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let (d, p, _) = self.values.dim();
        for di in 0..d {
            for pi in 0..p {
                let s: f64 = self.values.slice(ndarray::s![di, pi, ..]).sum();
                if (s - 1.0).abs() > tol {
                    return Err(CombineError::InvalidArgument(format!(
                        "weights at (d={di}, p={pi}) sum to {s}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A panel, observations, and grids that passed joint validation.
#[derive(Debug, Clone)]
pub struct ValidatedBundle {
    pub panel: ExpertPanel,
    pub obs: ObservationSeries,
    pub pgrid: ProbGrid,
    pub dgrid: MarginalGrid,
}

/// Checks shape consistency and finiteness of a forecast bundle.
///
/// All violations are collected and reported together.
pub fn validate_panel(
    panel: ExpertPanel,
    obs: ObservationSeries,
    pgrid: ProbGrid,
    dgrid: MarginalGrid,
) -> Result<ValidatedBundle> {
    let mut issues = Vec::new();
    let (t, d, p, k) = panel.values.dim();

    if obs.n_time() != t {
        issues.push(format!(
            "time axis mismatch: panel has T={t}, observations have T={}",
            obs.n_time()
        ));
    }
    if obs.n_marginals() != d {
        issues.push(format!(
            "marginal axis mismatch: panel has D={d}, observations have D={}",
            obs.n_marginals()
        ));
    }
    if pgrid.len() != p {
        issues.push(format!(
            "probability axis mismatch: panel has P={p}, grid has {}",
            pgrid.len()
        ));
    }
    if dgrid.len() != d {
        issues.push(format!(
            "marginal axis mismatch: panel has D={d}, grid has {}",
            dgrid.len()
        ));
    }
    if panel.expert_names.len() != k {
        issues.push(format!(
            "expert axis mismatch: panel has K={k}, {} names given",
            panel.expert_names.len()
        ));
    }

    for ((ti, di, pi, ki), &v) in panel.values.indexed_iter() {
        if !v.is_finite() {
            issues.push(format!(
                "non-finite forecast at (t={ti}, d={di}, p={pi}, k={ki})"
            ));
        }
    }
    for ((ti, di), &v) in obs.values.indexed_iter() {
        if !v.is_finite() {
            issues.push(format!("non-finite observation at (t={ti}, d={di})"));
        }
    }

    if issues.is_empty() {
        Ok(ValidatedBundle {
            panel,
            obs,
            pgrid,
            dgrid,
        })
    } else {
        Err(CombineError::Validation { issues })
    }
}
