use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{CombineError, Result};

/// All hidden state of the online aggregation loop.
///
/// The reduced arrays are shaped (Dr, Pr, K); the expanded weight field is
/// shaped (D, P, K).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerState {
    /// Completed step count.
    pub step: usize,
    /// Reduced-basis weights after shrinkage.
    pub beta: Array3<f64>,
    /// Prior reduced weights (pseudo-inverse projection of the uniform field).
    pub beta0: Array3<f64>,
    /// Cumulative (optionally forgotten) regret.
    pub cum_regret: Array3<f64>,
    /// Second-moment estimator of the regret.
    pub variance: Array3<f64>,
    /// Range estimator of the regret.
    pub range: Array3<f64>,
    /// Per-cell, per-expert learning rates.
    pub eta: Array3<f64>,
    /// Expanded weight field on the full (D, P) grid.
    pub weights: Array3<f64>,
}

impl LearnerState {
    pub fn check_finite(&self) -> Result<()> {
        let arrays: [(&str, &Array3<f64>); 6] = [
            ("beta", &self.beta),
            ("cum_regret", &self.cum_regret),
            ("variance", &self.variance),
            ("range", &self.range),
            ("eta", &self.eta),
            ("weights", &self.weights),
        ];
        for (name, arr) in arrays {
            if let Some((idx, v)) = arr.indexed_iter().find(|(_, v)| !v.is_finite()) {
                return Err(CombineError::DivergedState {
                    step: self.step,
                    detail: format!("{name}[{idx:?}] = {v}"),
                });
            }
        }
        Ok(())
    }
}

const SNAPSHOT_VERSION: u32 = 1;

/// Versioned on-disk representation of a [`LearnerState`].
#[derive(Debug, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub version: u32,
    pub state: LearnerState,
}

impl StateSnapshot {
    pub fn new(state: LearnerState) -> Self {
        Self {
            version: SNAPSHOT_VERSION,
            state,
        }
    }

    pub fn to_writer<W: std::io::Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)
            .map_err(|e| CombineError::InvalidArgument(format!("snapshot encode: {e}")))
    }

    pub fn from_reader<R: std::io::Read>(r: R) -> Result<Self> {
        let snap: StateSnapshot = serde_json::from_reader(r)
            .map_err(|e| CombineError::InvalidArgument(format!("snapshot decode: {e}")))?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(CombineError::InvalidArgument(format!(
                "unsupported snapshot version {}",
                snap.version
            )));
        }
        Ok(snap)
    }
}
