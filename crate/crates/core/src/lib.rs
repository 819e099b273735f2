//! Online combination of multivariate probabilistic forecasts.
//!
//! Experts report quantile forecasts for every marginal of a multivariate
//! target. Weights are learned online against the CRPS, with optional
//! spline-based smoothing of the weight surface across probabilities and
//! marginals, shrinkage operators, forgetting, and online hyperparameter
//! selection over a sampled candidate grid.

pub mod error;
pub mod eval;
pub mod grids;
pub mod io;
pub mod learner;
pub mod loss;
pub mod panel;
pub mod scenario;
pub mod splines;
pub mod tuner;

pub use error::{CombineError, Result};
pub use grids::{MarginalGrid, ProbGrid};
pub use learner::{Learner, LearnerConfig, LearnerState, Scheme};
pub use panel::{validate_panel, ExpertPanel, ObservationSeries, ValidatedBundle, WeightField};
