//! Synthetic forecast panels with known data-generating processes, used by
//! the simulate command and the self-checks.
//!
//! The truth is Gaussian with a slowly moving location per marginal; experts
//! report parametric quantiles distorted by a per-segment bias and dispersion
//! factor, plus optional quantile-level noise. Segment boundaries act as
//! structural breaks.

use ndarray::{Array2, Array3, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal as NormalSampler};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{CombineError, Result};
use crate::grids::{MarginalGrid, ProbGrid};
use crate::panel::{validate_panel, ExpertPanel, ObservationSeries, ValidatedBundle};

/// Behavior of the expert pool over one stretch of time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segment {
    /// Number of time steps in this segment.
    pub length: usize,
    /// Additive location bias per expert.
    pub bias: Vec<f64>,
    /// Multiplicative dispersion factor per expert (1 = calibrated).
    pub dispersion: Vec<f64>,
}

/// Full description of a synthetic experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_marginals: usize,
    pub n_probs: usize,
    /// Standard deviation of the true conditional distribution.
    pub truth_scale: f64,
    /// Standard deviation of i.i.d. noise added to every reported quantile.
    pub quantile_noise: f64,
    pub segments: Vec<Segment>,
}

impl ScenarioSpec {
    /// One regime: expert 0 calibrated, the rest biased and overdispersed.
    pub fn calm(t: usize, d: usize, p: usize, k: usize) -> Self {
        let bias = (0..k).map(|i| 0.8 * i as f64).collect();
        let dispersion = (0..k).map(|i| 1.0 + 0.4 * i as f64).collect();
        Self {
            n_marginals: d,
            n_probs: p,
            truth_scale: 1.0,
            quantile_noise: 0.05,
            segments: vec![Segment {
                length: t,
                bias,
                dispersion,
            }],
        }
    }

    /// Two regimes of equal length; the calibrated expert moves from index 0
    /// to the last index at the break.
    pub fn with_break(t: usize, d: usize, p: usize, k: usize) -> Self {
        let first = Segment {
            length: t / 2,
            bias: (0..k).map(|i| 0.8 * i as f64).collect(),
            dispersion: vec![1.0; k],
        };
        let second = Segment {
            length: t - t / 2,
            bias: (0..k).rev().map(|i| 0.8 * i as f64).collect(),
            dispersion: vec![1.0; k],
        };
        Self {
            n_marginals: d,
            n_probs: p,
            truth_scale: 1.0,
            quantile_noise: 0.05,
            segments: vec![first, second],
        }
    }

    pub fn n_time(&self) -> usize {
        self.segments.iter().map(|s| s.length).sum()
    }

    pub fn n_experts(&self) -> usize {
        self.segments.first().map_or(0, |s| s.bias.len())
    }

    fn validate(&self) -> Result<()> {
        if self.segments.is_empty() || self.n_time() == 0 {
            return Err(CombineError::InvalidArgument(
                "scenario needs at least one nonempty segment".into(),
            ));
        }
        let k = self.n_experts();
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.bias.len() != k || seg.dispersion.len() != k {
                return Err(CombineError::InvalidArgument(format!(
                    "segment {i} sizes its expert pool differently from segment 0"
                )));
            }
            if seg.dispersion.iter().any(|&s| !(s > 0.0)) {
                return Err(CombineError::InvalidArgument(format!(
                    "segment {i} has a nonpositive dispersion factor"
                )));
            }
        }
        if !(self.truth_scale > 0.0) {
            return Err(CombineError::InvalidArgument(
                "truth scale must be positive".into(),
            ));
        }
        if self.quantile_noise < 0.0 {
            return Err(CombineError::InvalidArgument(
                "quantile noise must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Generated data plus the oracle information the generator knows.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub bundle: ValidatedBundle,
    /// Quantiles of the true conditional distribution, (T, D, P).
    pub true_quantiles: Array3<f64>,
    /// Index of the best expert at each time step (smallest distortion).
    pub best_expert: Vec<usize>,
    /// First time index of each segment.
    pub break_points: Vec<usize>,
}

fn best_in_segment(seg: &Segment) -> usize {
    // distortion: squared bias plus squared log-dispersion
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for (k, (&b, &s)) in seg.bias.iter().zip(&seg.dispersion).enumerate() {
        let score = b * b + s.ln().powi(2);
        if score < best_score {
            best_score = score;
            best = k;
        }
    }
    best
}

/// Draws a full synthetic panel; identical seeds give identical output.
pub fn generate_scenario(spec: &ScenarioSpec, seed: u64) -> Result<Scenario> {
    spec.validate()?;
    let t = spec.n_time();
    let d = spec.n_marginals;
    let k = spec.n_experts();
    let pgrid = ProbGrid::equidistant(spec.n_probs)?;
    let p = pgrid.len();
    let dgrid = MarginalGrid::indices(d)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::standard();
    let z: Vec<f64> = pgrid.iter().map(|&pr| std_normal.inverse_cdf(pr)).collect();
    let noise = NormalSampler::new(0.0, 1.0).unwrap();

    let mut values = Array4::zeros((t, d, p, k));
    let mut obs = Array2::zeros((t, d));
    let mut true_q = Array3::zeros((t, d, p));
    let mut best_expert = Vec::with_capacity(t);
    let mut break_points = Vec::with_capacity(spec.segments.len());

    let mut ti = 0;
    for seg in &spec.segments {
        break_points.push(ti);
        let best = best_in_segment(seg);
        for _ in 0..seg.length {
            best_expert.push(best);
            for di in 0..d {
                // slowly drifting diurnal-style location
                let loc = (2.0 * std::f64::consts::PI * (ti as f64 / 96.0 + di as f64 / d as f64))
                    .sin();
                obs[[ti, di]] = loc + spec.truth_scale * noise.sample(&mut rng);
                for pi in 0..p {
                    true_q[[ti, di, pi]] = loc + spec.truth_scale * z[pi];
                    for ki in 0..k {
                        let eps = if spec.quantile_noise > 0.0 {
                            spec.quantile_noise * noise.sample(&mut rng)
                        } else {
                            0.0
                        };
                        values[[ti, di, pi, ki]] = loc
                            + seg.bias[ki]
                            + seg.dispersion[ki] * spec.truth_scale * z[pi]
                            + eps;
                    }
                }
            }
            ti += 1;
        }
    }

    let names = (0..k).map(|i| format!("expert_{i}")).collect();
    let panel = ExpertPanel::new(values, names)?;
    let bundle = validate_panel(panel, ObservationSeries::new(obs), pgrid, dgrid)?;
    Ok(Scenario {
        bundle,
        true_quantiles: true_q,
        best_expert,
        break_points,
    })
}
