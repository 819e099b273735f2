//! The online aggregation engine: second-order multiplicative-weights updates
//! on a basis-reduced regret surface, with penalized smoothing, shrinkage
//! operators, and forgetting.

mod schemes;
mod state;

pub use schemes::{apply_shrinkage, boa_update, ewa_update, ftl_select, mlpoly_update};
pub use state::{LearnerState, StateSnapshot};

use nalgebra::DMatrix;
use ndarray::{s, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{CombineError, Result};
use crate::grids::{MarginalGrid, ProbGrid};
use crate::loss::{quantile_loss_subgradient, sort_quantiles_in_place};
use crate::panel::{ValidatedBundle, WeightField};
use crate::splines::{
    bspline_basis, difference_matrix_general, hat_matrix, make_knots, penalty_matrix, BasisMatrix,
    HatMatrix, KnotSpec, PenaltySpec,
};

/// Weighting scheme used for the per-cell update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    Boa,
    Ewa,
    MlPoly,
    Ftl,
}

/// Basis choice for one smoothing axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BasisKind {
    /// One indicator per grid point: no reduction (pointwise weights).
    Identity,
    /// Single all-ones column: weights constant along this axis.
    Constant,
    /// B-spline basis with the given knot placement.
    Spline(KnotSpec),
}

/// Smoothing configuration of one axis: basis plus roughness penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisConfig {
    pub basis: BasisKind,
    pub penalty: PenaltySpec,
}

impl AxisConfig {
    /// Identity basis, no penalty: pointwise weights along this axis.
    pub fn pointwise() -> Self {
        Self {
            basis: BasisKind::Identity,
            penalty: PenaltySpec::first_difference(0.0),
        }
    }

    /// Constant weights along this axis.
    pub fn constant() -> Self {
        Self {
            basis: BasisKind::Constant,
            penalty: PenaltySpec::first_difference(0.0),
        }
    }

    /// Cubic spline basis with one interior knot per grid point and a
    /// first-difference penalty of strength `lambda`.
    pub fn smoothed(grid_len: usize, lambda: f64) -> Self {
        Self {
            basis: BasisKind::Spline(KnotSpec::equidistant(grid_len.max(2) - 1, 3)),
            penalty: PenaltySpec::first_difference(lambda),
        }
    }
}

/// Full configuration of one learner instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub scheme: Scheme,
    /// Forget rate applied to all hidden state, in [0, 1].
    pub theta: f64,
    /// Fixed-share weight toward the uniform combination, in [0, 1].
    pub phi: f64,
    /// Soft-threshold level, >= 0.
    pub nu: f64,
    /// Hard-threshold level, >= 0.
    pub kappa: f64,
    /// Learning-rate multiplier, > 0.
    pub gamma: f64,
    /// Smoothing along the probability axis.
    pub prob: AxisConfig,
    /// Smoothing along the marginal axis.
    pub marginal: AxisConfig,
    /// Restore the textbook factor 2 in reported CRPS values.
    pub scale2: bool,
}

impl LearnerConfig {
    pub fn pointwise(scheme: Scheme) -> Self {
        Self {
            scheme,
            theta: 0.0,
            phi: 0.0,
            nu: 0.0,
            kappa: 0.0,
            gamma: 1.0,
            prob: AxisConfig::pointwise(),
            marginal: AxisConfig::pointwise(),
            scale2: false,
        }
    }

    fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.theta) || !in_unit(self.phi) {
            return Err(CombineError::InvalidArgument(format!(
                "theta = {} and phi = {} must lie in [0, 1]",
                self.theta, self.phi
            )));
        }
        if self.nu < 0.0 || self.kappa < 0.0 {
            return Err(CombineError::InvalidArgument(
                "threshold levels must be nonnegative".into(),
            ));
        }
        if !(self.gamma > 0.0) {
            return Err(CombineError::InvalidArgument(format!(
                "gamma = {} must be positive",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Basis and hat matrices, computed once per configuration.
#[derive(Debug, Clone)]
pub struct Precomputed {
    pub bmv: BasisMatrix,
    pub bpr: BasisMatrix,
    pub hmv: HatMatrix,
    pub hpr: HatMatrix,
    /// Hmv * Bmv, the left factor of the weight expansion.
    smv: DMatrix<f64>,
    /// Hpr * Bpr, the right factor (transposed in the expansion).
    spr: DMatrix<f64>,
}

fn standard_difference_penalty(m: usize, q: usize) -> DMatrix<f64> {
    let mut d = DMatrix::<f64>::identity(m, m);
    for j in 1..=q {
        let rows = m - j;
        let mut step = DMatrix::zeros(rows, rows + 1);
        for i in 0..rows {
            step[(i, i)] = -1.0;
            step[(i, i + 1)] = 1.0;
        }
        d = step * d;
    }
    d.transpose() * d
}

fn build_axis(axis: &AxisConfig, coords: &[f64]) -> Result<(BasisMatrix, HatMatrix)> {
    let n = coords.len();
    let pen = &axis.penalty;
    match axis.basis {
        BasisKind::Constant => Ok((BasisMatrix::constant(n), HatMatrix::averaging(n))),
        BasisKind::Identity => {
            let basis = BasisMatrix::identity(n);
            if pen.lambda == 0.0 {
                return Ok((basis, HatMatrix::identity(n)));
            }
            let p1 = standard_difference_penalty(n, 1);
            let p2 = standard_difference_penalty(n, 2);
            let hat = hat_matrix(&basis, pen.lambda, pen.alpha, &p1, Some(&p2))?;
            Ok((basis, hat))
        }
        BasisKind::Spline(spec) => {
            let knots = make_knots(&spec)?;
            let basis = bspline_basis(coords, &knots, spec.degree)?;
            let order = spec.degree + 1;
            let d1 = difference_matrix_general(&knots, order, 1)?;
            let p1 = penalty_matrix(&d1, &knots, order, 1);
            let p2 = if order > 2 {
                let d2 = difference_matrix_general(&knots, order, 2)?;
                Some(penalty_matrix(&d2, &knots, order, 2))
            } else {
                None
            };
            let hat = hat_matrix(&basis, pen.lambda, pen.alpha, &p1, p2.as_ref())?;
            Ok((basis, hat))
        }
    }
}

impl Precomputed {
    pub fn build(config: &LearnerConfig, dgrid: &MarginalGrid, pgrid: &ProbGrid) -> Result<Self> {
        let (bmv, hmv) = build_axis(&config.marginal, &dgrid.unit_coords())?;
        let (bpr, hpr) = build_axis(&config.prob, pgrid.as_slice())?;
        let smv = &hmv.values * &bmv.values;
        let spr = &hpr.values * &bpr.values;
        Ok(Self {
            bmv,
            bpr,
            hmv,
            hpr,
            smv,
            spr,
        })
    }
}

/// Pointwise combination of expert forecasts, no rearrangement.
pub fn combine_raw(weights: &Array3<f64>, experts: ArrayView3<f64>) -> Result<Array2<f64>> {
    if weights.dim() != experts.dim() {
        return Err(CombineError::ShapeMismatch(format!(
            "weights {:?} vs experts {:?}",
            weights.dim(),
            experts.dim()
        )));
    }
    let (d, p, _) = weights.dim();
    let mut out = Array2::zeros((d, p));
    for di in 0..d {
        for pi in 0..p {
            out[[di, pi]] = weights
                .slice(s![di, pi, ..])
                .iter()
                .zip(experts.slice(s![di, pi, ..]))
                .map(|(w, x)| w * x)
                .sum();
        }
    }
    Ok(out)
}

/// Combined forecast: pointwise inner product over experts, then the monotone
/// rearrangement per marginal.
pub fn combine(weights: &WeightField, experts: ArrayView3<f64>) -> Result<Array2<f64>> {
    let mut out = combine_raw(&weights.values, experts)?;
    for mut row in out.rows_mut() {
        sort_quantiles_in_place(row.as_slice_mut().unwrap());
    }
    Ok(out)
}

/// Linearized instantaneous regret r(d,p,k) = g * (combined - expert) with
/// g the quantile-loss subgradient at the combined forecast.
///
/// `combined` must be the raw (unsorted) combination formed from the previous
/// weight field, so that the expert-weighted regret vanishes.
pub fn instantaneous_regret(
    combined: &Array2<f64>,
    experts: ArrayView3<f64>,
    y: ArrayView1<f64>,
    pgrid: &ProbGrid,
) -> Result<Array3<f64>> {
    let (d, p, k) = experts.dim();
    if combined.dim() != (d, p) || y.len() != d || pgrid.len() != p {
        return Err(CombineError::ShapeMismatch(format!(
            "combined {:?}, experts {:?}, y {}, grid {}",
            combined.dim(),
            experts.dim(),
            y.len(),
            pgrid.len()
        )));
    }
    let probs = pgrid.as_slice();
    let mut out = Array3::zeros((d, p, k));
    for di in 0..d {
        for pi in 0..p {
            let g = quantile_loss_subgradient(probs[pi], combined[[di, pi]], y[di])?;
            for ki in 0..k {
                out[[di, pi, ki]] = g * (combined[[di, pi]] - experts[[di, pi, ki]]);
            }
        }
    }
    Ok(out)
}

/// Projects the full regret surface onto the reduced basis:
/// r_red = (Dr Pr) / (D P) * Bmv' r Bpr, per expert.
pub fn reduce_regret(
    r_full: &Array3<f64>,
    bmv: &BasisMatrix,
    bpr: &BasisMatrix,
) -> Result<Array3<f64>> {
    let (d, p, k) = r_full.dim();
    if bmv.n_rows() != d || bpr.n_rows() != p {
        return Err(CombineError::ShapeMismatch(format!(
            "bases ({} x {}) do not match regret surface ({d} x {p})",
            bmv.n_rows(),
            bpr.n_rows()
        )));
    }
    let (dr, pr) = (bmv.n_basis(), bpr.n_basis());
    let scale = (dr * pr) as f64 / (d * p) as f64;
    let mut out = Array3::zeros((dr, pr, k));
    for ki in 0..k {
        let rk = dmatrix_from(r_full.index_axis(Axis(2), ki));
        let red = scale * (bmv.values.transpose() * rk * &bpr.values);
        for di in 0..dr {
            for pi in 0..pr {
                out[[di, pi, ki]] = red[(di, pi)];
            }
        }
    }
    Ok(out)
}

/// Expands reduced weights to the full grid through the smoothing factors and
/// renormalizes every (d, p) cell to sum one.
pub fn expand_weights(beta: &Array3<f64>, pre: &Precomputed) -> Result<Array3<f64>> {
    let (dr, pr, k) = beta.dim();
    if pre.smv.ncols() != dr || pre.spr.ncols() != pr {
        return Err(CombineError::ShapeMismatch(format!(
            "beta ({dr} x {pr}) does not match smoothing factors ({} x {})",
            pre.smv.ncols(),
            pre.spr.ncols()
        )));
    }
    let (d, p) = (pre.smv.nrows(), pre.spr.nrows());
    let mut out = Array3::zeros((d, p, k));
    for ki in 0..k {
        let bk = dmatrix_from(beta.index_axis(Axis(2), ki));
        let wk = &pre.smv * bk * pre.spr.transpose();
        for di in 0..d {
            for pi in 0..p {
                out[[di, pi, ki]] = wk[(di, pi)];
            }
        }
    }
    let uniform = 1.0 / k as f64;
    for di in 0..d {
        for pi in 0..p {
            let mut cell = out.slice_mut(s![di, pi, ..]);
            let sum: f64 = cell.iter().sum();
            if sum.abs() <= 1e-12 {
                cell.fill(uniform);
            } else {
                for v in cell.iter_mut() {
                    *v /= sum;
                }
            }
        }
    }
    Ok(out)
}

fn dmatrix_from(view: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(view.nrows(), view.ncols(), |r, c| view[[r, c]])
}

/// One learner instance: configuration, precomputed matrices, and state.
#[derive(Debug, Clone)]
pub struct Learner {
    pub config: LearnerConfig,
    pub pre: Precomputed,
    pub state: LearnerState,
    dgrid: MarginalGrid,
    pgrid: ProbGrid,
    n_experts: usize,
}

/// Trajectory of a full run over a panel.
#[derive(Debug, Clone)]
pub struct RunResult {
    /// Emitted (sorted) combined forecasts, (T, D, P).
    pub predictions: Array3<f64>,
    /// Weight fields used at each step, (T, D, P, K); recorded on request.
    pub weights: Option<ndarray::Array4<f64>>,
}

impl Learner {
    /// Initializes a learner: uniform weight field, pseudo-inverse projection
    /// of the uniform field onto the reduced basis, zero regret statistics.
    pub fn new(
        n_experts: usize,
        dgrid: &MarginalGrid,
        pgrid: &ProbGrid,
        config: LearnerConfig,
    ) -> Result<Self> {
        config.validate()?;
        if n_experts == 0 {
            return Err(CombineError::InvalidArgument(
                "at least one expert is required".into(),
            ));
        }
        let pre = Precomputed::build(&config, dgrid, pgrid)?;
        let (d, p, k) = (dgrid.len(), pgrid.len(), n_experts);
        let (dr, pr) = (pre.bmv.n_basis(), pre.bpr.n_basis());

        let pinv_mv = pre
            .bmv
            .values
            .clone()
            .pseudo_inverse(1e-10)
            .map_err(|e| CombineError::SingularSystem(e.to_string()))?;
        let pinv_pr = pre
            .bpr
            .values
            .clone()
            .pseudo_inverse(1e-10)
            .map_err(|e| CombineError::SingularSystem(e.to_string()))?;
        let w0 = DMatrix::from_element(d, p, 1.0 / k as f64);
        let beta0_mat = &pinv_mv * w0 * pinv_pr.transpose();

        let mut beta0 = Array3::zeros((dr, pr, k));
        for ki in 0..k {
            for di in 0..dr {
                for pi in 0..pr {
                    beta0[[di, pi, ki]] = beta0_mat[(di, pi)];
                }
            }
        }

        let state = LearnerState {
            step: 0,
            beta: beta0.clone(),
            beta0,
            cum_regret: Array3::zeros((dr, pr, k)),
            variance: Array3::zeros((dr, pr, k)),
            range: Array3::zeros((dr, pr, k)),
            eta: Array3::zeros((dr, pr, k)),
            weights: Array3::from_elem((d, p, k), 1.0 / k as f64),
        };
        Ok(Self {
            config,
            pre,
            state,
            dgrid: dgrid.clone(),
            pgrid: pgrid.clone(),
            n_experts,
        })
    }

    /// Restores a learner from a saved state snapshot.
    pub fn from_state(
        state: LearnerState,
        dgrid: &MarginalGrid,
        pgrid: &ProbGrid,
        config: LearnerConfig,
    ) -> Result<Self> {
        let mut learner = Self::new(state.weights.dim().2, dgrid, pgrid, config)?;
        if state.beta.dim() != learner.state.beta.dim()
            || state.weights.dim() != learner.state.weights.dim()
        {
            return Err(CombineError::ShapeMismatch(
                "snapshot dimensions do not match grids and configuration".into(),
            ));
        }
        learner.state = state;
        Ok(learner)
    }

    pub fn weight_field(&self) -> WeightField {
        WeightField {
            values: self.state.weights.clone(),
        }
    }

    pub fn prob_grid(&self) -> &ProbGrid {
        &self.pgrid
    }

    pub fn marginal_grid(&self) -> &MarginalGrid {
        &self.dgrid
    }

    /// One online iteration: emit the forecast built from the previous weight
    /// field, then fold in the new observation.
    pub fn step(
        &mut self,
        experts_t: ArrayView3<f64>,
        y_t: ArrayView1<f64>,
    ) -> Result<Array2<f64>> {
        let expected = (self.dgrid.len(), self.pgrid.len(), self.n_experts);
        if experts_t.dim() != expected {
            return Err(CombineError::ShapeMismatch(format!(
                "expert slice {:?}, expected {:?}",
                experts_t.dim(),
                expected
            )));
        }

        let raw = combine_raw(&self.state.weights, experts_t)?;
        let mut prediction = raw.clone();
        for mut row in prediction.rows_mut() {
            sort_quantiles_in_place(row.as_slice_mut().unwrap());
        }

        let r_full = instantaneous_regret(&raw, experts_t, y_t, &self.pgrid)?;
        let r_red = reduce_regret(&r_full, &self.pre.bmv, &self.pre.bpr)?;
        self.update_scheme(&r_red);
        apply_shrinkage(
            &mut self.state.beta,
            self.config.phi,
            self.config.kappa,
            self.config.nu,
        );
        self.state.weights = expand_weights(&self.state.beta, &self.pre)?;
        self.state.step += 1;
        self.state.check_finite()?;
        Ok(prediction)
    }

    fn update_scheme(&mut self, r_red: &Array3<f64>) {
        let theta = self.config.theta;
        match self.config.scheme {
            Scheme::Boa => {
                boa_update(&mut self.state, r_red, theta, self.config.gamma);
            }
            Scheme::Ewa => {
                let keep = 1.0 - theta;
                let eta = self.config.gamma;
                let (dr, pr, k) = self.state.beta.dim();
                for d in 0..dr {
                    for p in 0..pr {
                        let mut z = vec![0.0; k];
                        for j in 0..k {
                            let r =
                                keep * self.state.cum_regret[[d, p, j]] + r_red[[d, p, j]];
                            self.state.cum_regret[[d, p, j]] = r;
                            z[j] = eta * r;
                        }
                        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = z.iter().map(|v| (v - zmax).exp()).sum();
                        for j in 0..k {
                            self.state.beta[[d, p, j]] = k as f64
                                * self.state.beta0[[d, p, j]]
                                * (z[j] - zmax).exp()
                                / denom;
                        }
                    }
                }
            }
            Scheme::MlPoly => {
                let keep = 1.0 - theta;
                let (dr, pr, k) = self.state.beta.dim();
                for d in 0..dr {
                    for p in 0..pr {
                        let mut cum = vec![0.0; k];
                        let mut sq = vec![0.0; k];
                        for j in 0..k {
                            let r = r_red[[d, p, j]];
                            cum[j] = keep * self.state.cum_regret[[d, p, j]] + r;
                            sq[j] = keep * self.state.variance[[d, p, j]] + r * r;
                            self.state.cum_regret[[d, p, j]] = cum[j];
                            self.state.variance[[d, p, j]] = sq[j];
                        }
                        let w = mlpoly_update(&cum, &sq);
                        for j in 0..k {
                            self.state.beta[[d, p, j]] = w[j];
                        }
                    }
                }
            }
            Scheme::Ftl => {
                let keep = 1.0 - theta;
                let (dr, pr, k) = self.state.beta.dim();
                for d in 0..dr {
                    for p in 0..pr {
                        let mut losses = vec![0.0; k];
                        for j in 0..k {
                            let r = keep * self.state.cum_regret[[d, p, j]] + r_red[[d, p, j]];
                            self.state.cum_regret[[d, p, j]] = r;
                            // cumulative regret differences mirror negative
                            // cumulative loss differences
                            losses[j] = -r;
                        }
                        let w = ftl_select(&losses).unwrap_or_else(|_| vec![1.0 / k as f64; k]);
                        for j in 0..k {
                            self.state.beta[[d, p, j]] = w[j];
                        }
                    }
                }
            }
        }
    }

    /// Runs the learner over a full validated bundle.
    pub fn run(&mut self, bundle: &ValidatedBundle, record_weights: bool) -> Result<RunResult> {
        let (t, d, p, k) = bundle.panel.values.dim();
        let mut predictions = Array3::zeros((t, d, p));
        let mut weights = if record_weights {
            Some(ndarray::Array4::zeros((t, d, p, k)))
        } else {
            None
        };
        for ti in 0..t {
            if let Some(w) = weights.as_mut() {
                w.index_axis_mut(Axis(0), ti).assign(&self.state.weights);
            }
            let pred = self.step(
                bundle.panel.values.index_axis(Axis(0), ti),
                bundle.obs.values.index_axis(Axis(0), ti),
            )?;
            predictions.index_axis_mut(Axis(0), ti).assign(&pred);
        }
        Ok(RunResult {
            predictions,
            weights,
        })
    }
}
