//! Online hyperparameter selection: a candidate grid of learner
//! configurations runs in parallel, and the emitted forecast at each step
//! comes from the candidate with the best (optionally forgotten) cumulative
//! score so far.

use std::collections::HashSet;
use std::io::{Read, Write};

use ndarray::{Array2, ArrayView1, ArrayView3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CombineError, Result};
use crate::grids::{MarginalGrid, ProbGrid};
use crate::learner::{AxisConfig, BasisKind, Learner, LearnerConfig, Scheme};
use crate::loss::crps_from_quantiles;
use crate::splines::{KnotSpec, PenaltySpec};

/// One point in hyperparameter space.
///
/// The `_mv` fields steer the marginal axis, the `_pr` fields the probability
/// axis. A zero smoothing strength switches that axis to pointwise weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub theta: f64,
    pub phi: f64,
    pub nu: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub lambda_mv: f64,
    pub lambda_pr: f64,
    pub mu_mv: f64,
    pub sigma_mv: f64,
    pub c_mv: f64,
    pub tau_mv: f64,
    pub mu_pr: f64,
    pub sigma_pr: f64,
    pub c_pr: f64,
    pub tau_pr: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            theta: 0.0,
            phi: 0.0,
            nu: 0.0,
            kappa: 0.0,
            gamma: 1.0,
            lambda_mv: 0.0,
            lambda_pr: 0.0,
            mu_mv: 0.5,
            sigma_mv: 1.0,
            c_mv: 0.0,
            tau_mv: 1.0,
            mu_pr: 0.5,
            sigma_pr: 1.0,
            c_pr: 0.0,
            tau_pr: 1.0,
        }
    }
}

fn axis_config(len: usize, lambda: f64, mu: f64, sigma: f64, c: f64, tau: f64) -> AxisConfig {
    if lambda == 0.0 || len < 2 {
        return AxisConfig::pointwise();
    }
    AxisConfig {
        basis: BasisKind::Spline(KnotSpec {
            inner: len - 1,
            degree: 3,
            mu,
            sigma,
            noncentrality: c,
            tail: tau,
        }),
        penalty: PenaltySpec::first_difference(lambda),
    }
}

impl HyperParams {
    /// Builds the learner configuration for a grid of the given sizes.
    pub fn to_config(&self, d_len: usize, p_len: usize, scheme: Scheme, scale2: bool) -> LearnerConfig {
        LearnerConfig {
            scheme,
            theta: self.theta,
            phi: self.phi,
            nu: self.nu,
            kappa: self.kappa,
            gamma: self.gamma,
            marginal: axis_config(
                d_len,
                self.lambda_mv,
                self.mu_mv,
                self.sigma_mv,
                self.c_mv,
                self.tau_mv,
            ),
            prob: axis_config(
                p_len,
                self.lambda_pr,
                self.mu_pr,
                self.sigma_pr,
                self.c_pr,
                self.tau_pr,
            ),
            scale2,
        }
    }
}

/// Which hyperparameters the candidate grid varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TuneGrid {
    /// Forget rate only.
    Forget,
    /// Both smoothing strengths.
    Smooth,
    /// Forget rate and both smoothing strengths.
    SmoothForget,
    /// Every axis, sampled.
    Full,
}

#[derive(Clone, Copy)]
enum Transform {
    /// 2^x, capped at 1.
    Pow2Unit,
    /// 2^x.
    Pow2,
    /// x^3 / 2.1 + 0.5 (a location in (0, 1)).
    CubicLoc,
    /// x^3 / 1.1 + 1 (a positive scale around 1).
    CubicScale,
    /// x^3.
    Cubic,
}

impl Transform {
    fn apply(self, x: f64) -> f64 {
        match self {
            Transform::Pow2Unit => x.exp2().min(1.0),
            Transform::Pow2 => x.exp2(),
            Transform::CubicLoc => x.powi(3) / 2.1 + 0.5,
            Transform::CubicScale => x.powi(3) / 1.1 + 1.0,
            Transform::Cubic => x.powi(3),
        }
    }
}

struct AxisDef {
    set: fn(&mut HyperParams, f64),
    lo: f64,
    hi: f64,
    transform: Transform,
}

fn axis_defs(grid: TuneGrid) -> Vec<AxisDef> {
    let theta = AxisDef {
        set: |h, v| h.theta = v,
        lo: -12.0,
        hi: 2.0,
        transform: Transform::Pow2Unit,
    };
    let lambda_mv = AxisDef {
        set: |h, v| h.lambda_mv = v,
        lo: -5.0,
        hi: 15.0,
        transform: Transform::Pow2,
    };
    let lambda_pr = AxisDef {
        set: |h, v| h.lambda_pr = v,
        lo: -5.0,
        hi: 15.0,
        transform: Transform::Pow2,
    };
    match grid {
        TuneGrid::Forget => vec![theta],
        TuneGrid::Smooth => vec![lambda_mv, lambda_pr],
        TuneGrid::SmoothForget => vec![theta, lambda_mv, lambda_pr],
        TuneGrid::Full => {
            let mut axes = vec![theta, lambda_mv, lambda_pr];
            axes.push(AxisDef {
                set: |h, v| h.phi = v,
                lo: -15.0,
                hi: 0.0,
                transform: Transform::Pow2,
            });
            axes.push(AxisDef {
                set: |h, v| h.nu = v,
                lo: -15.0,
                hi: 0.0,
                transform: Transform::Pow2,
            });
            axes.push(AxisDef {
                set: |h, v| h.kappa = v,
                lo: -15.0,
                hi: 0.0,
                transform: Transform::Pow2,
            });
            axes.push(AxisDef {
                set: |h, v| h.gamma = v,
                lo: -1.0,
                hi: 1.0,
                transform: Transform::Pow2,
            });
            for set in [
                (|h: &mut HyperParams, v| h.mu_mv = v) as fn(&mut HyperParams, f64),
                |h, v| h.mu_pr = v,
            ] {
                axes.push(AxisDef {
                    set,
                    lo: -1.0,
                    hi: 1.0,
                    transform: Transform::CubicLoc,
                });
            }
            for set in [
                (|h: &mut HyperParams, v| h.sigma_mv = v) as fn(&mut HyperParams, f64),
                |h, v| h.sigma_pr = v,
                |h, v| h.tau_mv = v,
                |h, v| h.tau_pr = v,
            ] {
                axes.push(AxisDef {
                    set,
                    lo: -1.0,
                    hi: 1.0,
                    transform: Transform::CubicScale,
                });
            }
            for set in [
                (|h: &mut HyperParams, v| h.c_mv = v) as fn(&mut HyperParams, f64),
                |h, v| h.c_pr = v,
            ] {
                axes.push(AxisDef {
                    set,
                    lo: -1.0,
                    hi: 1.0,
                    transform: Transform::Cubic,
                });
            }
            axes
        }
    }
}

/// Builds the candidate list for a tuning grid.
///
/// Each varying axis takes `n_values` equidistant raw values, mapped through
/// its transform. Product grids at or under `max_samples` are enumerated in
/// full; larger ones are sampled without replacement with the given seed.
pub fn build_grid(
    grid: TuneGrid,
    n_values: usize,
    max_samples: usize,
    seed: u64,
) -> Result<Vec<HyperParams>> {
    if n_values < 2 || max_samples == 0 {
        return Err(CombineError::InvalidArgument(
            "tuning grid needs at least two values per axis and one sample".into(),
        ));
    }
    let axes = axis_defs(grid);
    let values: Vec<Vec<f64>> = axes
        .iter()
        .map(|a| {
            (0..n_values)
                .map(|i| {
                    let raw = a.lo + (a.hi - a.lo) * i as f64 / (n_values - 1) as f64;
                    a.transform.apply(raw)
                })
                .collect()
        })
        .collect();

    let total: Option<usize> = values
        .iter()
        .try_fold(1usize, |acc, v| acc.checked_mul(v.len()));
    let build = |indices: &[usize]| {
        let mut h = HyperParams::default();
        for (j, &i) in indices.iter().enumerate() {
            (axes[j].set)(&mut h, values[j][i]);
        }
        h
    };

    match total {
        Some(n) if n <= max_samples => {
            // full enumeration in odometer order
            let mut out = Vec::with_capacity(n);
            let mut idx = vec![0usize; axes.len()];
            loop {
                out.push(build(&idx));
                let mut j = axes.len();
                loop {
                    if j == 0 {
                        return Ok(out);
                    }
                    j -= 1;
                    idx[j] += 1;
                    if idx[j] < n_values {
                        break;
                    }
                    idx[j] = 0;
                }
            }
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut seen = HashSet::new();
            let mut out = Vec::with_capacity(max_samples);
            while out.len() < max_samples {
                let idx: Vec<usize> = (0..axes.len()).map(|_| rng.gen_range(0..n_values)).collect();
                if seen.insert(idx.clone()) {
                    out.push(build(&idx));
                }
            }
            Ok(out)
        }
    }
}

/// Candidate learners plus their running scores and the active selection.
pub struct Tuner {
    pub candidates: Vec<HyperParams>,
    pub learners: Vec<Learner>,
    /// Discounted cumulative score per candidate.
    pub scores: Vec<f64>,
    /// Candidate whose forecast is emitted at the next step.
    pub active: usize,
    /// Forget factor on the cumulative score, in [0, 1].
    pub score_forget: f64,
    /// Number of times the active candidate changed.
    pub switches: usize,
    pgrid: ProbGrid,
    scale2: bool,
}

impl Tuner {
    pub fn new(
        candidates: Vec<HyperParams>,
        n_experts: usize,
        dgrid: &MarginalGrid,
        pgrid: &ProbGrid,
        scheme: Scheme,
        score_forget: f64,
        scale2: bool,
    ) -> Result<Self> {
        if candidates.is_empty() {
            return Err(CombineError::InvalidArgument(
                "tuner needs at least one candidate".into(),
            ));
        }
        if !(0.0..=1.0).contains(&score_forget) {
            return Err(CombineError::InvalidArgument(format!(
                "score forget factor {score_forget} must lie in [0, 1]"
            )));
        }
        let learners = candidates
            .iter()
            .map(|h| {
                Learner::new(
                    n_experts,
                    dgrid,
                    pgrid,
                    h.to_config(dgrid.len(), pgrid.len(), scheme, scale2),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scores: vec![0.0; candidates.len()],
            active: 0,
            score_forget,
            switches: 0,
            candidates,
            learners,
            pgrid: pgrid.clone(),
            scale2,
        })
    }

    /// One tuning step. The returned forecast comes from the candidate that
    /// scored best on data strictly before this observation.
    pub fn step(
        &mut self,
        experts_t: ArrayView3<f64>,
        y_t: ArrayView1<f64>,
    ) -> Result<Array2<f64>> {
        let pgrid = self.pgrid.clone();
        let scale2 = self.scale2;
        let stepped: Vec<(Array2<f64>, f64)> = self
            .learners
            .par_iter_mut()
            .map(|learner| {
                let pred = learner.step(experts_t, y_t)?;
                let (d, _) = pred.dim();
                let mut crps = 0.0;
                for di in 0..d {
                    crps += crps_from_quantiles(
                        &pgrid,
                        pred.row(di).as_slice().unwrap(),
                        y_t[di],
                        scale2,
                    )?;
                }
                Ok((pred, crps / d as f64))
            })
            .collect::<Result<Vec<_>>>()?;

        let emitted = stepped[self.active].0.clone();
        let keep = 1.0 - self.score_forget;
        for (score, (_, crps)) in self.scores.iter_mut().zip(&stepped) {
            *score = keep * *score + crps;
        }
        let best = argmin(&self.scores);
        if best != self.active {
            self.switches += 1;
            self.active = best;
        }
        Ok(emitted)
    }

    /// Candidate with the smallest cumulative score; ties break to the lowest
    /// index.
    pub fn select_best(&self) -> usize {
        argmin(&self.scores)
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x < v[best] {
            best = i;
        }
    }
    best
}

const CANDIDATE_HEADER: [&str; 15] = [
    "theta", "phi", "nu", "kappa", "gamma", "lambda_mv", "lambda_pr", "mu_mv", "sigma_mv", "c_mv",
    "tau_mv", "mu_pr", "sigma_pr", "c_pr", "tau_pr",
];

/// Writes a candidate list as CSV with one row per candidate.
pub fn write_candidates<W: Write>(w: W, candidates: &[HyperParams]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(CANDIDATE_HEADER)?;
    for h in candidates {
        let row = [
            h.theta, h.phi, h.nu, h.kappa, h.gamma, h.lambda_mv, h.lambda_pr, h.mu_mv, h.sigma_mv,
            h.c_mv, h.tau_mv, h.mu_pr, h.sigma_pr, h.c_pr, h.tau_pr,
        ];
        wtr.write_record(row.iter().map(|v| format!("{v}")))?;
    }
    wtr.flush().map_err(CombineError::Io)?;
    Ok(())
}

/// Reads a candidate list written by [`write_candidates`].
pub fn read_candidates<R: Read>(r: R) -> Result<Vec<HyperParams>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(CANDIDATE_HEADER) {
        return Err(CombineError::Format {
            line: 1,
            msg: format!(
                "candidate header must be {:?}, got {:?}",
                CANDIDATE_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let mut vals = [0.0f64; 15];
        if record.len() != 15 {
            return Err(CombineError::Format {
                line,
                msg: format!("expected 15 fields, got {}", record.len()),
            });
        }
        for (slot, field) in vals.iter_mut().zip(record.iter()) {
            *slot = field.trim().parse().map_err(|_| CombineError::Format {
                line,
                msg: format!("cannot parse '{field}' as a number"),
            })?;
        }
        out.push(HyperParams {
            theta: vals[0],
            phi: vals[1],
            nu: vals[2],
            kappa: vals[3],
            gamma: vals[4],
            lambda_mv: vals[5],
            lambda_pr: vals[6],
            mu_mv: vals[7],
            sigma_mv: vals[8],
            c_mv: vals[9],
            tau_mv: vals[10],
            mu_pr: vals[11],
            sigma_pr: vals[12],
            c_pr: vals[13],
            tau_pr: vals[14],
        });
    }
    Ok(out)
}
