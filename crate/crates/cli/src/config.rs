//! Flat key=value configuration files and the model-spec / hyperparameter
//! plumbing shared by the subcommands.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context};
use clap::ValueEnum;
use qcombine_core::learner::{AxisConfig, LearnerConfig, Scheme};
use qcombine_core::tuner::HyperParams;

/// Nested model structure selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpecName {
    /// Smoothing on both axes, forgetting, and shrinkage.
    Full,
    /// Smoothing on both axes plus forgetting.
    SmoothForget,
    /// Smoothing on both axes only.
    Smooth,
    /// Pointwise weights with forgetting.
    Forget,
    /// Uniform combination (full fixed share).
    Naive,
    /// One weight vector shared across the whole surface.
    Constant,
    /// Weights constant across marginals, pointwise in probability.
    ConstantMv,
    /// Weights constant across probabilities, pointwise in marginals.
    ConstantPr,
    /// Independent weights per (marginal, probability) cell.
    Pointwise,
}

/// Weighting scheme selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeName {
    Boa,
    Ewa,
    MlPoly,
    Ftl,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Boa => Scheme::Boa,
            SchemeName::Ewa => Scheme::Ewa,
            SchemeName::MlPoly => Scheme::MlPoly,
            SchemeName::Ftl => Scheme::Ftl,
        }
    }
}

/// Hyperparameter flags; unset flags fall back to the config file, then to
/// the defaults.
#[derive(Debug, Clone, Copy, Default, clap::Args)]
pub struct ParamFlags {
    /// Forget rate in [0, 1].
    #[arg(long)]
    pub theta: Option<f64>,
    /// Fixed-share weight toward uniform in [0, 1].
    #[arg(long)]
    pub phi: Option<f64>,
    /// Soft-threshold level.
    #[arg(long)]
    pub nu: Option<f64>,
    /// Hard-threshold level.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Learning-rate multiplier.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Smoothing strength along the marginal axis.
    #[arg(long)]
    pub lambda_mv: Option<f64>,
    /// Smoothing strength along the probability axis.
    #[arg(long)]
    pub lambda_pr: Option<f64>,
    /// Knot location along the marginal axis, in (0, 1).
    #[arg(long)]
    pub mu_mv: Option<f64>,
    /// Knot scale along the marginal axis.
    #[arg(long)]
    pub sigma_mv: Option<f64>,
    /// Knot asymmetry along the marginal axis.
    #[arg(long)]
    pub c_mv: Option<f64>,
    /// Knot tail weight along the marginal axis.
    #[arg(long)]
    pub tau_mv: Option<f64>,
    /// Knot location along the probability axis, in (0, 1).
    #[arg(long)]
    pub mu_pr: Option<f64>,
    /// Knot scale along the probability axis.
    #[arg(long)]
    pub sigma_pr: Option<f64>,
    /// Knot asymmetry along the probability axis.
    #[arg(long)]
    pub c_pr: Option<f64>,
    /// Knot tail weight along the probability axis.
    #[arg(long)]
    pub tau_pr: Option<f64>,
}

/// Parses a flat `key=value` file; `#` starts a comment.
pub fn parse_config_file(path: &Path) -> anyhow::Result<HashMap<String, f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let mut out = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {} is not key=value: '{raw}'", i + 1);
        };
        let value: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("config line {}: value of '{}'", i + 1, key.trim()))?;
        out.insert(key.trim().to_string(), value);
    }
    Ok(out)
}

/// Merges defaults, config file, and flags (highest priority last).
pub fn resolve_params(
    config: &HashMap<String, f64>,
    flags: &ParamFlags,
) -> anyhow::Result<HyperParams> {
    let known = [
        "theta", "phi", "nu", "kappa", "gamma", "lambda_mv", "lambda_pr", "mu_mv", "sigma_mv",
        "c_mv", "tau_mv", "mu_pr", "sigma_pr", "c_pr", "tau_pr",
    ];
    for key in config.keys() {
        if !known.contains(&key.as_str()) {
            bail!("unknown config key '{key}' (expected one of {})", known.join(", "));
        }
    }
    let mut h = HyperParams::default();
    let pick = |name: &str, flag: Option<f64>, fallback: f64| {
        flag.or_else(|| config.get(name).copied()).unwrap_or(fallback)
    };
    h.theta = pick("theta", flags.theta, h.theta);
    h.phi = pick("phi", flags.phi, h.phi);
    h.nu = pick("nu", flags.nu, h.nu);
    h.kappa = pick("kappa", flags.kappa, h.kappa);
    h.gamma = pick("gamma", flags.gamma, h.gamma);
    h.lambda_mv = pick("lambda_mv", flags.lambda_mv, h.lambda_mv);
    h.lambda_pr = pick("lambda_pr", flags.lambda_pr, h.lambda_pr);
    h.mu_mv = pick("mu_mv", flags.mu_mv, h.mu_mv);
    h.sigma_mv = pick("sigma_mv", flags.sigma_mv, h.sigma_mv);
    h.c_mv = pick("c_mv", flags.c_mv, h.c_mv);
    h.tau_mv = pick("tau_mv", flags.tau_mv, h.tau_mv);
    h.mu_pr = pick("mu_pr", flags.mu_pr, h.mu_pr);
    h.sigma_pr = pick("sigma_pr", flags.sigma_pr, h.sigma_pr);
    h.c_pr = pick("c_pr", flags.c_pr, h.c_pr);
    h.tau_pr = pick("tau_pr", flags.tau_pr, h.tau_pr);
    Ok(h)
}

/// Smoothing strength used when a spec demands smoothing but none was given.
const DEFAULT_LAMBDA: f64 = 1.0;

/// Builds the learner configuration for a named model structure.
///
/// Specs that forbid a mechanism zero it out regardless of the given
/// hyperparameters; specs that require smoothing substitute a default
/// strength when none was set.
pub fn spec_config(
    spec: SpecName,
    params: &HyperParams,
    d_len: usize,
    p_len: usize,
    scheme: Scheme,
    scale2: bool,
) -> LearnerConfig {
    let mut h = *params;
    match spec {
        SpecName::Full => {
            if h.lambda_mv == 0.0 {
                h.lambda_mv = DEFAULT_LAMBDA;
            }
            if h.lambda_pr == 0.0 {
                h.lambda_pr = DEFAULT_LAMBDA;
            }
        }
        SpecName::SmoothForget | SpecName::Smooth => {
            if h.lambda_mv == 0.0 {
                h.lambda_mv = DEFAULT_LAMBDA;
            }
            if h.lambda_pr == 0.0 {
                h.lambda_pr = DEFAULT_LAMBDA;
            }
            h.phi = 0.0;
            h.nu = 0.0;
            h.kappa = 0.0;
            if spec == SpecName::Smooth {
                h.theta = 0.0;
            }
        }
        SpecName::Forget => {
            h.lambda_mv = 0.0;
            h.lambda_pr = 0.0;
            h.phi = 0.0;
            h.nu = 0.0;
            h.kappa = 0.0;
        }
        SpecName::Naive => {
            h = HyperParams {
                phi: 1.0,
                ..HyperParams::default()
            };
        }
        SpecName::Constant | SpecName::ConstantMv | SpecName::ConstantPr | SpecName::Pointwise => {
            h.lambda_mv = 0.0;
            h.lambda_pr = 0.0;
        }
    }
    let mut config = h.to_config(d_len, p_len, scheme, scale2);
    match spec {
        SpecName::Constant => {
            config.marginal = AxisConfig::constant();
            config.prob = AxisConfig::constant();
        }
        SpecName::ConstantMv => {
            config.marginal = AxisConfig::constant();
        }
        SpecName::ConstantPr => {
            config.prob = AxisConfig::constant();
        }
        _ => {}
    }
    config
}
