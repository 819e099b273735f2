mod config;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Axis;

use config::{parse_config_file, resolve_params, spec_config, ParamFlags, SchemeName, SpecName};
use qcombine_core::eval::{
    christoffersen_test, coverage_violations, crossing_days, dm_test, kupiec_test,
    pearson_corr_matrix, score_model, significance_code,
};
use qcombine_core::io::{
    read_experts, read_observations, write_experts, write_forecasts, write_hyperparams,
    write_observations, write_scores, write_tests, write_weights, TestRow,
};
use qcombine_core::learner::{Learner, StateSnapshot};
use qcombine_core::panel::{validate_panel, ValidatedBundle};
use qcombine_core::scenario::{generate_scenario, ScenarioSpec};
use qcombine_core::tuner::{
    build_grid, read_candidates, write_candidates, HyperParams, TuneGrid, Tuner,
};

/// Online combination of multivariate quantile forecasts.
#[derive(Parser)]
#[command(name = "qcombine", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GridName {
    Forget,
    Smooth,
    SmoothForget,
    Full,
}

impl From<GridName> for TuneGrid {
    fn from(g: GridName) -> Self {
        match g {
            GridName::Forget => TuneGrid::Forget,
            GridName::Smooth => TuneGrid::Smooth,
            GridName::SmoothForget => TuneGrid::SmoothForget,
            GridName::Full => TuneGrid::Full,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic expert panel and matching observations.
    Simulate {
        /// Directory receiving experts.csv, observations.csv, and truth.csv.
        #[arg(long)]
        out_dir: PathBuf,
        /// Number of time steps.
        #[arg(long, default_value_t = 200)]
        time_steps: usize,
        /// Number of marginals.
        #[arg(long, default_value_t = 4)]
        marginals: usize,
        /// Number of probability levels.
        #[arg(long, default_value_t = 9)]
        probs: usize,
        /// Number of experts.
        #[arg(long, default_value_t = 3)]
        experts: usize,
        /// RNG seed; equal seeds reproduce the data exactly.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Insert a structural break halfway through.
        #[arg(long)]
        structural_break: bool,
    },
    /// Run one combination model over a panel.
    Combine {
        #[arg(long)]
        experts: PathBuf,
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Model structure.
        #[arg(long, value_enum, default_value_t = SpecName::Full)]
        spec: SpecName,
        /// Weighting scheme.
        #[arg(long, value_enum, default_value_t = SchemeName::Boa)]
        scheme: SchemeName,
        /// key=value file with hyperparameters; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        params: ParamFlags,
        /// Report CRPS with the conventional factor of two.
        #[arg(long)]
        scale2: bool,
        /// Also write the full weight trajectory (weights.csv).
        #[arg(long)]
        record_weights: bool,
        /// Resume from a previously written state snapshot.
        #[arg(long)]
        state_in: Option<PathBuf>,
        /// Time steps excluded from the aggregate score.
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
    },
    /// Select hyperparameters online from a candidate grid.
    Tune {
        #[arg(long)]
        experts: PathBuf,
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Which hyperparameters the grid varies.
        #[arg(long, value_enum, default_value_t = GridName::Forget)]
        grid: GridName,
        #[arg(long, value_enum, default_value_t = SchemeName::Boa)]
        scheme: SchemeName,
        /// Values per axis.
        #[arg(long, default_value_t = 16)]
        n_values: usize,
        /// Cap on the candidate count; larger grids are sampled.
        #[arg(long, default_value_t = 2500)]
        max_samples: usize,
        /// Seed for grid sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Forget factor on the candidate scores, in [0, 1].
        #[arg(long, default_value_t = 0.0)]
        score_forget: f64,
        /// Load candidates from a CSV instead of building a grid.
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Also write the candidate list to this CSV.
        #[arg(long)]
        export_candidates: Option<PathBuf>,
        #[arg(long)]
        scale2: bool,
    },
    /// Score several model structures and test them against a reference.
    Evaluate {
        #[arg(long)]
        experts: PathBuf,
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Model structures to evaluate (repeatable).
        #[arg(long = "spec", value_enum, default_values_t = vec![SpecName::Full, SpecName::Pointwise])]
        specs: Vec<SpecName>,
        /// Reference structure for the forecast comparison test.
        #[arg(long, value_enum, default_value_t = SpecName::Naive)]
        reference: SpecName,
        #[arg(long, value_enum, default_value_t = SchemeName::Boa)]
        scheme: SchemeName,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        params: ParamFlags,
        #[arg(long)]
        scale2: bool,
        /// Time steps excluded from scores and tests.
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
    },
    /// Dump the weight surface stored in a state snapshot.
    ExportWeights {
        /// state.json written by the combine command.
        #[arg(long)]
        state: PathBuf,
        /// Expert file supplying axes and expert names.
        #[arg(long)]
        experts: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            out_dir,
            time_steps,
            marginals,
            probs,
            experts,
            seed,
            structural_break,
        } => simulate(
            &out_dir,
            time_steps,
            marginals,
            probs,
            experts,
            seed,
            structural_break,
        ),
        Command::Combine {
            experts,
            observations,
            out_dir,
            spec,
            scheme,
            config,
            params,
            scale2,
            record_weights,
            state_in,
            burn_in,
        } => combine(
            &experts,
            &observations,
            &out_dir,
            spec,
            scheme,
            config.as_deref(),
            &params,
            scale2,
            record_weights,
            state_in.as_deref(),
            burn_in,
        ),
        Command::Tune {
            experts,
            observations,
            out_dir,
            grid,
            scheme,
            n_values,
            max_samples,
            seed,
            score_forget,
            candidates,
            export_candidates,
            scale2,
        } => tune(
            &experts,
            &observations,
            &out_dir,
            grid,
            scheme,
            n_values,
            max_samples,
            seed,
            score_forget,
            candidates.as_deref(),
            export_candidates.as_deref(),
            scale2,
        ),
        Command::Evaluate {
            experts,
            observations,
            out_dir,
            specs,
            reference,
            scheme,
            config,
            params,
            scale2,
            burn_in,
        } => evaluate(
            &experts,
            &observations,
            &out_dir,
            &specs,
            reference,
            scheme,
            config.as_deref(),
            &params,
            scale2,
            burn_in,
        ),
        Command::ExportWeights {
            state,
            experts,
            out,
        } => export_weights(&state, &experts, &out),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("creating {}", path.display())
    })?))
}

fn load_bundle(experts: &Path, observations: &Path) -> Result<(ValidatedBundle, Vec<f64>)> {
    let expert_data = read_experts(
        File::open(experts).with_context(|| format!("opening {}", experts.display()))?,
    )?;
    let obs_data = read_observations(
        File::open(observations).with_context(|| format!("opening {}", observations.display()))?,
    )?;
    if expert_data.times != obs_data.times {
        bail!(
            "expert and observation files disagree on the time axis ({} vs {} steps)",
            expert_data.times.len(),
            obs_data.times.len()
        );
    }
    let times = expert_data.times.clone();
    let bundle = validate_panel(
        expert_data.panel,
        obs_data.obs,
        expert_data.pgrid,
        expert_data.dgrid,
    )?;
    Ok((bundle, times))
}

fn resolve(config: Option<&Path>, flags: &ParamFlags) -> Result<HyperParams> {
    let map = match config {
        Some(path) => parse_config_file(path)?,
        None => Default::default(),
    };
    resolve_params(&map, flags)
}

fn simulate(
    out_dir: &Path,
    t: usize,
    d: usize,
    p: usize,
    k: usize,
    seed: u64,
    structural_break: bool,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let spec = if structural_break {
        ScenarioSpec::with_break(t, d, p, k)
    } else {
        ScenarioSpec::calm(t, d, p, k)
    };
    let scenario = generate_scenario(&spec, seed)?;
    let times: Vec<f64> = (0..t).map(|i| i as f64).collect();
    write_experts(
        create(&out_dir.join("experts.csv"))?,
        &scenario.bundle.panel,
        &times,
        &scenario.bundle.dgrid,
        &scenario.bundle.pgrid,
    )?;
    write_observations(
        create(&out_dir.join("observations.csv"))?,
        &scenario.bundle.obs,
        &times,
        &scenario.bundle.dgrid,
    )?;
    write_forecasts(
        create(&out_dir.join("truth.csv"))?,
        scenario.true_quantiles.view(),
        &times,
        &scenario.bundle.dgrid,
        &scenario.bundle.pgrid,
    )?;
    println!(
        "simulate: wrote {t} steps, {d} marginals, {p} probabilities, {k} experts to {}",
        out_dir.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn combine(
    experts: &Path,
    observations: &Path,
    out_dir: &Path,
    spec: SpecName,
    scheme: SchemeName,
    config: Option<&Path>,
    flags: &ParamFlags,
    scale2: bool,
    record_weights: bool,
    state_in: Option<&Path>,
    burn_in: usize,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let (bundle, times) = load_bundle(experts, observations)?;
    let params = resolve(config, flags)?;
    let learner_config = spec_config(
        spec,
        &params,
        bundle.dgrid.len(),
        bundle.pgrid.len(),
        scheme.into(),
        scale2,
    );
    let mut learner = match state_in {
        Some(path) => {
            let snap = StateSnapshot::from_reader(File::open(path)?)?;
            Learner::from_state(snap.state, &bundle.dgrid, &bundle.pgrid, learner_config)?
        }
        None => Learner::new(
            bundle.panel.n_experts(),
            &bundle.dgrid,
            &bundle.pgrid,
            learner_config,
        )?,
    };

    let result = learner.run(&bundle, record_weights)?;
    write_forecasts(
        create(&out_dir.join("forecasts.csv"))?,
        result.predictions.view(),
        &times,
        &bundle.dgrid,
        &bundle.pgrid,
    )?;
    if let Some(weights) = &result.weights {
        write_weights(
            create(&out_dir.join("weights.csv"))?,
            weights.view(),
            &times,
            &bundle.dgrid,
            &bundle.pgrid,
            &bundle.panel.expert_names,
        )?;
    }
    let table = score_model(
        result.predictions.view(),
        &bundle.obs,
        &bundle.pgrid,
        burn_in,
        scale2,
    )?;
    write_scores(
        create(&out_dir.join("scores.csv"))?,
        &[("combined".to_string(), table.clone())],
        &times,
        &bundle.dgrid,
    )?;
    StateSnapshot::new(learner.state.clone()).to_writer(create(&out_dir.join("state.json"))?)?;
    println!(
        "combine: aggregate CRPS {:.6} over {} steps (burn-in {burn_in})",
        table.aggregate,
        times.len()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn tune(
    experts: &Path,
    observations: &Path,
    out_dir: &Path,
    grid: GridName,
    scheme: SchemeName,
    n_values: usize,
    max_samples: usize,
    seed: u64,
    score_forget: f64,
    candidates_in: Option<&Path>,
    export_candidates: Option<&Path>,
    scale2: bool,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let (bundle, times) = load_bundle(experts, observations)?;
    let candidates = match candidates_in {
        Some(path) => read_candidates(File::open(path)?)?,
        None => build_grid(grid.into(), n_values, max_samples, seed)?,
    };
    if let Some(path) = export_candidates {
        write_candidates(create(path)?, &candidates)?;
    }
    let mut tuner = Tuner::new(
        candidates,
        bundle.panel.n_experts(),
        &bundle.dgrid,
        &bundle.pgrid,
        scheme.into(),
        score_forget,
        scale2,
    )?;
    let (t, d, p, _) = bundle.panel.values.dim();
    let mut predictions = ndarray::Array3::zeros((t, d, p));
    for ti in 0..t {
        let pred = tuner.step(
            bundle.panel.values.index_axis(Axis(0), ti),
            bundle.obs.values.index_axis(Axis(0), ti),
        )?;
        predictions.index_axis_mut(Axis(0), ti).assign(&pred);
    }
    write_forecasts(
        create(&out_dir.join("forecasts.csv"))?,
        predictions.view(),
        &times,
        &bundle.dgrid,
        &bundle.pgrid,
    )?;
    let best = tuner.select_best();
    write_hyperparams(
        create(&out_dir.join("hyperparams.csv"))?,
        &tuner.candidates,
        &tuner.scores,
        best,
    )?;
    println!(
        "tune: {} candidates, best #{best} (score {:.6}, {} switches)",
        tuner.candidates.len(),
        tuner.scores[best],
        tuner.switches
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    experts: &Path,
    observations: &Path,
    out_dir: &Path,
    specs: &[SpecName],
    reference: SpecName,
    scheme: SchemeName,
    config: Option<&Path>,
    flags: &ParamFlags,
    scale2: bool,
    burn_in: usize,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let (bundle, times) = load_bundle(experts, observations)?;
    let params = resolve(config, flags)?;
    let spec_label = |s: SpecName| {
        s.to_possible_value()
            .expect("all spec variants are named")
            .get_name()
            .to_string()
    };

    let run_spec = |s: SpecName| -> Result<ndarray::Array3<f64>> {
        let cfg = spec_config(
            s,
            &params,
            bundle.dgrid.len(),
            bundle.pgrid.len(),
            scheme.into(),
            scale2,
        );
        let mut learner = Learner::new(bundle.panel.n_experts(), &bundle.dgrid, &bundle.pgrid, cfg)?;
        Ok(learner.run(&bundle, false)?.predictions)
    };

    let ref_preds = run_spec(reference)?;
    let ref_table = score_model(ref_preds.view(), &bundle.obs, &bundle.pgrid, burn_in, scale2)?;
    let ref_label = spec_label(reference);

    let mut score_entries = vec![(ref_label.clone(), ref_table.clone())];
    let mut test_rows = Vec::new();
    for &s in specs {
        let label = spec_label(s);
        let preds = run_spec(s)?;
        let table = score_model(preds.view(), &bundle.obs, &bundle.pgrid, burn_in, scale2)?;

        let (stat, p) = dm_test(
            &table.crps.slice(ndarray::s![burn_in.., ..]).to_owned(),
            &ref_table.crps.slice(ndarray::s![burn_in.., ..]).to_owned(),
            false,
        )?;
        test_rows.push(TestRow {
            model: label.clone(),
            reference: ref_label.clone(),
            test: "dm".into(),
            statistic: stat,
            p_value: p,
            significance: significance_code(p),
            note: "positive statistic favors the model".into(),
        });

        for level in [0.5, 0.9] {
            for di in 0..bundle.dgrid.len() {
                match coverage_violations(
                    preds.view(),
                    &bundle.obs,
                    &bundle.pgrid,
                    di,
                    level,
                    burn_in,
                ) {
                    Ok(series) => {
                        let x = series.iter().filter(|v| **v).count();
                        let (lr, p) = kupiec_test(x, series.len(), 1.0 - level)?;
                        test_rows.push(TestRow {
                            model: label.clone(),
                            reference: String::new(),
                            test: format!("kupiec_{level}"),
                            statistic: lr,
                            p_value: p,
                            significance: significance_code(p),
                            note: format!("marginal {di}: {x}/{} outside", series.len()),
                        });
                        let (lr, p, degenerate) = christoffersen_test(&series, 1.0 - level)?;
                        test_rows.push(TestRow {
                            model: label.clone(),
                            reference: String::new(),
                            test: format!("christoffersen_{level}"),
                            statistic: lr,
                            p_value: p,
                            significance: significance_code(p),
                            note: if degenerate {
                                format!("marginal {di}: degenerate violation series")
                            } else {
                                format!("marginal {di}")
                            },
                        });
                    }
                    Err(e) => {
                        log::warn!("skipping the {level} interval for '{label}': {e}");
                    }
                }
            }
        }

        let (crossings, _) = crossing_days(preds.view());
        test_rows.push(TestRow {
            model: label.clone(),
            reference: String::new(),
            test: "crossing_days".into(),
            statistic: crossings as f64,
            p_value: f64::NAN,
            significance: "",
            note: "days with a non-monotone quantile curve".into(),
        });

        score_entries.push((label, table));
    }

    let (corr, flagged) = pearson_corr_matrix(&bundle.panel)?;
    for a in 0..corr.nrows() {
        for b in a + 1..corr.ncols() {
            test_rows.push(TestRow {
                model: bundle.panel.expert_names[a].clone(),
                reference: bundle.panel.expert_names[b].clone(),
                test: "expert_correlation".into(),
                statistic: corr[[a, b]],
                p_value: f64::NAN,
                significance: "",
                note: if flagged.contains(&a) || flagged.contains(&b) {
                    "an expert has zero variance".into()
                } else {
                    String::new()
                },
            });
        }
    }

    write_scores(
        create(&out_dir.join("scores.csv"))?,
        &score_entries,
        &times,
        &bundle.dgrid,
    )?;
    write_tests(create(&out_dir.join("tests.csv"))?, &test_rows)?;
    for (label, table) in &score_entries {
        println!("evaluate: {label} aggregate CRPS {:.6}", table.aggregate);
    }
    Ok(())
}

fn export_weights(state: &Path, experts: &Path, out: &Path) -> Result<()> {
    let snap = StateSnapshot::from_reader(File::open(state)?)?;
    let expert_data = read_experts(File::open(experts)?)?;
    let (d, p, k) = snap.state.weights.dim();
    if expert_data.dgrid.len() != d
        || expert_data.pgrid.len() != p
        || expert_data.panel.expert_names.len() != k
    {
        bail!(
            "snapshot weights are {d} x {p} x {k} but the expert file implies {} x {} x {}",
            expert_data.dgrid.len(),
            expert_data.pgrid.len(),
            expert_data.panel.expert_names.len()
        );
    }
    let weights = snap
        .state
        .weights
        .clone()
        .insert_axis(Axis(0));
    write_weights(
        create(out)?,
        weights.view(),
        &[snap.state.step as f64],
        &expert_data.dgrid,
        &expert_data.pgrid,
        &expert_data.panel.expert_names,
    )?;
    println!(
        "export-weights: wrote the weight surface after step {} to {}",
        snap.state.step,
        out.display()
    );
    Ok(())
}
