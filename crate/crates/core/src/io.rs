//! Long-format CSV ingest and emission.
//!
//! Expert files carry the columns `time,marginal,probability,expert,value`;
//! observation files carry `time,marginal,value`. Grids are inferred from the
//! data: numeric columns sort ascending, experts keep their order of first
//! appearance. Ingest insists on exactly one row per key combination.

use std::collections::HashMap;
use std::io::{Read, Write};

use ndarray::{Array2, Array4, ArrayView3, ArrayView4};

use crate::error::{CombineError, Result};
use crate::eval::ScoreTable;
use crate::grids::{MarginalGrid, ProbGrid};
use crate::panel::{ExpertPanel, ObservationSeries};
use crate::tuner::HyperParams;

/// An ingested expert panel with its inferred axes.
#[derive(Debug, Clone)]
pub struct ExpertData {
    pub panel: ExpertPanel,
    pub times: Vec<f64>,
    pub dgrid: MarginalGrid,
    pub pgrid: ProbGrid,
}

/// An ingested observation series with its inferred axes.
#[derive(Debug, Clone)]
pub struct ObservationData {
    pub obs: ObservationSeries,
    pub times: Vec<f64>,
    pub dgrid: MarginalGrid,
}

fn parse_field(field: &str, name: &str, line: usize) -> Result<f64> {
    field.trim().parse().map_err(|_| CombineError::Format {
        line,
        msg: format!("cannot parse {name} '{field}' as a number"),
    })
}

fn sorted_unique(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v
}

fn index_of(sorted: &[f64], value: f64) -> usize {
    sorted
        .binary_search_by(|x| x.partial_cmp(&value).unwrap())
        .expect("value came from this list")
}

/// Reads a long-format expert file (`time,marginal,probability,expert,value`).
pub fn read_experts<R: Read>(r: R) -> Result<ExpertData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let expected = ["time", "marginal", "probability", "expert", "value"];
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(expected) {
        return Err(CombineError::Format {
            line: 1,
            msg: format!(
                "expert header must be '{}', got '{}'",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    struct Row {
        t: f64,
        d: f64,
        p: f64,
        expert: String,
        value: f64,
        line: usize,
    }
    let mut rows = Vec::new();
    let mut expert_names: Vec<String> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != 5 {
            return Err(CombineError::Format {
                line,
                msg: format!("expected 5 fields, got {}", record.len()),
            });
        }
        let row = Row {
            t: parse_field(&record[0], "time", line)?,
            d: parse_field(&record[1], "marginal", line)?,
            p: parse_field(&record[2], "probability", line)?,
            expert: record[3].to_string(),
            value: parse_field(&record[4], "value", line)?,
            line,
        };
        if !expert_names.contains(&row.expert) {
            expert_names.push(row.expert.clone());
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CombineError::Format {
            line: 1,
            msg: "expert file has no data rows".into(),
        });
    }

    let times = sorted_unique(rows.iter().map(|r| r.t));
    let dvals = sorted_unique(rows.iter().map(|r| r.d));
    let pvals = sorted_unique(rows.iter().map(|r| r.p));
    let pgrid = ProbGrid::new(pvals.clone())?;
    let dgrid = MarginalGrid::new(dvals.clone())?;
    let expert_index: HashMap<&str, usize> = expert_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();

    let (t, d, p, k) = (times.len(), dvals.len(), pvals.len(), expert_names.len());
    let mut values = Array4::from_elem((t, d, p, k), f64::NAN);
    let mut filled = vec![false; t * d * p * k];
    for row in &rows {
        let ti = index_of(&times, row.t);
        let di = index_of(&dvals, row.d);
        let pi = index_of(&pvals, row.p);
        let ki = expert_index[row.expert.as_str()];
        let flat = ((ti * d + di) * p + pi) * k + ki;
        if filled[flat] {
            return Err(CombineError::Format {
                line: row.line,
                msg: format!(
                    "duplicate key (time={}, marginal={}, probability={}, expert={})",
                    row.t, row.d, row.p, row.expert
                ),
            });
        }
        filled[flat] = true;
        values[[ti, di, pi, ki]] = row.value;
    }

    let holes: Vec<String> = filled
        .iter()
        .enumerate()
        .filter(|(_, f)| !**f)
        .take(5)
        .map(|(flat, _)| {
            let ki = flat % k;
            let pi = flat / k % p;
            let di = flat / (k * p) % d;
            let ti = flat / (k * p * d);
            format!(
                "(time={}, marginal={}, probability={}, expert={})",
                times[ti], dvals[di], pvals[pi], expert_names[ki]
            )
        })
        .collect();
    if !holes.is_empty() {
        let missing = filled.iter().filter(|f| !**f).count();
        return Err(CombineError::Format {
            line: 0,
            msg: format!(
                "expert file is not rectangular: {missing} missing combinations, first ones: {}",
                holes.join(", ")
            ),
        });
    }

    Ok(ExpertData {
        panel: ExpertPanel::new(values, expert_names)?,
        times,
        dgrid,
        pgrid,
    })
}

/// Reads a long-format observation file (`time,marginal,value`).
pub fn read_observations<R: Read>(r: R) -> Result<ObservationData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let expected = ["time", "marginal", "value"];
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(expected) {
        return Err(CombineError::Format {
            line: 1,
            msg: format!(
                "observation header must be '{}', got '{}'",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != 3 {
            return Err(CombineError::Format {
                line,
                msg: format!("expected 3 fields, got {}", record.len()),
            });
        }
        rows.push((
            parse_field(&record[0], "time", line)?,
            parse_field(&record[1], "marginal", line)?,
            parse_field(&record[2], "value", line)?,
            line,
        ));
    }
    if rows.is_empty() {
        return Err(CombineError::Format {
            line: 1,
            msg: "observation file has no data rows".into(),
        });
    }
    let times = sorted_unique(rows.iter().map(|r| r.0));
    let dvals = sorted_unique(rows.iter().map(|r| r.1));
    let (t, d) = (times.len(), dvals.len());
    let mut values = Array2::from_elem((t, d), f64::NAN);
    let mut filled = vec![false; t * d];
    for (tv, dv, v, line) in &rows {
        let ti = index_of(&times, *tv);
        let di = index_of(&dvals, *dv);
        if filled[ti * d + di] {
            return Err(CombineError::Format {
                line: *line,
                msg: format!("duplicate key (time={tv}, marginal={dv})"),
            });
        }
        filled[ti * d + di] = true;
        values[[ti, di]] = *v;
    }
    if let Some(flat) = filled.iter().position(|f| !f) {
        return Err(CombineError::Format {
            line: 0,
            msg: format!(
                "observation file is not rectangular: first missing combination (time={}, marginal={})",
                times[flat / d],
                dvals[flat % d]
            ),
        });
    }
    Ok(ObservationData {
        obs: ObservationSeries::new(values),
        times,
        dgrid: MarginalGrid::new(dvals)?,
    })
}

/// Writes an expert panel in the long ingest format.
pub fn write_experts<W: Write>(
    w: W,
    panel: &ExpertPanel,
    times: &[f64],
    dgrid: &MarginalGrid,
    pgrid: &ProbGrid,
) -> Result<()> {
    let (t, d, p, k) = panel.values.dim();
    if times.len() != t || dgrid.len() != d || pgrid.len() != p {
        return Err(CombineError::ShapeMismatch(
            "axes do not match the panel being written".into(),
        ));
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["time", "marginal", "probability", "expert", "value"])?;
    for ti in 0..t {
        for di in 0..d {
            for pi in 0..p {
                for ki in 0..k {
                    wtr.write_record([
                        format!("{}", times[ti]),
                        format!("{}", dgrid.as_slice()[di]),
                        format!("{}", pgrid.as_slice()[pi]),
                        panel.expert_names[ki].clone(),
                        format!("{}", panel.values[[ti, di, pi, ki]]),
                    ])?;
                }
            }
        }
    }
    wtr.flush().map_err(CombineError::Io)
}

/// Writes an observation series in the long ingest format.
pub fn write_observations<W: Write>(
    w: W,
    obs: &ObservationSeries,
    times: &[f64],
    dgrid: &MarginalGrid,
) -> Result<()> {
    let (t, d) = obs.values.dim();
    if times.len() != t || dgrid.len() != d {
        return Err(CombineError::ShapeMismatch(
            "axes do not match the observations being written".into(),
        ));
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["time", "marginal", "value"])?;
    for ti in 0..t {
        for di in 0..d {
            wtr.write_record([
                format!("{}", times[ti]),
                format!("{}", dgrid.as_slice()[di]),
                format!("{}", obs.values[[ti, di]]),
            ])?;
        }
    }
    wtr.flush().map_err(CombineError::Io)
}

/// Writes a weight trajectory: `time,marginal,probability,expert,weight`.
pub fn write_weights<W: Write>(
    w: W,
    weights: ArrayView4<f64>,
    times: &[f64],
    dgrid: &MarginalGrid,
    pgrid: &ProbGrid,
    expert_names: &[String],
) -> Result<()> {
    let (t, d, p, k) = weights.dim();
    if times.len() != t || dgrid.len() != d || pgrid.len() != p || expert_names.len() != k {
        return Err(CombineError::ShapeMismatch(
            "axes do not match the weight trajectory being written".into(),
        ));
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["time", "marginal", "probability", "expert", "weight"])?;
    for ti in 0..t {
        for di in 0..d {
            for pi in 0..p {
                for ki in 0..k {
                    wtr.write_record([
                        format!("{}", times[ti]),
                        format!("{}", dgrid.as_slice()[di]),
                        format!("{}", pgrid.as_slice()[pi]),
                        expert_names[ki].clone(),
                        format!("{}", weights[[ti, di, pi, ki]]),
                    ])?;
                }
            }
        }
    }
    wtr.flush().map_err(CombineError::Io)
}

/// Writes combined forecasts: `time,marginal,probability,value`.
pub fn write_forecasts<W: Write>(
    w: W,
    predictions: ArrayView3<f64>,
    times: &[f64],
    dgrid: &MarginalGrid,
    pgrid: &ProbGrid,
) -> Result<()> {
    let (t, d, p) = predictions.dim();
    if times.len() != t || dgrid.len() != d || pgrid.len() != p {
        return Err(CombineError::ShapeMismatch(
            "axes do not match the forecasts being written".into(),
        ));
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["time", "marginal", "probability", "value"])?;
    for ti in 0..t {
        for di in 0..d {
            for pi in 0..p {
                wtr.write_record([
                    format!("{}", times[ti]),
                    format!("{}", dgrid.as_slice()[di]),
                    format!("{}", pgrid.as_slice()[pi]),
                    format!("{}", predictions[[ti, di, pi]]),
                ])?;
            }
        }
    }
    wtr.flush().map_err(CombineError::Io)
}

/// Writes per-model score tables: `model,time,marginal,crps` followed by one
/// `aggregate` row per model.
pub fn write_scores<W: Write>(
    w: W,
    entries: &[(String, ScoreTable)],
    times: &[f64],
    dgrid: &MarginalGrid,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["model", "time", "marginal", "crps"])?;
    for (name, table) in entries {
        let (t, d) = table.crps.dim();
        if times.len() != t || dgrid.len() != d {
            return Err(CombineError::ShapeMismatch(format!(
                "axes do not match the score table of model '{name}'"
            )));
        }
        for ti in 0..t {
            for di in 0..d {
                wtr.write_record([
                    name.clone(),
                    format!("{}", times[ti]),
                    format!("{}", dgrid.as_slice()[di]),
                    format!("{}", table.crps[[ti, di]]),
                ])?;
            }
        }
        wtr.write_record([
            name.clone(),
            "aggregate".into(),
            "all".into(),
            format!("{}", table.aggregate),
        ])?;
    }
    wtr.flush().map_err(CombineError::Io)
}

/// One row of the statistical test report.
#[derive(Debug, Clone)]
pub struct TestRow {
    pub model: String,
    pub reference: String,
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    pub significance: &'static str,
    pub note: String,
}

/// Writes test results: `model,reference,test,statistic,p_value,significance,note`.
pub fn write_tests<W: Write>(w: W, rows: &[TestRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "model",
        "reference",
        "test",
        "statistic",
        "p_value",
        "significance",
        "note",
    ])?;
    for r in rows {
        wtr.write_record([
            r.model.clone(),
            r.reference.clone(),
            r.test.clone(),
            format!("{}", r.statistic),
            format!("{}", r.p_value),
            r.significance.to_string(),
            r.note.clone(),
        ])?;
    }
    wtr.flush().map_err(CombineError::Io)
}

/// Writes the tuner outcome: candidate parameters, final score, and whether
/// the candidate was selected.
pub fn write_hyperparams<W: Write>(
    w: W,
    candidates: &[HyperParams],
    scores: &[f64],
    selected: usize,
) -> Result<()> {
    if candidates.len() != scores.len() || selected >= candidates.len() {
        return Err(CombineError::ShapeMismatch(
            "candidate list, scores, and selection do not line up".into(),
        ));
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "candidate", "theta", "phi", "nu", "kappa", "gamma", "lambda_mv", "lambda_pr", "mu_mv",
        "sigma_mv", "c_mv", "tau_mv", "mu_pr", "sigma_pr", "c_pr", "tau_pr", "score", "selected",
    ])?;
    for (i, (h, s)) in candidates.iter().zip(scores).enumerate() {
        let fields = [
            i as f64, h.theta, h.phi, h.nu, h.kappa, h.gamma, h.lambda_mv, h.lambda_pr, h.mu_mv,
            h.sigma_mv, h.c_mv, h.tau_mv, h.mu_pr, h.sigma_pr, h.c_pr, h.tau_pr, *s,
        ];
        let mut record: Vec<String> = fields.iter().map(|v| format!("{v}")).collect();
        record[0] = format!("{i}");
        record.push(format!("{}", i == selected));
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(CombineError::Io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, ScenarioSpec};
    use ndarray::Array3;

    #[test]
    fn expert_round_trip() {
        let s = generate_scenario(&ScenarioSpec::calm(4, 3, 5, 2), 9).unwrap();
        let times: Vec<f64> = (0..4).map(|i| i as f64).collect();
        let mut buf = Vec::new();
        write_experts(
            &mut buf,
            &s.bundle.panel,
            &times,
            &s.bundle.dgrid,
            &s.bundle.pgrid,
        )
        .unwrap();
        let back = read_experts(buf.as_slice()).unwrap();
        assert_eq!(back.times, times);
        assert_eq!(back.panel.expert_names, s.bundle.panel.expert_names);
        assert_eq!(back.pgrid, s.bundle.pgrid);
        assert_eq!(back.dgrid, s.bundle.dgrid);
        for (a, b) in back
            .panel
            .values
            .iter()
            .zip(s.bundle.panel.values.iter())
        {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn observation_round_trip() {
        let s = generate_scenario(&ScenarioSpec::calm(6, 2, 3, 2), 10).unwrap();
        let times: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let mut buf = Vec::new();
        write_observations(&mut buf, &s.bundle.obs, &times, &s.bundle.dgrid).unwrap();
        let back = read_observations(buf.as_slice()).unwrap();
        assert_eq!(back.obs.values, s.bundle.obs.values);
    }

    #[test]
    fn expert_order_follows_first_appearance() {
        let csv = "time,marginal,probability,expert,value\n\
                   0,1,0.5,zebra,1.0\n\
                   0,1,0.5,apple,2.0\n\
                   1,1,0.5,zebra,1.0\n\
                   1,1,0.5,apple,2.0\n";
        let data = read_experts(csv.as_bytes()).unwrap();
        assert_eq!(data.panel.expert_names, vec!["zebra", "apple"]);
        assert_eq!(data.panel.values[[0, 0, 0, 0]], 1.0);
        assert_eq!(data.panel.values[[0, 0, 0, 1]], 2.0);
    }

    #[test]
    fn duplicate_key_is_reported_with_line() {
        let csv = "time,marginal,probability,expert,value\n\
                   0,1,0.5,a,1.0\n\
                   0,1,0.5,a,2.0\n";
        let err = read_experts(csv.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("duplicate key"), "{msg}");
    }

    #[test]
    fn missing_combination_names_the_hole() {
        let csv = "time,marginal,probability,expert,value\n\
                   0,1,0.5,a,1.0\n\
                   0,1,0.5,b,1.0\n\
                   1,1,0.5,a,1.0\n";
        let err = read_experts(csv.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("not rectangular"), "{msg}");
        assert!(msg.contains("expert=b"), "{msg}");
    }

    #[test]
    fn bad_header_and_bad_number_are_rejected() {
        let err = read_experts("a,b,c\n1,2,3\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("header"));
        let err = read_observations(
            "time,marginal,value\n0,1,not-a-number\n".as_bytes(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("not-a-number"));
    }

    #[test]
    fn forecast_emission_has_expected_shape() {
        let preds = Array3::from_shape_fn((2, 2, 3), |(t, d, p)| (t + d + p) as f64);
        let times = vec![0.0, 1.0];
        let dgrid = MarginalGrid::indices(2).unwrap();
        let pgrid = ProbGrid::equidistant(3).unwrap();
        let mut buf = Vec::new();
        write_forecasts(&mut buf, preds.view(), &times, &dgrid, &pgrid).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "time,marginal,probability,value");
        assert_eq!(lines.len(), 1 + 2 * 2 * 3);
        assert_eq!(lines[1], "0,1,0.25,0");
    }
}
