//! Parameter sweeps over one scenario axis.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use smib_core::simulate;
use smib_core::stability::stability_report;

use crate::config::{Overrides, SweepFile};
use crate::error::{CliError, CliResult};
use crate::output::{num, write_run};

pub const SUMMARY_CSV: &str = "summary.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct PointOutcome {
    pub index: usize,
    pub value: f64,
    pub classification: String,
    pub eac_margin: Option<f64>,
    pub in_omega: Option<bool>,
    pub exit_time: Option<f64>,
    pub error: Option<String>,
}

impl PointOutcome {
    fn failed(index: usize, value: f64, e: CliError) -> Self {
        Self {
            index,
            value,
            classification: "error".into(),
            eac_margin: None,
            in_omega: None,
            exit_time: None,
            error: Some(e.to_string()),
        }
    }
}

pub fn point_dir(out: &Path, index: usize) -> std::path::PathBuf {
    out.join(format!("point_{index:03}"))
}

fn run_point(
    sweep: &SweepFile,
    overrides: &Overrides,
    out: &Path,
    index: usize,
    value: f64,
) -> CliResult<PointOutcome> {
    let mut sc = sweep.point(value);
    sc.apply(overrides);
    let r = sc.resolve()?;
    let traj = simulate(&r.scenario, r.controller.as_ref(), &r.params, &r.sim)?;
    let report = stability_report(&traj)?;
    write_run(&point_dir(out, index), &sc, &traj, &report)?;
    Ok(PointOutcome {
        index,
        value,
        classification: report.verdict.as_str().to_string(),
        eac_margin: Some(report.eac_margin),
        in_omega: Some(report.in_omega),
        exit_time: report.saturation_exit,
        error: None,
    })
}

/// Runs every grid point on a pool of `jobs` workers (all cores when `None`)
/// and writes the summary once all points are done.
pub fn run_sweep(
    sweep: &SweepFile,
    overrides: &Overrides,
    out: &Path,
    jobs: Option<usize>,
) -> CliResult<Vec<PointOutcome>> {
    let values = sweep.values()?;
    if jobs == Some(0) {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let outcomes: Vec<PointOutcome> = pool.install(|| {
        values
            .par_iter()
            .enumerate()
            .map(|(i, &v)| {
                run_point(sweep, overrides, out, i, v)
                    .unwrap_or_else(|e| PointOutcome::failed(i, v, e))
            })
            .collect()
    });
    write_summary(&out.join(SUMMARY_CSV), sweep.sweep.axis.name(), &outcomes)?;
    Ok(outcomes)
}

pub fn write_summary(path: &Path, axis: &str, rows: &[PointOutcome]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "index",
        axis,
        "classification",
        "eac_margin",
        "in_omega",
        "exit_time",
        "error",
    ])?;
    for r in rows {
        w.write_record([
            r.index.to_string(),
            num(r.value),
            r.classification.clone(),
            r.eac_margin.map(num).unwrap_or_default(),
            r.in_omega.map(|b| b.to_string()).unwrap_or_default(),
            r.exit_time.map(num).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}
