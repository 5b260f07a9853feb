//! Files written for a single run.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use smib_core::nni::certificate_value;
use smib_core::stability::StabilityReport;
use smib_core::Trajectory;

use crate::config::{Artifact, ScenarioFile};
use crate::error::{CliError, CliResult};
use crate::plot::{LinePlot, Series};

pub const CSV_HEADER: [&str; 8] = [
    "t",
    "delta_tilde",
    "delta_tilde_dot",
    "x3",
    "w",
    "p_battery",
    "mode",
    "W_or_Ŵ",
];

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const REPORT_TOML: &str = "report.toml";
pub const SCENARIO_TOML: &str = "scenario.toml";
pub const ANGLE_SVG: &str = "delta_tilde.svg";
pub const BATTERY_SVG: &str = "p_battery.svg";

/// Nine significant digits.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        v.to_string()
    }
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for (i, s) in traj.samples.iter().enumerate() {
        let mode = if traj.is_controlled() {
            s.controller.mode.as_str()
        } else {
            "none"
        };
        w.write_record([
            num(s.t),
            num(s.plant.delta_tilde),
            num(s.plant.delta_tilde_dot),
            num(s.controller.x3),
            num(s.w),
            num(s.p_battery),
            mode.to_string(),
            num(certificate_value(traj, i)),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

#[derive(Serialize)]
struct RunInfo {
    dt: f64,
    horizon: f64,
    record_stride: usize,
    samples: usize,
    controlled: bool,
    mode_switches: usize,
    diverged: bool,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    run: RunInfo,
    stability: &'a StabilityReport,
}

pub fn report_toml(traj: &Trajectory, report: &StabilityReport) -> CliResult<String> {
    let setup = &traj.setup;
    let file = ReportFile {
        run: RunInfo {
            dt: traj.dt,
            horizon: setup.sim.horizon.unwrap_or(setup.scenario.horizon),
            record_stride: setup.sim.record_stride,
            samples: traj.len(),
            controlled: traj.is_controlled(),
            mode_switches: traj.mode_switches().len(),
            diverged: traj.diverged(),
        },
        stability: report,
    };
    toml::to_string(&file).map_err(|e| CliError::Config(e.to_string()))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes())
        .map_err(|e| CliError::io(path, e))
}

pub fn write_plots(dir: &Path, traj: &Trajectory) -> CliResult<()> {
    let t = traj.times();
    let d = traj.delta_tilde();
    let angle = LinePlot {
        title: "Rotor angle deviation",
        x_label: "time (s)",
        y_label: "δ̃ (rad)",
        series: vec![Series { x: &t, y: &d }],
    };
    write_text(&dir.join(ANGLE_SVG), &angle.to_svg())?;
    if traj.is_controlled() {
        let p: Vec<f64> = traj.samples.iter().map(|s| s.p_battery).collect();
        let battery = LinePlot {
            title: "Battery power change",
            x_label: "time (s)",
            y_label: "P̃st (p.u.)",
            series: vec![Series { x: &t, y: &p }],
        };
        write_text(&dir.join(BATTERY_SVG), &battery.to_svg())?;
    }
    Ok(())
}

/// Writes every requested artifact plus the echoed scenario into `dir`.
pub fn write_run(
    dir: &Path,
    scenario: &ScenarioFile,
    traj: &Trajectory,
    report: &StabilityReport,
) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_text(&dir.join(SCENARIO_TOML), &scenario.to_toml()?)?;
    if scenario.wants(Artifact::Csv) {
        write_trajectory_csv(&dir.join(TRAJECTORY_CSV), traj)?;
    }
    if scenario.wants(Artifact::Report) {
        write_text(&dir.join(REPORT_TOML), &report_toml(traj, report)?)?;
    }
    if scenario.wants(Artifact::Plot) {
        write_plots(dir, traj)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(num(0.927295218), "9.27295218e-1");
        assert_eq!(num(0.0), "0.00000000e0");
        assert_eq!(num(-12.5), "-1.25000000e1");
        assert_eq!(num(f64::INFINITY), "inf");
    }
}
