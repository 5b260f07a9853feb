use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use smib_core::nni::lyapunov_w;
use smib_core::stability::{c_max, eac_margin, eac_stable, in_invariant_set, stability_report};
use smib_core::{simulate, FaultScenario, SmibParams};

mod config;
mod error;
mod output;
mod plot;
mod sweep;
mod verify;

use config::{Overrides, ScenarioFile, SweepFile};
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "smib",
    version,
    about = "Single-machine infinite-bus transient stability with battery angle feedback"
)]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Integration step (s), overrides the file.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Simulation horizon (s), overrides the file.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Record every n-th integration step.
    #[arg(long, global = true)]
    stride: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trajectory, report and plots.
    Simulate { scenario: PathBuf },
    /// Run a scenario for every value of one axis.
    Sweep { sweep: PathBuf },
    /// Run the numerical dissipation, Lyapunov and definiteness checks.
    Verify { scenario: PathBuf },
    /// Equal-area margin and verdict for a post-fault angle.
    Eac {
        #[arg(long, allow_hyphen_values = true)]
        delta0: f64,
        #[command(flatten)]
        plant: PlantArgs,
    },
    /// Critical level and membership of a state in the invariant set.
    InvariantSet {
        #[arg(long, allow_hyphen_values = true)]
        delta0: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        delta_dot0: f64,
        /// Level as a fraction of the critical level.
        #[arg(long, default_value_t = smib_core::stability::DEFAULT_LEVEL_FRACTION)]
        level_fraction: f64,
        #[command(flatten)]
        plant: PlantArgs,
    },
}

#[derive(Args)]
struct PlantArgs {
    /// Take the plant from a scenario file instead of the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 4.0)]
    h: f64,
    #[arg(long, default_value_t = 50.0)]
    f0: f64,
    #[arg(long, default_value_t = 0.8)]
    p_mech: f64,
    #[arg(long, default_value_t = 1.0)]
    p_max: f64,
}

impl PlantArgs {
    fn params(&self) -> CliResult<SmibParams> {
        match &self.config {
            Some(path) => Ok(ScenarioFile::load(path)?.resolve()?.params),
            None => Ok(SmibParams::from_hz(
                self.h,
                self.f0,
                0.0,
                self.p_mech,
                self.p_max,
            )?),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let overrides = Overrides {
        dt: cli.dt,
        horizon: cli.horizon,
        stride: cli.stride,
    };
    match &cli.command {
        Command::Simulate { scenario } => cmd_simulate(scenario, &cli.out, &overrides),
        Command::Sweep { sweep } => cmd_sweep(sweep, &cli.out, &overrides, cli.jobs),
        Command::Verify { scenario } => cmd_verify(scenario, &overrides),
        Command::Eac { delta0, plant } => {
            let p = plant.params()?;
            let margin = eac_margin(*delta0, &p);
            println!("delta0 = {delta0}");
            println!("delta_bar = {:.6}", p.delta_bar);
            println!("eac_margin = {margin:.6}");
            println!(
                "verdict = {}",
                if eac_stable(*delta0, &p) {
                    "stable"
                } else {
                    "unstable"
                }
            );
            Ok(())
        }
        Command::InvariantSet {
            delta0,
            delta_dot0,
            level_fraction,
            plant,
        } => {
            if !(*level_fraction > 0.0 && *level_fraction <= 1.0) {
                return Err(CliError::Config(format!(
                    "--level-fraction must lie in (0, 1], got {level_fraction}"
                )));
            }
            let p = plant.params()?;
            let x = FaultScenario::new(*delta0)
                .with_rate(*delta_dot0)
                .initial_state(&p);
            let cm = c_max(&p)?;
            let level = level_fraction * cm;
            println!("c_max = {cm:.6}");
            println!("level = {level:.6}");
            println!("angle_window = {:.6}", p.angle_window());
            println!("W = {:.6}", lyapunov_w(&x, &p));
            println!("in_omega = {}", in_invariant_set(&x, level, &p)?);
            Ok(())
        }
    }
}

fn cmd_simulate(path: &Path, out: &Path, overrides: &Overrides) -> CliResult<()> {
    let mut sc = ScenarioFile::load(path)?;
    sc.apply(overrides);
    let r = sc.resolve()?;
    let traj = simulate(&r.scenario, r.controller.as_ref(), &r.params, &r.sim)?;
    let report = stability_report(&traj)?;
    output::write_run(out, &sc, &traj, &report)?;
    println!("samples = {}", traj.len());
    println!("verdict = {}", report.verdict.as_str());
    println!("empirical_stable = {}", report.empirical_stable);
    println!("eac_margin = {:.6}", report.eac_margin);
    println!("in_omega = {}", report.in_omega);
    if let Some(t) = report.saturation_exit {
        println!("saturation_exit = {t}");
    }
    println!("output = {}", out.display());
    match traj.diverged_at {
        Some(t) => Err(CliError::Diverged(t)),
        None => Ok(()),
    }
}

fn cmd_sweep(path: &Path, out: &Path, overrides: &Overrides, jobs: Option<usize>) -> CliResult<()> {
    let sw = SweepFile::load(path)?;
    let rows = sweep::run_sweep(&sw, overrides, out, jobs)?;
    let axis = sw.sweep.axis.name();
    for r in &rows {
        match &r.error {
            None => println!("{axis} = {:<12.6} {}", r.value, r.classification),
            Some(e) => println!("{axis} = {:<12.6} error: {e}", r.value),
        }
    }
    println!("summary = {}", out.join(sweep::SUMMARY_CSV).display());
    Ok(())
}

fn cmd_verify(path: &Path, overrides: &Overrides) -> CliResult<()> {
    let mut sc = ScenarioFile::load(path)?;
    sc.apply(overrides);
    let r = sc.resolve()?;
    let traj = simulate(&r.scenario, r.controller.as_ref(), &r.params, &r.sim)?;
    let checks = verify::run_checks(&r, &traj)?;
    print!("{}", verify::render_table(&checks));
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| c.failed())
        .map(|c| c.property.clone())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed))
    }
}
