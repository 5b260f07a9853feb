//! Fixed-step closed-loop integration.
//!
//! The plant and controller are advanced together with classical RK4. The
//! controller mode is decided once per step from the step-start state and
//! held for the four stages; the saturated battery command itself is
//! evaluated at every stage.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::controller::{
    mode_of, next_mode, rhs_in_mode, sat, saturation_variable, ControllerConfig, ControllerState,
    Mode,
};
use crate::error::{invalid, Result};
use crate::model::{swing_rhs, FaultScenario, PlantState, SmibParams};

/// Runs are cut short once the angle deviation passes this magnitude.
pub const DIVERGENCE_ANGLE: f64 = 4.0 * PI;

/// Classical fourth-order Runge–Kutta step for an autonomous field.
pub fn rk4_step<const N: usize, F>(x: &[f64; N], dt: f64, f: F) -> [f64; N]
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    let axpy = |a: &[f64; N], h: f64, k: &[f64; N]| -> [f64; N] {
        let mut out = *a;
        for i in 0..N {
            out[i] += h * k[i];
        }
        out
    };
    let k1 = f(x);
    let k2 = f(&axpy(x, 0.5 * dt, &k1));
    let k3 = f(&axpy(x, 0.5 * dt, &k2));
    let k4 = f(&axpy(x, dt, &k3));
    let mut out = *x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Integration step (s).
    pub dt: f64,
    /// Overrides the scenario horizon when set.
    pub horizon: Option<f64>,
    /// Record every n-th step.
    pub record_stride: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: None,
            record_stride: 1,
        }
    }
}

impl SimulationConfig {
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if let Some(h) = self.horizon {
            if !(h.is_finite() && h >= self.dt) {
                return Err(invalid("horizon", format!("must be at least dt, got {h}")));
            }
        }
        if self.record_stride == 0 {
            return Err(invalid("record_stride", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub plant: PlantState,
    pub controller: ControllerState,
    /// Saturation variable; zero for uncontrolled runs.
    pub w: f64,
    /// Battery deviation `P̃_st = sat_b(w)`.
    pub p_battery: f64,
}

/// Everything needed to reproduce a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSetup {
    pub scenario: FaultScenario,
    pub controller: Option<ControllerConfig>,
    pub params: SmibParams,
    pub sim: SimulationConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<Sample>,
    pub setup: RunSetup,
    /// Time at which the run was stopped for divergence.
    pub diverged_at: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_controlled(&self) -> bool {
        self.setup.controller.is_some()
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    /// Spacing of the recorded samples.
    pub fn sample_interval(&self) -> f64 {
        self.dt * self.setup.sim.record_stride as f64
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn delta_tilde(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.plant.delta_tilde).collect()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Indices `i` where the mode differs between sample `i − 1` and `i`.
    pub fn mode_switches(&self) -> Vec<usize> {
        self.samples
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0].controller.mode != w[1].controller.mode)
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Largest `|δ̃|` over samples with `t ≥ from`.
    pub fn max_abs_delta_after(&self, from: f64) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.t >= from)
            .map(|s| s.plant.delta_tilde.abs())
            .fold(0.0, f64::max)
    }
}

fn closed_loop_field(
    x: &[f64; 3],
    mode: Mode,
    cfg: Option<&ControllerConfig>,
    params: &SmibParams,
) -> [f64; 3] {
    let plant = PlantState::new(x[0], x[1]);
    let u3 = plant.delta_tilde;
    let (p_control, x3_dot) = match cfg {
        Some(c) => (
            sat(saturation_variable(x[2], u3, c, params), c.b),
            rhs_in_mode(x[2], u3, mode, c),
        ),
        None => (0.0, 0.0),
    };
    let d = swing_rhs(&plant, p_control, params);
    [d.delta_tilde_dot, d.delta_tilde, x3_dot]
}

/// Simulates the post-fault transient. Without a controller the battery
/// deviation is identically zero.
///
/// The run starts from `(δ̇0, δ0 − δ̄, x̂3 = 0)` and stops early, with
/// `diverged_at` set, once `|δ̃| > 4π` or the state stops being finite. Only
/// every `record_stride`-th step is recorded, so the recorded grid is always
/// uniform; an escaping run continues to the next recorded step before it
/// stops.
pub fn simulate(
    scenario: &FaultScenario,
    cfg: Option<&ControllerConfig>,
    params: &SmibParams,
    sim: &SimulationConfig,
) -> Result<Trajectory> {
    scenario.validate()?;
    params.validate()?;
    sim.validate()?;
    if let Some(c) = cfg {
        c.validate()?;
    }

    let horizon = sim.horizon.unwrap_or(scenario.horizon);
    let steps = (horizon / sim.dt).round() as usize;
    if steps == 0 {
        return Err(invalid("horizon", "shorter than one step"));
    }
    let stride = sim.record_stride;

    let init = scenario.initial_state(params);
    let mut x = [init.delta_tilde_dot, init.delta_tilde, 0.0];
    let mut mode = Mode::Linear;
    let mut samples = Vec::with_capacity(steps / stride + 2);
    let mut diverged_at = None;

    let sample_at = |k: usize, x: &[f64; 3], mode: Mode, w: f64| -> Sample {
        Sample {
            t: k as f64 * sim.dt,
            plant: PlantState::new(x[0], x[1]),
            controller: ControllerState { x3: x[2], mode },
            w,
            p_battery: cfg.map_or(0.0, |c| sat(w, c.b)),
        }
    };

    let mut escaped = false;
    for k in 0..=steps {
        let w = cfg.map_or(0.0, |c| saturation_variable(x[2], x[1], c, params));
        if let Some(c) = cfg {
            mode = if k == 0 {
                mode_of(w, c.b)
            } else {
                next_mode(w, mode, c)
            };
        }
        if !escaped && x[1].abs() > DIVERGENCE_ANGLE {
            escaped = true;
            diverged_at = Some(k as f64 * sim.dt);
        }
        if k % stride == 0 {
            samples.push(sample_at(k, &x, mode, w));
            if escaped {
                break;
            }
        }
        if k == steps {
            break;
        }
        let next = rk4_step(&x, sim.dt, |s| closed_loop_field(s, mode, cfg, params));
        if next.iter().any(|v| !v.is_finite()) {
            diverged_at.get_or_insert((k + 1) as f64 * sim.dt);
            break;
        }
        x = next;
    }

    Ok(Trajectory {
        dt: sim.dt,
        samples,
        setup: RunSetup {
            scenario: *scenario,
            controller: cfg.copied(),
            params: *params,
            sim: *sim,
        },
        diverged_at,
    })
}

/// Earliest time after which every sample has `|w| < b`.
///
/// Returns the first sample time for a run that never saturates and `None`
/// when the last recorded sample is still saturated.
pub fn detect_saturation_exit(traj: &Trajectory, b: f64) -> Option<f64> {
    let first = traj.samples.first()?;
    match traj.samples.iter().rposition(|s| s.w.abs() >= b) {
        None => Some(first.t),
        Some(i) if i + 1 == traj.samples.len() => None,
        Some(i) => Some(traj.samples[i].t),
    }
}
