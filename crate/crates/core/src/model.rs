//! Single-machine-infinite-bus plant.
//!
//! The generator is described in deviation coordinates around the pre-fault
//! operating point `delta_bar`:
//!
//! ```text
//! M·δ̈̃ + D·δ̇̃ = P̃_st + Pmax·sin(δ̄) − Pmax·sin(δ̃ + δ̄)
//! ```
//!
//! All powers are per-unit, angles in radians and time in seconds.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance on the pre-fault power balance.
pub const EQUILIBRIUM_TOL: f64 = 1e-12;

/// Physical constants of the SMIB plant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmibParams {
    /// Inertia constant `H` (s).
    pub h: f64,
    /// Nominal angular frequency (rad/s).
    pub omega0: f64,
    /// Inertia coefficient `M = 2H/omega0`.
    pub m: f64,
    /// Damping coefficient.
    pub d: f64,
    /// Pre-fault mechanical power.
    pub p_mech: f64,
    /// Maximum electric power transfer.
    pub p_max: f64,
    /// Steady-state rotor angle (rad).
    pub delta_bar: f64,
    /// Pre-fault battery output.
    pub p_storage_bar: f64,
}

impl SmibParams {
    /// Builds a plant whose steady-state angle is solved from the pre-fault
    /// power balance `p_mech + p_storage_bar = p_max·sin(delta_bar)`.
    pub fn new(
        h: f64,
        omega0: f64,
        d: f64,
        p_mech: f64,
        p_max: f64,
        p_storage_bar: f64,
    ) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid(
                "H",
                format!("must be positive and finite, got {h}"),
            ));
        }
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(invalid(
                "omega0",
                format!("must be positive and finite, got {omega0}"),
            ));
        }
        let delta_bar = equilibrium_angle(p_mech + p_storage_bar, p_max)?;
        let params = Self {
            h,
            omega0,
            m: 2.0 * h / omega0,
            d,
            p_mech,
            p_max,
            delta_bar,
            p_storage_bar,
        };
        params.validate()?;
        Ok(params)
    }

    /// Same as [`SmibParams::new`] with the nominal frequency given in Hz.
    pub fn from_hz(h: f64, f0: f64, d: f64, p_mech: f64, p_max: f64) -> Result<Self> {
        Self::new(h, 2.0 * PI * f0, d, p_mech, p_max, 0.0)
    }

    /// H = 4 s, 50 Hz, undamped, 0.8 pu mechanical power against a 1 pu
    /// transfer limit. The workhorse case for the simulation study.
    pub fn benchmark() -> Self {
        Self::from_hz(4.0, 50.0, 0.0, 0.8, 1.0).expect("benchmark parameters are valid")
    }

    pub fn with_damping(mut self, d: f64) -> Self {
        self.d = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("H", self.h),
            ("omega0", self.omega0),
            ("M", self.m),
            ("D", self.d),
            ("p_mech", self.p_mech),
            ("p_max", self.p_max),
            ("delta_bar", self.delta_bar),
            ("p_storage_bar", self.p_storage_bar),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        if self.h <= 0.0 {
            return Err(invalid("H", "must be positive"));
        }
        if self.omega0 <= 0.0 {
            return Err(invalid("omega0", "must be positive"));
        }
        if self.m <= 0.0 {
            return Err(invalid("M", "must be positive"));
        }
        if self.d < 0.0 {
            return Err(invalid(
                "D",
                format!("must be non-negative, got {}", self.d),
            ));
        }
        if self.p_max <= 0.0 {
            return Err(invalid(
                "p_max",
                format!("must be positive, got {}", self.p_max),
            ));
        }
        if !(self.delta_bar > 0.0 && self.delta_bar < FRAC_PI_2) {
            return Err(invalid(
                "delta_bar",
                format!("must lie in (0, pi/2), got {}", self.delta_bar),
            ));
        }
        let imbalance = self.p_mech + self.p_storage_bar - self.p_max * self.delta_bar.sin();
        if imbalance.abs() > EQUILIBRIUM_TOL {
            return Err(invalid(
                "delta_bar",
                format!("pre-fault power balance violated by {imbalance:e}"),
            ));
        }
        Ok(())
    }

    /// Half-width of the angle window `π − 2δ̄` bounding the analysis domain.
    pub fn angle_window(&self) -> f64 {
        PI - 2.0 * self.delta_bar
    }
}

/// Deviation state `x1 = [δ̇̃, δ̃]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub delta_tilde_dot: f64,
    pub delta_tilde: f64,
}

impl PlantState {
    pub const ORIGIN: Self = Self {
        delta_tilde_dot: 0.0,
        delta_tilde: 0.0,
    };

    pub fn new(delta_tilde_dot: f64, delta_tilde: f64) -> Self {
        Self {
            delta_tilde_dot,
            delta_tilde,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.delta_tilde_dot.is_finite() && self.delta_tilde.is_finite()
    }

    /// Absolute rotor angle `δ = δ̄ + δ̃`.
    pub fn absolute_angle(&self, params: &SmibParams) -> f64 {
        params.delta_bar + self.delta_tilde
    }

    /// Bus frequency `ω = ω0 + δ̇̃` (rad/s).
    pub fn frequency(&self, params: &SmibParams) -> f64 {
        params.omega0 + self.delta_tilde_dot
    }

    /// Rotor angle in the stationary frame, `θ(t) = ω0·t + δ̄ + δ̃(t)`.
    pub fn stationary_angle(&self, t: f64, params: &SmibParams) -> f64 {
        params.omega0 * t + self.absolute_angle(params)
    }
}

/// Post-fault initial condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultScenario {
    /// Post-fault absolute angle (rad).
    pub delta0: f64,
    /// Post-fault angle rate (rad/s).
    pub delta_dot0: f64,
    /// Simulation length (s).
    pub horizon: f64,
}

impl FaultScenario {
    pub const DEFAULT_HORIZON: f64 = 20.0;

    pub fn new(delta0: f64) -> Self {
        Self {
            delta0,
            delta_dot0: 0.0,
            horizon: Self::DEFAULT_HORIZON,
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_rate(mut self, delta_dot0: f64) -> Self {
        self.delta_dot0 = delta_dot0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta0.is_finite() {
            return Err(invalid("delta0", "must be finite"));
        }
        if !self.delta_dot0.is_finite() {
            return Err(invalid("delta_dot0", "must be finite"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(
                "horizon",
                format!("must be positive, got {}", self.horizon),
            ));
        }
        Ok(())
    }

    /// Initial plant state in deviation coordinates.
    pub fn initial_state(&self, params: &SmibParams) -> PlantState {
        PlantState::new(self.delta_dot0, self.delta0 - params.delta_bar)
    }
}

pub fn electric_power(delta: f64, p_max: f64) -> f64 {
    p_max * delta.sin()
}

/// Stable equilibrium angle on the principal branch `[0, π/2)`.
pub fn equilibrium_angle(p_injection: f64, p_max: f64) -> Result<f64> {
    if !(p_max > 0.0 && p_max.is_finite()) {
        return Err(invalid(
            "p_max",
            format!("must be positive and finite, got {p_max}"),
        ));
    }
    if !(p_injection >= 0.0 && p_injection < p_max) {
        return Err(Error::NoEquilibrium { p_injection, p_max });
    }
    Ok((p_injection / p_max).asin())
}

/// `M = 2H/(2π·f0)`.
pub fn inertia_from_h(h: f64, f0: f64) -> f64 {
    2.0 * h / (2.0 * PI * f0)
}

/// Restoring power `Pmax·sin(δ̄) − Pmax·sin(δ̃ + δ̄)`; zero at the equilibrium.
pub fn restoring_power(delta_tilde: f64, params: &SmibParams) -> f64 {
    params.p_max * params.delta_bar.sin() - params.p_max * (delta_tilde + params.delta_bar).sin()
}

/// Time derivative of the plant state for a given battery deviation `p_control`.
pub fn swing_rhs(state: &PlantState, p_control: f64, params: &SmibParams) -> PlantState {
    let accel = (p_control + restoring_power(state.delta_tilde, params)
        - params.d * state.delta_tilde_dot)
        / params.m;
    PlantState::new(accel, state.delta_tilde_dot)
}
