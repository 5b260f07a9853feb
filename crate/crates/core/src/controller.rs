//! Battery angle-feedback controllers.
//!
//! The unsaturated phase-lead law
//!
//! ```text
//! ẋ3 = (−x3 + K·u3)/τ,    y3 = x3 − L·u3
//! ```
//!
//! and its saturated anti-windup variant, which replaces the nominal
//! feedback `g(u3)` and clips the battery command to `[−b, b]`:
//!
//! ```text
//! w   = x̂3 − L·û3 − g(û3)
//! ẋ̂3 = (−x̂3 + K·û3)/τ      if |w| < b
//!      −(α/K)·x̂3            if |w| ≥ b
//! ŷ3  = g(û3) + sat_b(w)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{restoring_power, SmibParams};

/// Gains and limits of the saturated controller.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Time constant (s).
    pub tau: f64,
    pub k: f64,
    /// Feedthrough gain.
    pub l: f64,
    /// Decay gain used while saturated.
    pub alpha: f64,
    /// Saturation bound on the battery deviation. `f64::INFINITY` disables it.
    pub b: f64,
    /// Width of the exit band: a saturated controller returns to linear mode
    /// once `|w| < b − hysteresis`. Zero gives the sharp threshold.
    #[serde(default)]
    pub hysteresis: f64,
}

impl ControllerConfig {
    /// τ = 0.1, K = 1, L = 1.1, α = 1 with the given bound.
    pub fn benchmark(b: f64) -> Self {
        Self {
            tau: 0.1,
            k: 1.0,
            l: 1.1,
            alpha: 1.0,
            b,
            hysteresis: 0.0,
        }
    }

    pub fn with_bound(mut self, b: f64) -> Self {
        self.b = b;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau", self.tau),
            ("K", self.k),
            ("L", self.l),
            ("alpha", self.alpha),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(
                    name,
                    format!("must be positive and finite, got {v}"),
                ));
            }
        }
        if self.b.is_nan() || self.b < 0.0 {
            return Err(invalid(
                "b",
                format!("must be non-negative, got {}", self.b),
            ));
        }
        if !(self.hysteresis >= 0.0 && self.hysteresis.is_finite()) {
            return Err(invalid("hysteresis", "must be non-negative and finite"));
        }
        Ok(())
    }

    /// Design condition `K − L < 0` for the unsaturated loop.
    pub fn is_stabilizing(&self) -> bool {
        self.k - self.l < 0.0
    }

    pub fn is_unbounded(&self) -> bool {
        self.b == f64::INFINITY
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Linear,
    Saturated,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Linear => "linear",
            Mode::Saturated => "saturated",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub x3: f64,
    pub mode: Mode,
}

impl Default for ControllerState {
    fn default() -> Self {
        Self {
            x3: 0.0,
            mode: Mode::Linear,
        }
    }
}

/// Clamp to `[−b, b]`.
pub fn sat(w: f64, b: f64) -> f64 {
    w.clamp(-b, b)
}

/// Nominal feedback `g(u3) = Pmax·sin δ̄ − Pmax·sin(u3 + δ̄)`.
pub fn nominal_feedback_g(u3: f64, params: &SmibParams) -> f64 {
    restoring_power(u3, params)
}

/// `w = x3 − L·u3 − g(u3)`.
pub fn saturation_variable(x3: f64, u3: f64, cfg: &ControllerConfig, params: &SmibParams) -> f64 {
    x3 - cfg.l * u3 - nominal_feedback_g(u3, params)
}

pub fn phase_lead_rhs(x3: f64, u3: f64, cfg: &ControllerConfig) -> f64 {
    (-x3 + cfg.k * u3) / cfg.tau
}

pub fn phase_lead_output(x3: f64, u3: f64, cfg: &ControllerConfig) -> f64 {
    x3 - cfg.l * u3
}

/// Mode implied by the sharp threshold `|w| < b`.
pub fn mode_of(w: f64, b: f64) -> Mode {
    if w.abs() < b {
        Mode::Linear
    } else {
        Mode::Saturated
    }
}

/// Mode for the next step given the previous one. With zero hysteresis this
/// is exactly [`mode_of`].
pub fn next_mode(w: f64, previous: Mode, cfg: &ControllerConfig) -> Mode {
    match previous {
        Mode::Saturated if cfg.hysteresis > 0.0 => {
            if w.abs() < cfg.b - cfg.hysteresis {
                Mode::Linear
            } else {
                Mode::Saturated
            }
        }
        _ => mode_of(w, cfg.b),
    }
}

/// Controller vector field with the mode held fixed.
pub fn rhs_in_mode(x3: f64, u3: f64, mode: Mode, cfg: &ControllerConfig) -> f64 {
    match mode {
        Mode::Linear => phase_lead_rhs(x3, u3, cfg),
        Mode::Saturated => -(cfg.alpha / cfg.k) * x3,
    }
}

/// Switched vector field, mode decided from the current saturation variable.
pub fn saturated_rhs(
    state: &ControllerState,
    u3: f64,
    cfg: &ControllerConfig,
    params: &SmibParams,
) -> f64 {
    let w = saturation_variable(state.x3, u3, cfg, params);
    rhs_in_mode(state.x3, u3, mode_of(w, cfg.b), cfg)
}

/// Battery deviation command `P̃_st = sat_b(w)`.
pub fn battery_command(x3: f64, u3: f64, cfg: &ControllerConfig, params: &SmibParams) -> f64 {
    sat(saturation_variable(x3, u3, cfg, params), cfg.b)
}

/// `ŷ3 = g(û3) + sat_b(w)`.
pub fn saturated_output(
    state: &ControllerState,
    u3: f64,
    cfg: &ControllerConfig,
    params: &SmibParams,
) -> f64 {
    nominal_feedback_g(u3, params) + battery_command(state.x3, u3, cfg, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn st(x3: f64) -> ControllerState {
        ControllerState {
            x3,
            mode: Mode::Linear,
        }
    }

    #[test]
    fn sat_examples() {
        assert_eq!(sat(0.5, 0.2), 0.2);
        assert_eq!(sat(-0.5, 0.2), -0.2);
        assert_eq!(sat(0.1, 0.2), 0.1);
        assert_eq!(sat(123.4, f64::INFINITY), 123.4);
        assert_eq!(sat(-3.0, 0.0), 0.0);
    }

    #[test]
    fn nominal_feedback_examples() {
        let p = SmibParams::benchmark();
        assert_eq!(nominal_feedback_g(0.0, &p), 0.0);
        assert!(close(nominal_feedback_g(-p.delta_bar, &p), 0.8, 1e-12));
        assert!(close(
            nominal_feedback_g(PI - 2.0 * p.delta_bar, &p),
            0.0,
            1e-12
        ));
    }

    #[test]
    fn saturation_variable_examples() {
        let p = SmibParams::benchmark();
        let cfg = ControllerConfig::benchmark(0.2);
        assert_eq!(saturation_variable(0.0, 0.0, &cfg, &p), 0.0);
        assert!(close(saturation_variable(0.5, 0.0, &cfg, &p), 0.5, 1e-15));
        let u3 = 0.2 - p.delta_bar;
        assert!(close(
            saturation_variable(0.1, u3, &cfg, &p),
            0.298694,
            1e-6
        ));
    }

    #[test]
    fn phase_lead_examples() {
        let cfg = ControllerConfig::benchmark(f64::INFINITY);
        assert_eq!(phase_lead_rhs(0.0, 0.0, &cfg), 0.0);
        assert!(close(phase_lead_rhs(1.0, 0.0, &cfg), -10.0, 1e-12));
        assert!(close(phase_lead_rhs(0.0, 0.5, &cfg), 5.0, 1e-12));
        assert!(close(phase_lead_output(0.3, 0.5, &cfg), 0.3 - 0.55, 1e-15));
    }

    #[test]
    fn saturated_rhs_examples() {
        let p = SmibParams::benchmark();
        let cfg = ControllerConfig::benchmark(0.2);
        assert_eq!(saturated_rhs(&st(0.0), 0.0, &cfg, &p), 0.0);
        assert!(close(saturated_rhs(&st(1.0), 0.0, &cfg, &p), -1.0, 1e-15));
        assert!(close(saturated_rhs(&st(0.1), 0.0, &cfg, &p), -1.0, 1e-12));
    }

    #[test]
    fn saturated_branch_is_storage_gradient_flow() {
        // −α ∂V3/∂x3 with V3 = x3²/(2K)
        let cfg = ControllerConfig {
            k: 2.5,
            alpha: 0.7,
            ..ControllerConfig::benchmark(0.2)
        };
        let x3 = 1.3;
        let h = 1e-6;
        let v3 = |x: f64| x * x / (2.0 * cfg.k);
        let grad = (v3(x3 + h) - v3(x3 - h)) / (2.0 * h);
        assert!(close(
            rhs_in_mode(x3, 0.4, Mode::Saturated, &cfg),
            -cfg.alpha * grad,
            1e-8
        ));
    }

    #[test]
    fn saturated_output_limits() {
        let p = SmibParams::benchmark();
        let u3 = 0.2 - p.delta_bar;

        let off = ControllerConfig::benchmark(0.0);
        assert_eq!(
            saturated_output(&st(0.7), u3, &off, &p),
            nominal_feedback_g(u3, &p)
        );

        let open = ControllerConfig::benchmark(f64::INFINITY);
        let y = saturated_output(&st(0.7), u3, &open, &p);
        // reduces to the unsaturated output y3 = x3 − L·u3
        assert!(close(y, phase_lead_output(0.7, u3, &open), 1e-12));

        let cfg = ControllerConfig::benchmark(0.2);
        assert!(close(saturated_output(&st(0.5), 0.0, &cfg, &p), 0.2, 1e-15));
    }

    #[test]
    fn zero_bound_is_always_saturated() {
        assert_eq!(mode_of(0.0, 0.0), Mode::Saturated);
        assert_eq!(mode_of(1e9, f64::INFINITY), Mode::Linear);
    }

    #[test]
    fn hysteresis_delays_exit() {
        let cfg = ControllerConfig {
            hysteresis: 0.05,
            ..ControllerConfig::benchmark(0.2)
        };
        assert_eq!(next_mode(0.17, Mode::Saturated, &cfg), Mode::Saturated);
        assert_eq!(next_mode(0.14, Mode::Saturated, &cfg), Mode::Linear);
        assert_eq!(next_mode(0.17, Mode::Linear, &cfg), Mode::Linear);
        assert_eq!(next_mode(0.2, Mode::Linear, &cfg), Mode::Saturated);
        let sharp = ControllerConfig::benchmark(0.2);
        assert_eq!(next_mode(0.17, Mode::Saturated, &sharp), Mode::Linear);
    }

    #[test]
    fn config_validation() {
        assert!(ControllerConfig::benchmark(0.2).validate().is_ok());
        assert!(ControllerConfig::benchmark(f64::INFINITY)
            .validate()
            .is_ok());
        assert!(ControllerConfig::benchmark(-0.1).validate().is_err());
        assert!(ControllerConfig::benchmark(f64::NAN).validate().is_err());
        let bad = ControllerConfig {
            tau: 0.0,
            ..ControllerConfig::benchmark(0.2)
        };
        assert!(bad.validate().is_err());
        assert!(ControllerConfig::benchmark(0.2).is_stabilizing());
        assert!(!ControllerConfig {
            k: 1.2,
            ..ControllerConfig::benchmark(0.2)
        }
        .is_stabilizing());
    }

    proptest! {
        #[test]
        fn battery_command_bounded(x3 in -50.0f64..50.0, u3 in -10.0f64..10.0, b in 0.0f64..3.0) {
            let p = SmibParams::benchmark();
            let cfg = ControllerConfig::benchmark(b);
            let y = saturated_output(&st(x3), u3, &cfg, &p);
            prop_assert!((y - nominal_feedback_g(u3, &p)).abs() <= b + 1e-12);
        }

        #[test]
        fn sat_monotone(a in -10.0f64..10.0, d in 0.0f64..5.0, b in 0.0f64..3.0) {
            prop_assert!(sat(a, b) <= sat(a + d, b));
        }

        #[test]
        fn output_continuous_at_boundary(u3 in -1.5f64..1.5, b in 0.01f64..1.0, sign in prop::bool::ANY) {
            let p = SmibParams::benchmark();
            let cfg = ControllerConfig::benchmark(b);
            let s = if sign { 1.0 } else { -1.0 };
            // x3 placing w exactly on ±b
            let x3 = s * b + cfg.l * u3 + nominal_feedback_g(u3, &p);
            let eps = 1e-9;
            let lo = saturated_output(&st(x3 - eps), u3, &cfg, &p);
            let hi = saturated_output(&st(x3 + eps), u3, &cfg, &p);
            prop_assert!((hi - lo).abs() <= 2.0 * eps + 1e-12);
        }
    }
}
