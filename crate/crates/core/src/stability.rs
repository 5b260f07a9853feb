//! Analytic stability predicates and a simulation oracle.
//!
//! - equal-area margin for a zero-velocity post-fault angle,
//! - the invariant level bound `c_max = Γ(π − 2δ̄)` and membership in
//!   `Ω = {W ≤ c, |δ̃| ≤ π − 2δ̄}`,
//! - definiteness of the quadratic forms certifying the phase-lead loop,
//! - a brute-force classifier that simply simulates the scenario.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::controller::ControllerState;
use crate::error::{invalid, Error, Result};
use crate::model::{FaultScenario, PlantState, SmibParams};
use crate::nni::{gamma, lyapunov_w, lyapunov_w_hat};
use crate::sim::{detect_saturation_exit, simulate, SimulationConfig, Trajectory};

/// Default level as a fraction of `c_max`.
pub const DEFAULT_LEVEL_FRACTION: f64 = 0.99;
/// Absolute eigenvalue slack for semidefiniteness, scaled by the spectral radius.
pub const EIGEN_TOL: f64 = 1e-12;
/// Slack on the angle window before a bounded run is no longer called stable.
pub const ORACLE_ANGLE_MARGIN: f64 = 0.1;
/// A run has converged when `|δ̃|` stays below this over the final window.
pub const CONVERGENCE_TOL: f64 = 0.01;
/// Fraction of the recorded samples forming the final window.
pub const FINAL_WINDOW_FRACTION: f64 = 0.1;

/// Equal-area margin for a rotor released at rest from `delta0`,
/// `Pmax·[(π − δ̄ − δ0)·sin δ̄ − cos δ̄ − cos δ0]`. Negative means stable.
///
/// Equals `Γ(δ0 − δ̄) − c_max`.
pub fn eac_margin(delta0: f64, params: &SmibParams) -> f64 {
    let (s, c) = params.delta_bar.sin_cos();
    params.p_max * ((PI - params.delta_bar - delta0) * s - c - delta0.cos())
}

pub fn eac_stable(delta0: f64, params: &SmibParams) -> bool {
    eac_margin(delta0, params) < 0.0
}

/// Supremum of admissible level values, `Pmax·(2cos δ̄ − (π − 2δ̄)·sin δ̄)`.
pub fn c_max(params: &SmibParams) -> Result<f64> {
    let db = params.delta_bar;
    if !(db > 0.0 && db < FRAC_PI_2) {
        return Err(invalid(
            "delta_bar",
            format!("must lie in (0, pi/2), got {db}"),
        ));
    }
    Ok(params.p_max * (2.0 * db.cos() - (PI - 2.0 * db) * db.sin()))
}

pub fn default_level(params: &SmibParams) -> Result<f64> {
    Ok(DEFAULT_LEVEL_FRACTION * c_max(params)?)
}

/// Membership in `Ω = {W(x1) ≤ c and |δ̃| ≤ π − 2δ̄}` for `0 < c < c_max`.
pub fn in_invariant_set(state: &PlantState, c: f64, params: &SmibParams) -> Result<bool> {
    let c_max = c_max(params)?;
    if !(c > 0.0 && c < c_max) {
        return Err(Error::LevelOutOfRange { c, c_max });
    }
    Ok(lyapunov_w(state, params) <= c && state.delta_tilde.abs() <= params.angle_window())
}

/// Domain on which `W` is positive: `cos δ̄ > cos(δ̃ + δ̄) + δ̃·sin δ̄`, plus
/// the origin.
pub fn in_lyapunov_domain(state: &PlantState, params: &SmibParams) -> bool {
    let (s, c) = params.delta_bar.sin_cos();
    let d = state.delta_tilde;
    d == 0.0 || c > (d + params.delta_bar).cos() + d * s
}

pub fn q1_matrix(cfg: &ControllerConfig, params: &SmibParams) -> Matrix3<f64> {
    Matrix3::new(
        params.m,
        0.0,
        0.0, //
        0.0,
        cfg.l,
        -1.0, //
        0.0,
        -1.0,
        1.0 / cfg.k,
    )
}

pub fn q2_matrix(cfg: &ControllerConfig, params: &SmibParams) -> Matrix3<f64> {
    let t = cfg.tau;
    Matrix3::new(
        -params.d,
        0.0,
        0.0, //
        0.0,
        -cfg.k / t,
        1.0 / t, //
        0.0,
        1.0 / t,
        -1.0 / (t * cfg.k),
    )
}

/// Sylvester's criterion: every leading principal minor strictly positive.
pub fn is_positive_definite(q: &Matrix3<f64>) -> bool {
    let m1 = q[(0, 0)];
    let m2 = q[(0, 0)] * q[(1, 1)] - q[(0, 1)] * q[(1, 0)];
    let m3 = q.determinant();
    m1 > 0.0 && m2 > 0.0 && m3 > 0.0
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(q: &Matrix3<f64>) -> [f64; 3] {
    let eig = SymmetricEigen::new(*q);
    let mut ev = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// All eigenvalues `≤ EIGEN_TOL·max(1, ρ(Q))`.
pub fn is_negative_semidefinite(q: &Matrix3<f64>) -> bool {
    let ev = symmetric_eigenvalues(q);
    let radius = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ev[2] <= EIGEN_TOL * radius.max(1.0)
}

/// Smallest-magnitude eigenvalue.
pub fn smallest_eigenvalue_magnitude(q: &Matrix3<f64>) -> f64 {
    symmetric_eigenvalues(q)
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Unstable,
    Undecided,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Undecided => "undecided",
        }
    }
}

fn window_peak(samples: &[f64]) -> f64 {
    samples.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Largest `|δ̃|` over the final window of the run.
pub fn final_window_peak(traj: &Trajectory) -> f64 {
    let d = traj.delta_tilde();
    let n = ((d.len() as f64 * FINAL_WINDOW_FRACTION).ceil() as usize).clamp(1, d.len().max(1));
    window_peak(&d[d.len() - n..])
}

pub fn converged(traj: &Trajectory) -> bool {
    !traj.is_empty() && !traj.diverged() && final_window_peak(traj) < CONVERGENCE_TOL
}

/// Reads a verdict off a finished run.
///
/// Unstable once `|δ̃|` exceeds π. Stable when the run stays within the
/// angle window (plus [`ORACLE_ANGLE_MARGIN`]) and, if damping or an active
/// controller should make it decay, it has either converged or halved its
/// peak deviation between the first and final windows. Anything else is
/// undecided.
pub fn classify_trajectory(traj: &Trajectory) -> Verdict {
    if traj.is_empty() {
        return Verdict::Undecided;
    }
    let d = traj.delta_tilde();
    let peak = window_peak(&d);
    if traj.diverged() || peak > PI {
        return Verdict::Unstable;
    }
    let params = &traj.setup.params;
    if peak > params.angle_window() + ORACLE_ANGLE_MARGIN {
        return Verdict::Undecided;
    }
    let decays = params.d > 0.0 || traj.setup.controller.is_some_and(|c| c.b > 0.0);
    if !decays || converged(traj) {
        return Verdict::Stable;
    }
    let n = ((d.len() as f64 * FINAL_WINDOW_FRACTION).ceil() as usize).clamp(1, d.len());
    if window_peak(&d[d.len() - n..]) <= 0.5 * window_peak(&d[..n]) {
        Verdict::Stable
    } else {
        Verdict::Undecided
    }
}

pub fn classify_by_simulation(
    scenario: &FaultScenario,
    cfg: Option<&ControllerConfig>,
    params: &SmibParams,
    sim: &SimulationConfig,
) -> Result<Verdict> {
    Ok(classify_trajectory(&simulate(scenario, cfg, params, sim)?))
}

/// Analytic predicates next to the empirical outcome of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Equal-area margin of the initial angle; negative means stable.
    pub eac_margin: f64,
    pub c_max: f64,
    /// Level used for the membership test.
    pub level: f64,
    /// Initial plant state lies in `Ω` at `level`.
    pub in_omega: bool,
    /// Initial certificate value (`W` or `Ŵ`).
    pub initial_certificate: f64,
    pub q1_positive_definite: Option<bool>,
    pub q2_negative_semidefinite: Option<bool>,
    pub verdict: Verdict,
    pub empirical_stable: bool,
    pub empirical_converged: bool,
    pub saturation_exit: Option<f64>,
    pub diverged_at: Option<f64>,
    pub final_window_peak: f64,
}

pub fn stability_report(traj: &Trajectory) -> Result<StabilityReport> {
    let setup = &traj.setup;
    let params = &setup.params;
    let c_max = c_max(params)?;
    let level = DEFAULT_LEVEL_FRACTION * c_max;
    let x0 = setup.scenario.initial_state(params);
    let initial_certificate = match &setup.controller {
        None => lyapunov_w(&x0, params),
        Some(cfg) => lyapunov_w_hat(&x0, &ControllerState::default(), cfg, params),
    };
    let verdict = classify_trajectory(traj);
    Ok(StabilityReport {
        eac_margin: eac_margin(setup.scenario.delta0, params),
        c_max,
        level,
        in_omega: in_invariant_set(&x0, level, params)?,
        initial_certificate,
        q1_positive_definite: setup
            .controller
            .map(|c| is_positive_definite(&q1_matrix(&c, params))),
        q2_negative_semidefinite: setup
            .controller
            .map(|c| is_negative_semidefinite(&q2_matrix(&c, params))),
        verdict,
        empirical_stable: verdict == Verdict::Stable,
        empirical_converged: converged(traj),
        saturation_exit: setup
            .controller
            .filter(|c| c.b.is_finite())
            .and_then(|c| detect_saturation_exit(traj, c.b)),
        diverged_at: traj.diverged_at,
        final_window_peak: final_window_peak(traj),
    })
}

/// Smallest `Ŵ` over a uniform grid of the box
/// `|δ̇̃| ≤ rate, |δ̃| ≤ angle, |x̂3| ≤ state`, origin excluded. Positive
/// means the certificate is positive definite on the sampled box.
pub fn w_hat_grid_minimum(
    cfg: &ControllerConfig,
    params: &SmibParams,
    rate: f64,
    angle: f64,
    state: f64,
    points_per_axis: usize,
) -> f64 {
    let n = points_per_axis.max(2);
    let axis = |half: f64, i: usize| -half + 2.0 * half * i as f64 / (n - 1) as f64;
    let mut min = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let s = PlantState::new(axis(rate, i), axis(angle, j));
                let x3 = axis(state, k);
                if s == PlantState::ORIGIN && x3 == 0.0 {
                    continue;
                }
                let c = ControllerState {
                    x3,
                    ..Default::default()
                };
                min = min.min(lyapunov_w_hat(&s, &c, cfg, params));
            }
        }
    }
    min
}

/// `Γ(δ̃0) − c_max`, the same quantity as [`eac_margin`] written through the
/// potential energy.
pub fn level_margin(delta_tilde0: f64, params: &SmibParams) -> Result<f64> {
    Ok(gamma(delta_tilde0, params) - c_max(params)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn eac_examples() {
        let p = SmibParams::benchmark();
        assert!(close(eac_margin(p.delta_bar, &p), -0.170398, 1e-6));
        assert!(close(eac_margin(0.2, &p), 0.031371, 1e-6));
        assert!(close(eac_margin(0.4, &p), -0.069623, 1e-6));
        assert!(!eac_stable(0.2, &p));
        assert!(eac_stable(0.4, &p));
    }

    #[test]
    fn eac_margin_is_potential_gap() {
        let p = SmibParams::benchmark();
        for d0 in [0.1, 0.3, 0.9, 1.7, 2.1] {
            let via_gamma = level_margin(d0 - p.delta_bar, &p).unwrap();
            assert!(close(eac_margin(d0, &p), via_gamma, 1e-12));
        }
    }

    #[test]
    fn c_max_examples() {
        let p = SmibParams::benchmark();
        assert!(close(c_max(&p).unwrap(), 0.170398, 1e-6));
        let near_peak = SmibParams {
            delta_bar: FRAC_PI_2 - 1e-9,
            ..p
        };
        assert!(c_max(&near_peak).unwrap().abs() < 1e-8);
        let near_zero = SmibParams {
            delta_bar: 1e-9,
            p_max: 2.0,
            ..p
        };
        assert!(close(c_max(&near_zero).unwrap(), 4.0, 1e-7));
        assert!(c_max(&SmibParams {
            delta_bar: 0.0,
            ..p
        })
        .is_err());
        assert!(c_max(&SmibParams {
            delta_bar: FRAC_PI_2,
            ..p
        })
        .is_err());
    }

    #[test]
    fn invariant_set_examples() {
        let p = SmibParams::benchmark();
        assert!(in_invariant_set(&PlantState::ORIGIN, 0.05, &p).unwrap());
        let fault = PlantState::new(0.0, 0.2 - p.delta_bar);
        assert!(!in_invariant_set(&fault, 0.17, &p).unwrap());
        let inside = PlantState::new(0.0, 0.3);
        assert!(close(lyapunov_w(&inside, &p), 0.023214, 1e-6));
        assert!(in_invariant_set(&inside, 0.17, &p).unwrap());
        assert!(matches!(
            in_invariant_set(&inside, 0.2, &p),
            Err(Error::LevelOutOfRange { .. })
        ));
        assert!(in_invariant_set(&inside, 0.0, &p).is_err());
    }

    #[test]
    fn q1_examples() {
        let p = SmibParams::benchmark();
        let cfg = ControllerConfig::benchmark(0.2);
        assert!(is_positive_definite(&q1_matrix(&cfg, &p)));
        let hot = ControllerConfig { k: 1.2, ..cfg };
        assert!(!is_positive_definite(&q1_matrix(&hot, &p)));
        let edge = ControllerConfig { k: 1.1, ..cfg };
        assert!(!is_positive_definite(&q1_matrix(&edge, &p)));
    }

    #[test]
    fn q2_examples() {
        let p = SmibParams::benchmark();
        let cfg = ControllerConfig::benchmark(0.2);
        let q = q2_matrix(&cfg, &p);
        assert!(is_negative_semidefinite(&q));
        assert!(smallest_eigenvalue_magnitude(&q) < 1e-10);

        let damped = p.with_damping(1.0);
        let unit = ControllerConfig { tau: 1.0, ..cfg };
        let ev = symmetric_eigenvalues(&q2_matrix(&unit, &damped));
        for (got, want) in ev.iter().zip([-2.0, -1.0, 0.0]) {
            assert!(close(*got, want, 1e-12), "{ev:?}");
        }

        let stiff = ControllerConfig { k: 4.0, ..cfg };
        assert!(is_negative_semidefinite(&q2_matrix(&stiff, &p)));
    }

    #[test]
    fn invariant_set_agrees_with_equal_area() {
        let p = SmibParams::benchmark();
        let level = c_max(&p).unwrap() * (1.0 - 1e-12);
        let lo = 2.0 * p.delta_bar - PI + 0.01;
        let hi = PI - p.delta_bar - 0.01;
        let n = 2000;
        for i in 0..=n {
            let d0 = lo + (hi - lo) * i as f64 / n as f64;
            let margin = eac_margin(d0, &p);
            if margin.abs() < 1e-9 {
                continue;
            }
            let inside =
                in_invariant_set(&PlantState::new(0.0, d0 - p.delta_bar), level, &p).unwrap();
            assert_eq!(inside, margin < 0.0, "δ0 = {d0}, margin = {margin}");
        }
    }

    proptest::proptest! {
        #[test]
        fn q2_always_semidefinite(tau in 1e-3f64..10.0, k in 1e-2f64..10.0, d in 0.0f64..10.0) {
            let p = SmibParams::benchmark().with_damping(d);
            let cfg = ControllerConfig { tau, k, ..ControllerConfig::benchmark(0.2) };
            let q = q2_matrix(&cfg, &p);
            proptest::prop_assert!(is_negative_semidefinite(&q));
            // the 2×2 block is singular
            let block = q[(1, 1)] * q[(2, 2)] - q[(1, 2)] * q[(2, 1)];
            proptest::prop_assert!(block.abs() <= 1e-9 * (q[(1, 1)] * q[(2, 2)]).abs());
        }
    }

    #[test]
    fn lyapunov_domain() {
        let p = SmibParams::benchmark();
        assert!(in_lyapunov_domain(&PlantState::ORIGIN, &p));
        assert!(in_lyapunov_domain(&PlantState::new(0.0, 0.5), &p));
        assert!(in_lyapunov_domain(&PlantState::new(0.0, -0.5), &p));
        assert!(!in_lyapunov_domain(&PlantState::new(0.0, 3.0), &p));
    }

    #[test]
    fn classify_examples() {
        let p = SmibParams::benchmark();
        let sim = SimulationConfig::default();
        let eq = FaultScenario::new(p.delta_bar);
        assert_eq!(
            classify_by_simulation(&eq, None, &p, &sim).unwrap(),
            Verdict::Stable
        );
        let fault = FaultScenario::new(0.2);
        assert_eq!(
            classify_by_simulation(&fault, None, &p, &sim).unwrap(),
            Verdict::Unstable
        );
        let cfg = ControllerConfig::benchmark(0.2);
        assert_eq!(
            classify_by_simulation(&fault, Some(&cfg), &p, &sim).unwrap(),
            Verdict::Stable
        );
    }
}
