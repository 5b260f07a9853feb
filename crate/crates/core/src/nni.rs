//! Storage functions, composite Lyapunov functions and a numerical check of
//! the negative-imaginary dissipation inequality `V̇ ≤ ∫₀^u ∂h/∂x·ẋ dξ`.
//!
//! Plant storage `V1 = (M/2)·δ̇̃²`, controller storage `V3 = x3²/(2K)` and
//! the static nonlinearity carries zero storage. The interconnection
//! certificates subtract the path integral of the feedback output along the
//! plant output `h1(x1) = δ̃`; every such integral has a closed form here.

use serde::{Deserialize, Serialize};

use crate::controller::{
    phase_lead_rhs, saturation_variable, ControllerConfig, ControllerState, Mode,
};
use crate::error::{Error, Result};
use crate::model::{restoring_power, PlantState, SmibParams};
use crate::sim::Trajectory;
use crate::stability::q1_matrix;

/// Default tolerance on `V̇ − supply` (per-unit/s).
pub const DISSIPATION_TOL: f64 = 1e-4;

pub fn storage_v1(state: &PlantState, params: &SmibParams) -> f64 {
    0.5 * params.m * state.delta_tilde_dot * state.delta_tilde_dot
}

/// Storage of the memoryless nonlinearity: identically zero.
pub fn storage_v2() -> f64 {
    0.0
}

pub fn storage_v3(x3: f64, k: f64) -> f64 {
    x3 * x3 / (2.0 * k)
}

/// Potential energy `Γ(δ̃) = −Pmax·δ̃·sin δ̄ + Pmax·cos δ̄ − Pmax·cos(δ̃ + δ̄)`.
pub fn gamma(delta_tilde: f64, params: &SmibParams) -> f64 {
    let (s, c) = params.delta_bar.sin_cos();
    params.p_max * (-delta_tilde * s + c - (delta_tilde + params.delta_bar).cos())
}

/// `∫₀^δ̃ g(ξ) dξ`, which equals `−Γ(δ̃)`.
pub fn integral_g(delta_tilde: f64, params: &SmibParams) -> f64 {
    let (s, c) = params.delta_bar.sin_cos();
    params.p_max * (delta_tilde * s + (delta_tilde + params.delta_bar).cos() - c)
}

/// Uncontrolled certificate `W = V1 + V2 + Γ(δ̃)`.
pub fn lyapunov_w(state: &PlantState, params: &SmibParams) -> f64 {
    storage_v1(state, params) + storage_v2() + gamma(state.delta_tilde, params)
}

/// Which piece of the saturated output the path integral follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FBranch {
    /// `w ≤ −b`
    Lower,
    /// `|w| < b`
    Interior,
    /// `w ≥ b`
    Upper,
}

pub fn branch_of(w: f64, b: f64) -> FBranch {
    if w <= -b {
        FBranch::Lower
    } else if w >= b {
        FBranch::Upper
    } else {
        FBranch::Interior
    }
}

/// Closed form of one branch of `F` at output `δ̃`.
pub fn f_branch(
    delta_tilde: f64,
    x3: f64,
    branch: FBranch,
    cfg: &ControllerConfig,
    params: &SmibParams,
) -> f64 {
    match branch {
        FBranch::Lower => integral_g(delta_tilde, params) - cfg.b * delta_tilde,
        FBranch::Interior => x3 * delta_tilde - 0.5 * cfg.l * delta_tilde * delta_tilde,
        FBranch::Upper => integral_g(delta_tilde, params) + cfg.b * delta_tilde,
    }
}

/// `F`, with the branch picked by the current saturation variable.
pub fn f_integral(state: &PlantState, x3: f64, cfg: &ControllerConfig, params: &SmibParams) -> f64 {
    let w = saturation_variable(x3, state.delta_tilde, cfg, params);
    f_branch(state.delta_tilde, x3, branch_of(w, cfg.b), cfg, params)
}

/// Composite Simpson rule.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    acc * h / 3.0
}

pub const QUADRATURE_PANELS: usize = 64;

/// Same as [`f_branch`] but integrating the branch integrand numerically.
pub fn f_branch_quadrature(
    delta_tilde: f64,
    x3: f64,
    branch: FBranch,
    cfg: &ControllerConfig,
    params: &SmibParams,
) -> f64 {
    let integrand = |xi: f64| match branch {
        FBranch::Lower => restoring_power(xi, params) - cfg.b,
        FBranch::Interior => x3 - cfg.l * xi,
        FBranch::Upper => restoring_power(xi, params) + cfg.b,
    };
    simpson(integrand, 0.0, delta_tilde, QUADRATURE_PANELS)
}

/// `Γ` by quadrature of `−g`.
pub fn gamma_quadrature(delta_tilde: f64, params: &SmibParams) -> f64 {
    -simpson(
        |xi| restoring_power(xi, params),
        0.0,
        delta_tilde,
        QUADRATURE_PANELS,
    )
}

/// Saturated-loop certificate `Ŵ = V1 + V3 − F`.
pub fn lyapunov_w_hat(
    state: &PlantState,
    ctrl: &ControllerState,
    cfg: &ControllerConfig,
    params: &SmibParams,
) -> f64 {
    storage_v1(state, params) + storage_v3(ctrl.x3, cfg.k) - f_integral(state, ctrl.x3, cfg, params)
}

/// Quadratic certificate of the unsaturated loop, `½·zᵀ·Q1·z` with
/// `z = (δ̇̃, δ̃, x3)`.
pub fn lyapunov_w_lead(
    state: &PlantState,
    x3: f64,
    cfg: &ControllerConfig,
    params: &SmibParams,
) -> f64 {
    let z = nalgebra::Vector3::new(state.delta_tilde_dot, state.delta_tilde, x3);
    0.5 * z.dot(&(q1_matrix(cfg, params) * z))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSample {
    pub t: f64,
    pub value: f64,
    pub derivative_estimate: f64,
}

/// Derivative estimate on a (possibly non-uniform) grid: central differences
/// inside, second-order one-sided differences at both ends.
pub fn finite_difference(times: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    if values.len() != times.len() {
        return Err(Error::LengthMismatch {
            expected: times.len(),
            got: values.len(),
        });
    }
    let n = times.len();
    if n < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: n });
    }
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (values[i + 1] - values[i - 1]) / (times[i + 1] - times[i - 1]);
    }
    let h = times[1] - times[0];
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
    let h = times[n - 1] - times[n - 2];
    out[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h);
    Ok(out)
}

/// The certificate matching the run: `W` without a controller, `Ŵ` with one.
pub fn certificate_value(traj: &Trajectory, index: usize) -> f64 {
    let s = &traj.samples[index];
    match &traj.setup.controller {
        None => lyapunov_w(&s.plant, &traj.setup.params),
        Some(cfg) => lyapunov_w_hat(&s.plant, &s.controller, cfg, &traj.setup.params),
    }
}

pub fn certificate_series(traj: &Trajectory) -> Result<Vec<LyapunovSample>> {
    let values: Vec<f64> = (0..traj.len())
        .map(|i| certificate_value(traj, i))
        .collect();
    let times = traj.times();
    let deriv = finite_difference(&times, &values)?;
    Ok(times
        .into_iter()
        .zip(values)
        .zip(deriv)
        .map(|((t, value), derivative_estimate)| LyapunovSample {
            t,
            value,
            derivative_estimate,
        })
        .collect())
}

pub fn v1_series(traj: &Trajectory) -> Vec<f64> {
    traj.samples
        .iter()
        .map(|s| storage_v1(&s.plant, &traj.setup.params))
        .collect()
}

/// Controller storage; zero for uncontrolled runs.
pub fn v3_series(traj: &Trajectory) -> Vec<f64> {
    let k = traj.setup.controller.map_or(1.0, |c| c.k);
    traj.samples
        .iter()
        .map(|s| storage_v3(s.controller.x3, k))
        .collect()
}

/// Plant supply `u1·ẏ1` with `u1 = g(δ̃) + P̃_st` and `ẏ1 = δ̇̃`.
pub fn plant_supply(traj: &Trajectory) -> Vec<f64> {
    let p = &traj.setup.params;
    traj.samples
        .iter()
        .map(|s| (restoring_power(s.plant.delta_tilde, p) + s.p_battery) * s.plant.delta_tilde_dot)
        .collect()
}

/// Controller supply `∫₀^û3 ∂ĥ3/∂x̂3·ẋ̂3 dξ`: `û3·ẋ̂3` in linear mode, zero
/// while saturated.
pub fn controller_supply(traj: &Trajectory) -> Vec<f64> {
    let Some(cfg) = traj.setup.controller else {
        return vec![0.0; traj.len()];
    };
    traj.samples
        .iter()
        .map(|s| match s.controller.mode {
            Mode::Linear => {
                s.plant.delta_tilde * phase_lead_rhs(s.controller.x3, s.plant.delta_tilde, &cfg)
            }
            Mode::Saturated => 0.0,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    /// Worst `V̇ − supply` over the compared samples.
    pub max_violation: f64,
    /// Times where the violation exceeded the tolerance.
    pub violation_times: Vec<f64>,
    pub passed: bool,
    /// Number of samples compared.
    pub checked: usize,
}

/// Compares `V̇` against `supply` on the interior of a time grid (central
/// differences only), skipping masked samples.
pub fn check_dissipation_on_grid(
    times: &[f64],
    storage: &[f64],
    supply: &[f64],
    tol: f64,
    excluded: &[bool],
) -> Result<DissipationReport> {
    for len in [storage.len(), supply.len(), excluded.len()] {
        if len != times.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                got: len,
            });
        }
    }
    let deriv = finite_difference(times, storage)?;
    let mut max_violation = f64::NEG_INFINITY;
    let mut violation_times = Vec::new();
    let mut checked = 0;
    for i in 1..times.len() - 1 {
        if excluded[i] {
            continue;
        }
        checked += 1;
        let v = deriv[i] - supply[i];
        if v > max_violation {
            max_violation = v;
        }
        if v > tol {
            violation_times.push(times[i]);
        }
    }
    if checked == 0 {
        max_violation = 0.0;
    }
    Ok(DissipationReport {
        passed: max_violation <= tol,
        max_violation,
        violation_times,
        checked,
    })
}

/// Mask that drops one sample either side of every mode switch, plus the
/// endpoint of a run cut short by divergence.
pub fn switch_exclusion_mask(traj: &Trajectory) -> Vec<bool> {
    let n = traj.len();
    let mut mask = vec![false; n];
    for i in traj.mode_switches() {
        mask[i.saturating_sub(1)..=(i + 1).min(n - 1)].fill(true);
    }
    if traj.diverged() && n > 0 {
        mask[n - 1] = true;
    }
    mask
}

/// Dissipation check along a recorded trajectory, with the samples around
/// controller mode switches excluded.
pub fn check_dissipation(
    traj: &Trajectory,
    storage: &[f64],
    supply: &[f64],
    tol: f64,
) -> Result<DissipationReport> {
    check_dissipation_on_grid(
        &traj.times(),
        storage,
        supply,
        tol,
        &switch_exclusion_mask(traj),
    )
}

/// Non-increase of the run's certificate: `dW/dt ≤ tol`.
pub fn check_certificate_decrease(traj: &Trajectory, tol: f64) -> Result<DissipationReport> {
    let values: Vec<f64> = (0..traj.len())
        .map(|i| certificate_value(traj, i))
        .collect();
    let zero = vec![0.0; traj.len()];
    check_dissipation(traj, &values, &zero, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    proptest::proptest! {
        #[test]
        fn w_positive_on_domain(rate in -20.0f64..20.0, angle in -3.0f64..3.0) {
            let p = SmibParams::benchmark();
            let s = PlantState::new(rate, angle);
            proptest::prop_assume!(s != PlantState::ORIGIN);
            proptest::prop_assume!(crate::stability::in_lyapunov_domain(&s, &p));
            proptest::prop_assert!(lyapunov_w(&s, &p) > 0.0);
        }
    }

    fn fault_state(p: &SmibParams) -> PlantState {
        PlantState::new(0.0, 0.2 - p.delta_bar)
    }

    #[test]
    fn storage_examples() {
        let p = SmibParams::benchmark();
        assert_eq!(storage_v1(&PlantState::new(0.0, 3.0), &p), 0.0);
        assert!(close(
            storage_v1(&PlantState::new(1.0, 0.0), &p),
            0.0127324,
            1e-7
        ));
        let unit = SmibParams { m: 1.0, ..p };
        assert!(close(
            storage_v1(&PlantState::new(2.0, 5.0), &unit),
            2.0,
            1e-15
        ));
        assert_eq!(storage_v3(0.0, 1.0), 0.0);
        assert_eq!(storage_v3(1.0, 1.0), 0.5);
        assert_eq!(storage_v3(2.0, 4.0), 0.5);
        assert_eq!(storage_v2(), 0.0);
    }

    #[test]
    fn gamma_examples() {
        let p = SmibParams::benchmark();
        assert_eq!(gamma(0.0, &p), 0.0);
        assert!(close(gamma(PI - 2.0 * p.delta_bar, &p), 0.170398, 1e-6));
        assert!(close(gamma(0.2 - p.delta_bar, &p), 0.201769, 1e-6));
        for d in [-1.2, -0.3, 0.4, 1.1] {
            assert!(close(gamma(d, &p), gamma_quadrature(d, &p), 1e-9));
            assert!(close(integral_g(d, &p), -gamma(d, &p), 1e-15));
        }
    }

    #[test]
    fn lyapunov_w_examples() {
        let p = SmibParams::benchmark();
        assert_eq!(lyapunov_w(&PlantState::ORIGIN, &p), 0.0);
        assert!(close(lyapunov_w(&fault_state(&p), &p), 0.201769, 1e-6));
        assert!(close(
            lyapunov_w(&PlantState::new(1.0, 0.0), &p),
            0.0127324,
            1e-7
        ));
    }

    #[test]
    fn f_integral_examples() {
        let p = SmibParams::benchmark();
        let cfg = ControllerConfig::benchmark(0.2);
        for br in [FBranch::Lower, FBranch::Interior, FBranch::Upper] {
            assert_eq!(f_branch(0.0, 0.3, br, &cfg, &p), 0.0);
        }
        assert!(close(
            f_branch(0.5, 0.2, FBranch::Interior, &cfg, &p),
            -0.0375,
            1e-15
        ));
        let s = fault_state(&p);
        assert!(close(
            f_branch(s.delta_tilde, 0.0, FBranch::Upper, &cfg, &p),
            -0.347228,
            1e-6
        ));
        // with x3 = 0 the fault state sits just inside the band: w = 0.198694 < 0.2
        let w = saturation_variable(0.0, s.delta_tilde, &cfg, &p);
        assert!(close(w, 0.198694, 1e-6));
        assert_eq!(
            f_integral(&s, 0.0, &cfg, &p),
            f_branch(s.delta_tilde, 0.0, FBranch::Interior, &cfg, &p)
        );
        let x3 = 0.1;
        assert!(saturation_variable(x3, s.delta_tilde, &cfg, &p) >= cfg.b);
        assert_eq!(
            f_integral(&s, x3, &cfg, &p),
            f_branch(s.delta_tilde, x3, FBranch::Upper, &cfg, &p)
        );
    }

    #[test]
    fn f_closed_forms_match_quadrature() {
        let p = SmibParams::benchmark();
        let cfg = ControllerConfig::benchmark(0.3);
        for &d in &[-1.1, -0.4, 0.25, 0.9] {
            for br in [FBranch::Lower, FBranch::Interior, FBranch::Upper] {
                let a = f_branch(d, 0.37, br, &cfg, &p);
                let q = f_branch_quadrature(d, 0.37, br, &cfg, &p);
                assert!(close(a, q, 1e-9), "{br:?} at {d}: {a} vs {q}");
            }
        }
    }

    #[test]
    fn w_hat_examples() {
        let p = SmibParams::benchmark();
        let zero = ControllerState::default();
        let cfg = ControllerConfig::benchmark(0.2);
        assert_eq!(lyapunov_w_hat(&PlantState::ORIGIN, &zero, &cfg, &p), 0.0);

        let s = fault_state(&p);
        let open = ControllerConfig::benchmark(f64::INFINITY);
        // L·δ̃²/2 with δ̃ = 0.2 − asin(0.8)
        assert!(close(lyapunov_w_hat(&s, &zero, &open, &p), 0.290927, 1e-6));
        // w = 0.198694 < b keeps the interior branch
        assert!(close(lyapunov_w_hat(&s, &zero, &cfg, &p), 0.290927, 1e-6));
        // a tighter bound puts the same state on the upper branch
        let tight = ControllerConfig::benchmark(0.15);
        let upper = -f_branch(s.delta_tilde, 0.0, FBranch::Upper, &tight, &p);
        assert!(close(lyapunov_w_hat(&s, &zero, &tight, &p), upper, 1e-15));
        assert!(close(upper, 0.201769 + 0.15 * 0.727295, 1e-6));
    }

    #[test]
    fn w_lead_examples() {
        let p = SmibParams::benchmark();
        let cfg = ControllerConfig::benchmark(f64::INFINITY);
        assert_eq!(lyapunov_w_lead(&PlantState::ORIGIN, 0.0, &cfg, &p), 0.0);
        assert!(close(
            lyapunov_w_lead(&PlantState::new(0.0, 1.0), 1.0, &cfg, &p),
            0.05,
            1e-12
        ));
        assert!(close(
            lyapunov_w_lead(&PlantState::new(1.0, 0.0), 0.0, &cfg, &p),
            0.0127324,
            1e-7
        ));
    }

    #[test]
    fn finite_difference_is_exact_on_quadratics() {
        let t: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|x| 3.0 * x * x - x + 2.0).collect();
        let d = finite_difference(&t, &v).unwrap();
        for (x, dv) in t.iter().zip(d) {
            assert!(close(dv, 6.0 * x - 1.0, 1e-10));
        }
        assert!(finite_difference(&t[..2], &v[..2]).is_err());
        assert!(finite_difference(&t, &v[..5]).is_err());
    }

    #[test]
    fn dissipation_checker_examples() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let mask = vec![false; t.len()];
        let flat = vec![2.0; t.len()];
        let zero = vec![0.0; t.len()];
        let r = check_dissipation_on_grid(&t, &flat, &zero, 1e-4, &mask).unwrap();
        assert!(r.passed);
        assert_eq!(r.max_violation, 0.0);

        let r = check_dissipation_on_grid(&t, &t, &zero, 1e-4, &mask).unwrap();
        assert!(!r.passed);
        assert!(close(r.max_violation, 1.0, 1e-9));
        assert_eq!(r.violation_times.len(), t.len() - 2);

        assert!(matches!(
            check_dissipation_on_grid(&t, &flat[..10], &zero, 1e-4, &mask),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            check_dissipation_on_grid(&t[..2], &flat[..2], &zero[..2], 1e-4, &mask[..2]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn w_hat_unbounded_equals_quadratic_form() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let p = SmibParams::benchmark();
        for _ in 0..1000 {
            let cfg = ControllerConfig {
                tau: rng.gen_range(0.01..2.0),
                k: rng.gen_range(0.1..3.0),
                l: rng.gen_range(0.1..3.0),
                ..ControllerConfig::benchmark(f64::INFINITY)
            };
            let s = PlantState::new(rng.gen_range(-10.0..10.0), rng.gen_range(-3.0..3.0));
            let c = ControllerState {
                x3: rng.gen_range(-5.0..5.0),
                mode: Mode::Linear,
            };
            let a = lyapunov_w_hat(&s, &c, &cfg, &p);
            let b = lyapunov_w_lead(&s, c.x3, &cfg, &p);
            assert!(close(a, b, 1e-12 * (1.0 + a.abs())), "{a} vs {b}");
        }
    }

    /// The branch formulas of F meet at |w| = b only up to
    /// J(δ̃) = L·δ̃²/2 + δ̃·g(δ̃) + Γ(δ̃), which is second order in δ̃ with
    /// coefficient (L − Pmax·cos δ̄)/2. Ŵ therefore jumps when the mode
    /// switches away from the origin.
    #[test]
    fn branch_gap_at_saturation_boundary() {
        let p = SmibParams::benchmark();
        let cfg = ControllerConfig::benchmark(0.2);
        let jump = |d: f64| 0.5 * cfg.l * d * d + d * restoring_power(d, &p) + gamma(d, &p);
        for &d in &[-1.0, -0.5, -0.1, 0.0, 0.1, 0.5, 1.0] {
            for sign in [1.0, -1.0] {
                let x3 = cfg.l * d + restoring_power(d, &p) + sign * cfg.b;
                let outer = if sign > 0.0 {
                    FBranch::Upper
                } else {
                    FBranch::Lower
                };
                let gap =
                    f_branch(d, x3, FBranch::Interior, &cfg, &p) - f_branch(d, x3, outer, &cfg, &p);
                assert!(close(gap, jump(d), 1e-12), "δ̃ = {d}: {gap} vs {}", jump(d));
            }
        }
        assert_eq!(jump(0.0), 0.0);
        let d = 1e-3;
        let quad = 0.5 * (cfg.l - p.p_max * p.delta_bar.cos());
        assert!(close(jump(d) / (d * d), quad, 1e-3));
        assert!(jump(0.5).abs() > 1e-3);
    }

    #[test]
    fn branch_selection() {
        assert_eq!(branch_of(-0.3, 0.2), FBranch::Lower);
        assert_eq!(branch_of(-0.2, 0.2), FBranch::Lower);
        assert_eq!(branch_of(0.1, 0.2), FBranch::Interior);
        assert_eq!(branch_of(0.2, 0.2), FBranch::Upper);
        assert_eq!(branch_of(1e300, f64::INFINITY), FBranch::Interior);
    }
}
