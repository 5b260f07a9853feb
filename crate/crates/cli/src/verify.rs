//! Numerical checks behind `smib verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use smib_core::nni::{
    check_certificate_decrease, check_dissipation, controller_supply, lyapunov_w, plant_supply,
    v1_series, v3_series, DISSIPATION_TOL,
};
use smib_core::stability::{
    c_max, in_invariant_set, is_negative_semidefinite, is_positive_definite, q1_matrix, q2_matrix,
    symmetric_eigenvalues, w_hat_grid_minimum, DEFAULT_LEVEL_FRACTION,
};
use smib_core::{simulate, FaultScenario, PlantState, Trajectory};

use crate::config::Resolved;
use crate::error::CliResult;

pub const CONSERVATION_TOL: f64 = 1e-6;
pub const CONTAINMENT_SAMPLES: usize = 64;
pub const CONTAINMENT_SEED: u64 = 0x5eed;
const GRID_POINTS: usize = 21;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub property: String,
    /// `None` when the property does not apply to this scenario.
    pub passed: Option<bool>,
    pub detail: String,
}

impl Check {
    fn new(property: &str, passed: bool, detail: String) -> Self {
        Self {
            property: property.to_string(),
            passed: Some(passed),
            detail,
        }
    }

    fn skipped(property: &str, why: &str) -> Self {
        Self {
            property: property.to_string(),
            passed: None,
            detail: why.to_string(),
        }
    }

    pub fn failed(&self) -> bool {
        self.passed == Some(false)
    }
}

fn peak_abs(v: &[f64]) -> f64 {
    v.iter()
        .filter(|x| x.is_finite())
        .fold(0.0, |m, x| m.max(x.abs()))
}

pub fn run_checks(r: &Resolved, traj: &Trajectory) -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    let p = &r.params;

    let supply = plant_supply(traj);
    let tol = DISSIPATION_TOL * peak_abs(&supply).max(1.0);
    let rep = check_dissipation(traj, &v1_series(traj), &supply, tol)?;
    out.push(Check::new(
        "plant dissipation (V1)",
        rep.passed,
        format!("max violation {:.3e}, tol {tol:.1e}", rep.max_violation),
    ));

    match &r.controller {
        Some(cfg) => {
            let rep = check_dissipation(
                traj,
                &v3_series(traj),
                &controller_supply(traj),
                DISSIPATION_TOL,
            )?;
            out.push(Check::new(
                "controller dissipation (V3)",
                rep.passed,
                format!(
                    "max violation {:.3e}, tol {DISSIPATION_TOL:.1e}",
                    rep.max_violation
                ),
            ));
            let rep = check_certificate_decrease(traj, DISSIPATION_TOL)?;
            out.push(Check::new(
                "Ŵ nonincreasing",
                rep.passed,
                format!(
                    "max dŴ/dt {:.3e}, tol {DISSIPATION_TOL:.1e}",
                    rep.max_violation
                ),
            ));
            let q1 = q1_matrix(cfg, p);
            out.push(Check::new(
                "Q1 positive definite",
                is_positive_definite(&q1),
                format!(
                    "L − K = {:.4}, eigenvalues {}",
                    cfg.l - cfg.k,
                    fmt_eig(symmetric_eigenvalues(&q1))
                ),
            ));
            let q2 = q2_matrix(cfg, p);
            out.push(Check::new(
                "Q2 negative semidefinite",
                is_negative_semidefinite(&q2),
                format!("eigenvalues {}", fmt_eig(symmetric_eigenvalues(&q2))),
            ));
        }
        None => {
            out.push(Check::skipped(
                "controller dissipation (V3)",
                "no controller",
            ));
            if p.d == 0.0 {
                let w: Vec<f64> = traj
                    .samples
                    .iter()
                    .map(|s| lyapunov_w(&s.plant, p))
                    .collect();
                let w0 = w[0];
                let drift = w.iter().fold(0.0_f64, |m, v| m.max((v - w0).abs()));
                let bound = CONSERVATION_TOL * w0.abs().max(1.0);
                out.push(Check::new(
                    "W conserved",
                    drift <= bound,
                    format!("max |W − W0| {drift:.3e}, tol {bound:.1e}"),
                ));
            } else {
                let rep = check_certificate_decrease(traj, tol)?;
                out.push(Check::new(
                    "W nonincreasing",
                    rep.passed,
                    format!("max dW/dt {:.3e}, tol {tol:.1e}", rep.max_violation),
                ));
            }
            out.push(Check::skipped("Q1 positive definite", "no controller"));
            out.push(Check::skipped("Q2 negative semidefinite", "no controller"));
        }
    }

    out.push(containment(r)?);

    if let Some(cfg) = &r.controller {
        let cm = c_max(p)?;
        let rate = (2.0 * cm / p.m).sqrt();
        let min = w_hat_grid_minimum(cfg, p, rate, p.angle_window(), 1.0, GRID_POINTS);
        out.push(Check::new(
            "Ŵ positive",
            min > 0.0,
            format!("min over {GRID_POINTS}³ grid {min:.3e}"),
        ));
    }
    Ok(out)
}

fn fmt_eig(e: [f64; 3]) -> String {
    format!("[{:.3e}, {:.3e}, {:.3e}]", e[0], e[1], e[2])
}

/// Uncontrolled runs from random states of `Ω` must stay in `Ω`.
fn containment(r: &Resolved) -> CliResult<Check> {
    let p = r.params;
    let level = DEFAULT_LEVEL_FRACTION * c_max(&p)?;
    let window = p.angle_window();
    let rate = (2.0 * level / p.m).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(CONTAINMENT_SEED);
    let mut starts = Vec::with_capacity(CONTAINMENT_SAMPLES);
    while starts.len() < CONTAINMENT_SAMPLES {
        let s = PlantState::new(rng.gen_range(-rate..=rate), rng.gen_range(-window..=window));
        if in_invariant_set(&s, level, &p)? {
            starts.push(s);
        }
    }
    let outcomes: Vec<CliResult<bool>> = starts
        .par_iter()
        .map(|x0| {
            let sc = FaultScenario {
                delta0: p.delta_bar + x0.delta_tilde,
                delta_dot0: x0.delta_tilde_dot,
                horizon: r.scenario.horizon,
            };
            let tr = simulate(&sc, None, &p, &r.sim)?;
            let mut inside = !tr.diverged();
            for s in &tr.samples {
                inside &= in_invariant_set(&s.plant, level, &p)?;
            }
            Ok(inside)
        })
        .collect();
    let mut escaped = 0;
    for o in outcomes {
        if !o? {
            escaped += 1;
        }
    }
    Ok(Check::new(
        "invariant set containment",
        escaped == 0,
        format!("{escaped} of {CONTAINMENT_SAMPLES} sampled states left Ω at level {level:.6}"),
    ))
}

pub fn render_table(checks: &[Check]) -> String {
    let width = checks
        .iter()
        .map(|c| c.property.chars().count())
        .max()
        .unwrap_or(8)
        .max(8);
    let mut s = format!("{:<width$}  {:<6}  detail\n", "property", "result");
    for c in checks {
        let result = match c.passed {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "n/a",
        };
        let pad = width - c.property.chars().count();
        s.push_str(&format!(
            "{}{}  {:<6}  {}\n",
            c.property,
            " ".repeat(pad),
            result,
            c.detail
        ));
    }
    s
}
