//! Scenario and sweep files.

use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use smib_core::{ControllerConfig, FaultScenario, SimulationConfig, SmibParams};

use crate::error::{CliError, CliResult};

/// A saturation bound or sweep value; accepts a number or the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bound(pub f64);

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct BoundVisitor;

        impl Visitor<'_> for BoundVisitor {
            type Value = Bound;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Bound, E> {
                Ok(Bound(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Bound, E> {
                Ok(Bound(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Bound, E> {
                Ok(Bound(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Bound, E> {
                match v.trim().to_ascii_lowercase().as_str() {
                    "inf" | "+inf" | "infinity" => Ok(Bound(f64::INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }

        d.deserialize_any(BoundVisitor)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    /// Inertia constant (s).
    pub h: f64,
    /// Nominal frequency (Hz); defaults to 50.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f0: Option<f64>,
    /// Nominal angular frequency (rad/s); alternative to `f0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    #[serde(default)]
    pub d: f64,
    pub p_mech: f64,
    pub p_max: f64,
    #[serde(default)]
    pub p_storage_bar: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSection {
    /// Post-fault rotor angle (rad).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta0: Option<f64>,
    /// Post-fault angle measured from the equilibrium (rad).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_tilde0: Option<f64>,
    #[serde(default)]
    pub delta_dot0: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
}

fn default_horizon() -> f64 {
    FaultScenario::DEFAULT_HORIZON
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub tau: f64,
    #[serde(rename = "K", alias = "k")]
    pub k: f64,
    #[serde(rename = "L", alias = "l")]
    pub l: f64,
    pub alpha: f64,
    pub b: Bound,
    #[serde(default)]
    pub hysteresis: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            record_stride: default_stride(),
        }
    }
}

fn default_dt() -> f64 {
    SimulationConfig::default().dt
}

fn default_stride() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Artifact {
    Csv,
    Plot,
    Report,
}

fn default_outputs() -> Vec<Artifact> {
    vec![Artifact::Csv, Artifact::Report, Artifact::Plot]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "default_outputs")]
    pub outputs: Vec<Artifact>,
    pub plant: PlantSection,
    pub fault: FaultSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerSection>,
    #[serde(default)]
    pub sim: SimSection,
}

/// Everything `simulate` needs, validated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Resolved {
    pub params: SmibParams,
    pub scenario: FaultScenario,
    pub controller: Option<ControllerConfig>,
    pub sim: SimulationConfig,
}

/// Command-line overrides shared by the run commands.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub stride: Option<usize>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::parse(&read(path)?)
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dt) = o.dt {
            self.sim.dt = dt;
        }
        if let Some(h) = o.horizon {
            self.fault.horizon = h;
        }
        if let Some(s) = o.stride {
            self.sim.record_stride = s;
        }
    }

    pub fn resolve(&self) -> CliResult<Resolved> {
        let p = &self.plant;
        let omega0 = match (p.f0, p.omega0) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "plant: set either f0 or omega0, not both".into(),
                ))
            }
            (None, Some(w)) => w,
            (f0, None) => 2.0 * std::f64::consts::PI * f0.unwrap_or(50.0),
        };
        let params = SmibParams::new(p.h, omega0, p.d, p.p_mech, p.p_max, p.p_storage_bar)?;

        let f = &self.fault;
        let delta0 = match (f.delta0, f.delta_tilde0) {
            (Some(d), None) => d,
            (None, Some(dt)) => params.delta_bar + dt,
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "fault: set either delta0 or delta_tilde0, not both".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Config(
                    "fault: missing field `delta0` (or `delta_tilde0`)".into(),
                ))
            }
        };
        let scenario = FaultScenario {
            delta0,
            delta_dot0: f.delta_dot0,
            horizon: f.horizon,
        };
        scenario.validate()?;

        let controller = self.controller.map(|c| ControllerConfig {
            tau: c.tau,
            k: c.k,
            l: c.l,
            alpha: c.alpha,
            b: c.b.0,
            hysteresis: c.hysteresis,
        });
        if let Some(c) = &controller {
            c.validate()?;
        }

        let sim = SimulationConfig {
            dt: self.sim.dt,
            horizon: None,
            record_stride: self.sim.record_stride,
        };
        sim.validate()?;

        Ok(Resolved {
            params,
            scenario,
            controller,
            sim,
        })
    }

    pub fn wants(&self, a: Artifact) -> bool {
        self.outputs.contains(&a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "delta0")]
    Delta0,
    #[serde(rename = "delta_dot0")]
    DeltaDot0,
    #[serde(rename = "b")]
    B,
    #[serde(rename = "K")]
    K,
    #[serde(rename = "L")]
    L,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Delta0 => "delta0",
            Axis::DeltaDot0 => "delta_dot0",
            Axis::B => "b",
            Axis::K => "K",
            Axis::L => "L",
        }
    }

    fn needs_controller(self) -> bool {
        matches!(self, Axis::B | Axis::K | Axis::L)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Axis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Bound>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub sweep: SweepSection,
    pub base: ScenarioFile,
}

impl SweepFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::parse(&read(path)?)
    }

    /// Axis values in file order.
    pub fn values(&self) -> CliResult<Vec<f64>> {
        let s = &self.sweep;
        let values = match (&s.values, &s.grid) {
            (Some(v), None) => v.iter().map(|b| b.0).collect(),
            (None, Some(g)) => grid(g)?,
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "sweep: set either values or grid, not both".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Config(
                    "sweep: missing field `values` (or `grid`)".into(),
                ))
            }
        };
        if values.is_empty() {
            return Err(CliError::Config("sweep: empty grid".into()));
        }
        let unbounded_ok = s.axis == Axis::B;
        if let Some(v) = values
            .iter()
            .find(|v| v.is_nan() || (v.is_infinite() && !(unbounded_ok && **v > 0.0)))
        {
            return Err(CliError::Config(format!(
                "sweep: value {v} is not allowed on axis {}",
                s.axis.name()
            )));
        }
        if s.axis.needs_controller() && self.base.controller.is_none() {
            return Err(CliError::Config(format!(
                "sweep: axis {} needs a [base.controller] section",
                s.axis.name()
            )));
        }
        Ok(values)
    }

    /// Base scenario with the axis set to `value`.
    pub fn point(&self, value: f64) -> ScenarioFile {
        let mut sc = self.base.clone();
        match self.sweep.axis {
            Axis::Delta0 => {
                sc.fault.delta0 = Some(value);
                sc.fault.delta_tilde0 = None;
            }
            Axis::DeltaDot0 => sc.fault.delta_dot0 = value,
            Axis::B => sc.controller.as_mut().expect("checked").b = Bound(value),
            Axis::K => sc.controller.as_mut().expect("checked").k = value,
            Axis::L => sc.controller.as_mut().expect("checked").l = value,
        }
        sc
    }
}

fn grid(g: &Grid) -> CliResult<Vec<f64>> {
    if !(g.start.is_finite() && g.stop.is_finite()) {
        return Err(CliError::Config(
            "sweep.grid: start and stop must be finite".into(),
        ));
    }
    Ok(match g.count {
        0 => Vec::new(),
        1 => vec![g.start],
        n => (0..n)
            .map(|i| g.start + (g.stop - g.start) * i as f64 / (n - 1) as f64)
            .collect(),
    })
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}
