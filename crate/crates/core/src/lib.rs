//! Transient stability of a single-machine-infinite-bus power system under
//! battery-based angle feedback.
//!
//! The crate covers the plant ([`model`]), the saturated anti-windup angle
//! controller ([`controller`]), storage and Lyapunov certificates together
//! with a numerical dissipation checker ([`nni`]), analytic stability
//! predicates ([`stability`]) and a deterministic fixed-step closed-loop
//! simulator ([`sim`]).

pub mod controller;
pub mod error;
pub mod model;
pub mod nni;
pub mod sim;
pub mod stability;

pub use controller::{ControllerConfig, ControllerState, Mode};
pub use error::{Error, Result};
pub use model::{FaultScenario, PlantState, SmibParams};
pub use nni::DissipationReport;
pub use sim::{simulate, SimulationConfig, Trajectory};
pub use stability::{StabilityReport, Verdict};
