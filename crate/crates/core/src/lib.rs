//! Radial distribution-feeder simulation with local PV-inverter reactive
//! power control.
//!
//! - [`model`]: feeder data types and the seeded rural-feeder generator.
//! - [`powerflow`]: linearized and full branch-flow solvers, loss and
//!   voltage-deviation metrics.
//! - [`control`]: inverter capability and the loss / voltage / hybrid laws.
//! - [`experiment`]: K sweeps, Pareto fronts and case ensembles.

pub mod control;
pub mod error;
pub mod experiment;
pub mod model;
pub mod powerflow;
pub mod rng;

pub use control::{CoeffMode, ControlConfig, LocalMeasurement, Scheme};
pub use error::{ControlError, Error, FlowError, ModelError, Result};
pub use experiment::{CaseOptions, CaseRun, CaseStats, KGrid, SweepPoint, SweepResult};
pub use model::{Feeder, LineSegment, NodeState, ScenarioSpec, Seeds};
pub use powerflow::{FlowModel, FlowSolution, Injection};
