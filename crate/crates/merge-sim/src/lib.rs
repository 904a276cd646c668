//! Deterministic simulator and evaluation harness for connected-vehicle
//! on-ramp merging in mixed traffic.
//!
//! The library covers the whole pipeline: double-integrator kinematics and
//! closed-form minimum-energy trajectory planning ([`optimal_control`]),
//! recursive and cooperative merging controllers ([`merge_planning`]),
//! chi-square connected-vehicle identification ([`vis`]), dangerous-scenario
//! generation and ingestion ([`scenario`]), case orchestration
//! ([`simulation`]), and the safety/energy/comfort measures ([`metrics`]).
//! The [`cli`] module backs the `merge-sim` binary; the `examples/` directory
//! has one runnable example per capability.

pub mod cli;
pub mod kinematics;
pub mod merge_planning;
pub mod metrics;
pub mod optimal_control;
pub mod scenario;
pub mod simulation;
pub mod vis;

pub use kinematics::{Lane, Trajectory, VehicleState, DT};
pub use merge_planning::{CooperationMode, MergeSpec, Sequence};
pub use optimal_control::{solve_min_energy, Bvp, ControlLaw};
pub use scenario::{GeneratorConfig, VehiclePair, Zone};
pub use simulation::{run_batch, run_case, CaseKind, SimConfig, SimOutput};
pub use vis::{VisConfig, VisMode};
