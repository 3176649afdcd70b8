//! Receding-horizon lead-car controller.
//!
//! The controller works on the extended deviation state `xi = (eta, w)` where
//! `eta = state - reference` and `w = input - reference input`, and optimizes the
//! sequence of input increments over the horizon.

mod config;
mod controller;
mod cost;
mod model;
mod reference;
mod solver;

pub use config::{MpcConfig, MpcError};
pub use controller::{detect_obstacles, MpcController, MpcSolution};
pub use cost::{cost, MpcProblem};
pub use model::{predict, rollout, ExtendedSystem, Vec5, XI_DIM};
pub use reference::{build_reference, ReferencePoint};
pub use solver::{project_increments, solve_increments, SolverOutcome};
