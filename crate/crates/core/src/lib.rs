//! Car-following driving simulator with haptic shared control.
//!
//! The math modules are generic over [`scalar::Real`]; the aliases below fix them
//! to `f64`, which is what the simulation loop, drivers and harness use.

// NaN-rejecting checks are written as `!(x > 0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod driver;
pub mod experiment;
pub mod geometry;
pub mod metrics;
pub mod mpc;
pub mod scalar;
pub mod sim;
pub mod vehicle;

pub type Track = geometry::Track<f64>;
pub type Obstacle = geometry::Obstacle<f64>;
pub type OrientedBox = geometry::OrientedBox<f64>;
pub type CarState = vehicle::CarState<f64>;
pub type ControlInput = vehicle::ControlInput<f64>;
pub type VehicleParams = vehicle::VehicleParams<f64>;
pub type MpcConfig = mpc::MpcConfig<f64>;
pub type MpcController = mpc::MpcController<f64>;
pub type CouplingGains = coupling::CouplingGains<f64>;
pub type HandleConfig = coupling::HandleConfig<f64>;
pub type HandleState = coupling::HandleState<f64>;
pub type TrialSeries = metrics::TrialSeries<f64>;
pub type TrialMetrics = metrics::TrialMetrics<f64>;
pub type MetricsConfig = metrics::MetricsConfig<f64>;

pub use driver::{Driver, DriverParams};
pub use experiment::{Condition, ExperimentConfig, ExperimentPlan, TrialRecord};
pub use sim::{LeadCache, LeadRun, RearSim, SimConfig, TICK};
