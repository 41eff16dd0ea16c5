//! Eco-driving at a fixed-time signalized intersection.
//!
//! The crate simulates a single vehicle approaching a stop line under a
//! rolling-horizon planner, executes the plans through a disturbed
//! longitudinal plant and scores the result against a stop-and-go benchmark
//! with the robustness (`R`) and resilience (`G`) retention ratios.
//!
//! Three planners are provided: [`stopgo`] (benchmark), [`analytical`]
//! (cubic boundary-value arrivals) and [`optimal`] (fuel-minimal jerk
//! transcription). [`oracle`] holds brute-force optima used to validate the
//! optimizer, and [`experiment`] drives the controller × disturbance matrix.

pub mod analytical;
pub mod disturbance;
pub mod domain;
pub mod error;
pub mod executor;
pub mod experiment;
pub mod metrics;
pub mod optimal;
pub mod oracle;
pub mod planner;
pub mod plant;
pub mod signal;
pub mod stopgo;

pub use domain::{
    ControllerTuning, FuelCoefficients, Limits, Plan, ScenarioConfig, Trajectory, UtilityWeights,
    VehicleState,
};
pub use error::{Error, Result};
pub use planner::{PlanContext, Planner};
