//! Secrecy-rate maximization for a UAV mobile relay: alternating power and
//! trajectory optimization with an in-house interior-point solver.

pub mod ao;
pub mod baselines;
pub mod error;
pub mod model;
pub mod power_dc;
pub mod report;
pub mod scalar;
pub mod solver;
pub mod trajectory_scp;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Scenario = model::Scenario<f64>;
pub type ScenarioBuilder = model::ScenarioBuilder<f64>;
pub type Trajectory = model::Trajectory<f64>;
pub type PowerAllocation = model::PowerAllocation<f64>;
pub type ChannelState = model::ChannelState<f64>;
pub type RateProfile = model::RateProfile<f64>;
