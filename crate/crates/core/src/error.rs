use thiserror::Error;

use crate::model::ModelError;
use crate::solver::SolveStatus;
use crate::{PowerAllocation, Trajectory};

/// Most recent consistent iterate of a stage that failed.
#[derive(Debug, Clone)]
pub enum LastIterate {
    Power(PowerAllocation),
    Trajectory(Trajectory),
    Joint(Trajectory, PowerAllocation),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("infeasible starting point: {0}")]
    InfeasibleStart(String),
    #[error("endpoints {distance:.3} m apart but at most {reach:.3} m reachable")]
    InfeasibleEndpoints { distance: f64, reach: f64 },
    #[error("{stage}: subproblem solver stopped with status {status:?}")]
    SolverFailure { stage: &'static str, status: SolveStatus, last: Box<LastIterate> },
}

pub type Result<T> = std::result::Result<T, Error>;
