use std::time::Instant;

use serde::Serialize;

use crate::solver::SolveStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Power,
    Trajectory,
    Alternating,
    StaticBaseline,
    FerryBaseline,
    Evaluation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Relative objective change dropped below tolerance.
    Converged,
    /// A step would not have increased the objective; the zero step was kept.
    NoAscent,
    MaxIter,
    SolverFailure,
}

/// One outer iteration of an iterative stage.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// True secrecy sum after the iteration (bits/s/Hz summed over slots).
    pub objective: f64,
    pub surrogate_objective: Option<f64>,
    pub kkt_residual: Option<f64>,
    pub solver_status: Option<SolveStatus>,
    pub solver_iterations: usize,
    pub feasible: bool,
    pub max_causality_gap: f64,
    pub min_mobility_slack: Option<f64>,
    /// Largest `min(zeta_lb - tau, eta_lb - eps)` over slots at the
    /// subproblem optimum.
    pub slack_tightness: Option<f64>,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub stage: Stage,
    pub status: RunStatus,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: Vec<IterationRecord>,
    pub final_kkt_residual: Option<f64>,
    /// Trajectory stage: residual of the last subproblem evaluated at the
    /// zero step with that subproblem's multipliers.
    pub zero_step_kkt_residual: Option<f64>,
    /// Largest KKT residual reported by any subproblem solve in this stage.
    pub worst_solver_residual: f64,
    pub inner: Vec<RunReport>,
    pub notes: Vec<String>,
    pub elapsed_s: f64,
}

impl RunReport {
    pub(crate) fn new(stage: Stage, initial_objective: f64) -> Self {
        Self {
            stage,
            status: RunStatus::MaxIter,
            initial_objective,
            final_objective: initial_objective,
            iterations: Vec::new(),
            final_kkt_residual: None,
            zero_step_kkt_residual: None,
            worst_solver_residual: 0.0,
            inner: Vec::new(),
            notes: Vec::new(),
            elapsed_s: 0.0,
        }
    }

    /// Objective before the first iteration followed by each iteration's.
    pub fn objective_trace(&self) -> Vec<f64> {
        std::iter::once(self.initial_objective).chain(self.iterations.iter().map(|r| r.objective)).collect()
    }

    pub(crate) fn finish(&mut self, status: RunStatus, final_objective: f64, clock: &Instant) {
        self.status = status;
        self.final_objective = final_objective;
        self.elapsed_s = clock.elapsed().as_secs_f64();
    }

    pub(crate) fn note_solver_residual(&mut self, r: f64) {
        self.worst_solver_residual = self.worst_solver_residual.max(r);
    }

    /// Worst solver residual across this report and every nested one.
    pub fn worst_residual_recursive(&self) -> f64 {
        self.inner.iter().map(RunReport::worst_residual_recursive).fold(self.worst_solver_residual, f64::max)
    }
}

/// `|new - old| < rel_tol * |new|`, with exact equality counting as converged.
pub(crate) fn rel_change_below(old: f64, new: f64, rel_tol: f64) -> bool {
    let diff = (new - old).abs();
    diff == 0.0 || diff < rel_tol * new.abs().max(old.abs())
}
