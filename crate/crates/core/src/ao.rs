//! Alternating optimization of powers and trajectory.
//!
//! Each outer iteration runs the power stage with the trajectory fixed and
//! then the trajectory stage with the new powers fixed. Both stages only
//! accept strict improvements of the true secrecy sum, so the outer sequence
//! never decreases.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, LastIterate, Result};
use crate::model::{
    check_causality, check_mobility, check_power_budget, rate_profile, BudgetVerdict, CausalityVerdict, MobilityVerdict,
    FEASIBILITY_TOL,
};
use crate::power_dc::{dc_allocate, DcOptions};
use crate::report::{rel_change_below, IterationRecord, RunReport, RunStatus, Stage};
use crate::trajectory_scp::{initial_trajectory, scp_optimize_traced, ScpOptions};
use crate::{PowerAllocation, RateProfile, Scenario, Trajectory};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AoOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub power: DcOptions,
    pub trajectory: ScpOptions,
}

impl Default for AoOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-4, max_iter: 30, power: DcOptions::default(), trajectory: ScpOptions::default() }
    }
}

/// Result of an alternating run.
#[derive(Debug, Clone)]
pub struct AoOutcome {
    pub traj: Trajectory,
    pub pw: PowerAllocation,
    pub report: RunReport,
    /// Trajectory after every accepted trajectory-stage step, in order.
    pub snapshots: Vec<Trajectory>,
}

/// Runs from the straight-line (or hovering) trajectory with equal source
/// power and a silent relay.
pub fn ao_optimize(scn: &Scenario, opts: &AoOptions) -> Result<AoOutcome> {
    let traj = initial_trajectory(scn)?;
    ao_optimize_from(scn, &traj, &PowerAllocation::equal_source(scn), opts)
}

/// Runs from a caller-supplied feasible pair.
pub fn ao_optimize_from(scn: &Scenario, traj_0: &Trajectory, pw_0: &PowerAllocation, opts: &AoOptions) -> Result<AoOutcome> {
    let clock = Instant::now();
    let ev = evaluate(scn, traj_0, pw_0)?;
    if !ev.feasible {
        return Err(Error::InfeasibleStart(format!(
            "mobility slack {:.3e} m^2, causality gap {:.3e}, budget slack {:.3e} W",
            ev.mobility.min_slack(),
            ev.causality.max_gap(),
            ev.budget.source_slack.min(ev.budget.relay_slack)
        )));
    }

    let mut traj = traj_0.clone();
    let mut pw = pw_0.clone();
    let mut obj = ev.objective;
    let mut report = RunReport::new(Stage::Alternating, obj);
    let mut snapshots = Vec::new();
    let mut status = RunStatus::MaxIter;
    let joint = |e: Error, traj: &Trajectory, pw: &PowerAllocation| match e {
        Error::SolverFailure { stage, status, last } => {
            let pair = match *last {
                LastIterate::Power(p) => LastIterate::Joint(traj.clone(), p),
                LastIterate::Trajectory(t) => LastIterate::Joint(t, pw.clone()),
                joint => joint,
            };
            Error::SolverFailure { stage, status, last: Box::new(pair) }
        }
        e => e,
    };

    for k in 0..opts.max_iter {
        let (new_pw, power_rep) = dc_allocate(scn, &traj, &pw, &opts.power).map_err(|e| joint(e, &traj, &pw))?;
        let power_kkt = power_rep.final_kkt_residual;
        report.note_solver_residual(power_rep.worst_solver_residual);
        report.inner.push(power_rep);
        pw = new_pw;

        let (new_traj, traj_rep) =
            scp_optimize_traced(scn, &pw, &traj, &opts.trajectory, &clock, &mut snapshots).map_err(|e| joint(e, &traj, &pw))?;
        report.note_solver_residual(traj_rep.worst_solver_residual);
        report.inner.push(traj_rep);
        traj = new_traj;

        let ev = evaluate(scn, &traj, &pw)?;
        let converged = rel_change_below(obj, ev.objective, opts.rel_tol);
        obj = ev.objective;
        report.iterations.push(IterationRecord {
            iteration: k + 1,
            objective: obj,
            surrogate_objective: None,
            kkt_residual: power_kkt,
            solver_status: None,
            solver_iterations: 0,
            feasible: ev.feasible,
            max_causality_gap: ev.causality.max_gap(),
            min_mobility_slack: Some(ev.mobility.min_slack()),
            slack_tightness: None,
            elapsed_s: clock.elapsed().as_secs_f64(),
        });
        if converged {
            status = RunStatus::Converged;
            break;
        }
    }
    report.final_kkt_residual = report.inner.iter().rev().find(|r| r.stage == Stage::Power).and_then(|r| r.final_kkt_residual);
    report.zero_step_kkt_residual = report.inner.iter().rev().find(|r| r.stage == Stage::Trajectory).and_then(|r| r.zero_step_kkt_residual);
    report.finish(status, obj, &clock);
    Ok(AoOutcome { traj, pw, report, snapshots })
}

/// Runs from every start and keeps the best final objective; ties go to the
/// earliest start. Starts that are infeasible are skipped with a note.
pub fn ao_multistart(scn: &Scenario, starts: &[(Trajectory, PowerAllocation)], opts: &AoOptions) -> Result<AoOutcome> {
    let mut best: Option<AoOutcome> = None;
    let mut notes = Vec::new();
    let mut last_err = None;
    for (i, (t, p)) in starts.iter().enumerate() {
        match ao_optimize_from(scn, t, p, opts) {
            Ok(out) => {
                notes.push(format!("start {i}: objective {:.9}", out.report.final_objective));
                if best.as_ref().is_none_or(|b| out.report.final_objective > b.report.final_objective) {
                    best = Some(out);
                }
            }
            Err(Error::InfeasibleStart(msg)) => {
                notes.push(format!("start {i} skipped: {msg}"));
                last_err = Some(Error::InfeasibleStart(msg));
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some(mut b) => {
            b.report.notes.extend(notes);
            Ok(b)
        }
        None => Err(last_err.unwrap_or_else(|| Error::InfeasibleStart("no starting points".into()))),
    }
}

/// Objective and every feasibility verdict of a trajectory and allocation.
#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub objective: f64,
    pub secrecy_avg: f64,
    pub rates: RateProfile,
    pub mobility: MobilityVerdict<f64>,
    pub causality: CausalityVerdict<f64>,
    pub budget: BudgetVerdict<f64>,
    pub feasible: bool,
}

pub fn evaluate(scn: &Scenario, traj: &Trajectory, pw: &PowerAllocation) -> Result<Evaluation> {
    let rates = rate_profile(scn, traj, pw)?;
    let mobility = check_mobility(scn, traj);
    let causality = check_causality(scn, traj, pw)?;
    let budget = check_power_budget(scn, pw)?;
    let feasible = mobility.feasible && causality.feasible_within(FEASIBILITY_TOL) && budget.feasible;
    Ok(Evaluation { objective: rates.secrecy_sum, secrecy_avg: rates.secrecy_avg, rates, mobility, causality, budget, feasible })
}
