//! Power allocation with the trajectory fixed, by the convex-concave
//! (difference-of-concave) procedure.
//!
//! At the current allocation the concave terms that make the problem
//! nonconvex are replaced by their tangent planes: the subtracted Eve rates
//! in the objective and the delivered-data prefix sums on the left of both
//! causality constraints. Tangents overestimate concave functions, so the
//! surrogate objective is a minorant of the true one and the surrogate
//! constraints are inner approximations. Each surrogate solve therefore keeps
//! feasibility and never decreases the secrecy sum.
//!
//! Decision variables are powers normalized by their average limits,
//! `q_s = p_s / p_bar_s` and `q_r = p_r / p_bar_r`.

use std::f64::consts::LN_2;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, LastIterate, Result};
use crate::model::{channel_state, check_causality, check_power_budget, rates_from_channel, FEASIBILITY_TOL};
use crate::report::{rel_change_below, IterationRecord, RunReport, RunStatus, Stage};
use crate::solver::{kkt_residual, solve, Affine, Multipliers, SmoothConvexProgram, SmoothFn, SolveStatus, SolverOptions};
use crate::{ChannelState, PowerAllocation, Scenario, Trajectory};

/// `constant + Σ coef_i x_i + Σ sign_j log2(1 + gain_j x_j)`.
#[derive(Debug, Clone, Default)]
pub struct LogSumFn {
    constant: f64,
    linear: Vec<(usize, f64)>,
    logs: Vec<(usize, f64, f64)>,
    support: Vec<usize>,
}

impl LogSumFn {
    pub fn new(constant: f64) -> Self {
        Self { constant, ..Default::default() }
    }

    pub fn linear(mut self, idx: usize, coef: f64) -> Self {
        self.linear.push((idx, coef));
        self.support.push(idx);
        self
    }

    pub fn log(mut self, idx: usize, gain: f64, sign: f64) -> Self {
        self.logs.push((idx, gain, sign));
        self.support.push(idx);
        self
    }

    fn finish(mut self) -> Self {
        self.support.sort_unstable();
        self.support.dedup();
        self
    }
}

impl SmoothFn for LogSumFn {
    fn value(&self, x: &[f64]) -> f64 {
        let lin = self.linear.iter().fold(self.constant, |a, &(i, c)| a + c * x[i]);
        self.logs.iter().fold(lin, |a, &(i, g, s)| a + s * (g * x[i]).ln_1p() / LN_2)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        for &(i, c) in &self.linear {
            grad[i] += c;
        }
        for &(i, g, s) in &self.logs {
            grad[i] += s * g / (LN_2 * (1.0 + g * x[i]));
        }
    }

    fn add_hessian(&self, x: &[f64], weight: f64, hess: &mut DMatrix<f64>) {
        for &(i, g, s) in &self.logs {
            let d = 1.0 + g * x[i];
            hess[(i, i)] -= weight * s * g * g / (LN_2 * d * d);
        }
    }

    fn support(&self) -> Option<&[usize]> {
        Some(&self.support)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DcOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    /// When set, convergence also requires the power-problem KKT residual at
    /// the accepted point to be at most this value.
    pub kkt_tol: Option<f64>,
    pub solver: SolverOptions,
}

impl Default for DcOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-5, max_iter: 100, kkt_tol: None, solver: SolverOptions::default() }
    }
}

/// One accepted iterate of the procedure.
#[derive(Debug, Clone, Serialize)]
pub struct DcIterate {
    pub pw: PowerAllocation,
    pub objective: f64,
    pub surrogate_objective: f64,
    pub iteration: usize,
}

/// Variable layout: `q_s` for slots `0..N-1`, then `q_r` for slots `1..N`.
#[derive(Debug, Clone, Copy)]
struct PowerLayout {
    n: usize,
    scale_s: f64,
    scale_r: f64,
}

impl PowerLayout {
    fn dim(&self) -> usize {
        2 * (self.n - 1)
    }
    fn s(&self, slot: usize) -> usize {
        slot
    }
    fn r(&self, slot: usize) -> usize {
        self.n - 1 + slot - 1
    }

    fn to_vec(self, pw: &PowerAllocation) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for j in 0..self.n - 1 {
            x[self.s(j)] = pw.p_s()[j] / self.scale_s;
        }
        for j in 1..self.n {
            x[self.r(j)] = pw.p_r()[j] / self.scale_r;
        }
        x
    }

    fn to_power(self, x: &[f64]) -> PowerAllocation {
        let mut p_s = vec![0.0; self.n];
        let mut p_r = vec![0.0; self.n];
        for j in 0..self.n - 1 {
            p_s[j] = x[self.s(j)].max(0.0) * self.scale_s;
        }
        for j in 1..self.n {
            p_r[j] = x[self.r(j)].max(0.0) * self.scale_r;
        }
        PowerAllocation::new(p_s, p_r).expect("clamped powers are valid")
    }
}

/// Convex surrogate built at a linearization point, plus the maps between
/// its variable vector and [`PowerAllocation`].
///
/// The received-data terms `log2(1 + a q_s)` enter the causality constraints
/// through one epigraph variable per source slot, `w_j <= log2(1 + a_j q_s_j)`,
/// which keeps the long prefix constraints affine. The lifted variables sit
/// after the powers.
pub struct DcSurrogate {
    pub program: SmoothConvexProgram,
    layout: PowerLayout,
    source_gain: Vec<f64>,
}

impl DcSurrogate {
    pub fn to_power(&self, x: &[f64]) -> PowerAllocation {
        self.layout.to_power(&x[..self.layout.dim()])
    }

    /// Solver vector for `pw` with every epigraph variable at its bound.
    pub fn to_vec(&self, pw: &PowerAllocation) -> Vec<f64> {
        let mut x = self.layout.to_vec(pw);
        for j in 0..self.layout.n - 1 {
            x.push((self.source_gain[j] * x[self.layout.s(j)]).ln_1p() / LN_2);
        }
        x
    }

    /// Surrogate secrecy objective (maximize convention) at `pw`.
    pub fn surrogate_secrecy(&self, pw: &PowerAllocation) -> f64 {
        -self.program.objective.value(&self.to_vec(pw))
    }

    /// Multipliers of the surrogate restricted to the constraints it shares
    /// with [`power_problem`].
    pub fn shared_multipliers(&self, duals: &Multipliers) -> Multipliers {
        let d = self.layout.dim();
        let shared = self.program.ineqs.len() - (self.layout.n - 1);
        Multipliers { ineq: duals.ineq[..shared].to_vec(), lower: duals.lower[..d].to_vec(), upper: duals.upper[..d].to_vec() }
    }
}

fn layout_for(scn: &Scenario) -> PowerLayout {
    let pos = |v: f64| if v > 0.0 { v } else { 1.0 };
    PowerLayout { n: scn.n_slots(), scale_s: pos(scn.p_bar_s()), scale_r: pos(scn.p_bar_r()) }
}

struct Gains {
    source: Vec<f64>,
    bob: Vec<f64>,
    eve: Vec<f64>,
}

fn gains(l: &PowerLayout, cs: &ChannelState) -> Gains {
    Gains {
        source: cs.gamma_ar.iter().map(|g| g * l.scale_s).collect(),
        bob: cs.gamma_rd.iter().map(|g| g * l.scale_r).collect(),
        eve: cs.gamma_re.iter().map(|g| g * l.scale_r).collect(),
    }
}

fn budget_constraints(l: &PowerLayout, scn: &Scenario) -> [Box<dyn SmoothFn>; 2] {
    let n = l.n as f64;
    let src = Affine::new(-n * scn.p_bar_s() / l.scale_s, (0..l.n - 1).map(|j| (l.s(j), 1.0)));
    let rel = Affine::new(-n * scn.p_bar_r() / l.scale_r, (1..l.n).map(|j| (l.r(j), 1.0)));
    [Box::new(src), Box::new(rel)]
}

/// Surrogate of the power problem linearized at `pw_k`.
pub fn build_dc_surrogate(scn: &Scenario, traj: &Trajectory, pw_k: &PowerAllocation) -> Result<DcSurrogate> {
    scn.check_len(pw_k.len())?;
    let cs = channel_state(scn, traj)?;
    let causal = causality_ok(scn, traj, pw_k)?;
    if !causal || !check_power_budget(scn, pw_k)?.feasible {
        return Err(Error::InfeasibleStart("linearization point violates the power problem constraints".into()));
    }
    let l = layout_for(scn);
    let gn = gains(&l, &cs);
    let xk = l.to_vec(pw_k);
    let w = |j: usize| l.dim() + j;
    let dim = l.dim() + l.n - 1;

    let mut obj = LogSumFn::new(0.0);
    for j in 1..l.n {
        let i = l.r(j);
        let (b, c, qk) = (gn.bob[j], gn.eve[j], xk[i]);
        let slope = c / (LN_2 * (1.0 + c * qk));
        obj.constant += (c * qk).ln_1p() / LN_2 - slope * qk;
        obj = obj.log(i, b, -1.0).linear(i, slope);
    }
    let mut prog = SmoothConvexProgram::new(dim, Box::new(obj.finish()));

    for gain in [&gn.bob, &gn.eve] {
        // Tangent of the delivered-data prefix sum at q_r^k.
        for m in 1..l.n {
            let mut constant = 0.0;
            let mut terms = Vec::with_capacity(2 * m);
            for j in 1..=m {
                let i = l.r(j);
                let (g, qk) = (gain[j], xk[i]);
                let slope = g / (LN_2 * (1.0 + g * qk));
                constant += (g * qk).ln_1p() / LN_2 - slope * qk;
                terms.push((i, slope));
            }
            terms.extend((0..m).map(|j| (w(j), -1.0)));
            prog = prog.constraint(Box::new(Affine::new(constant, terms)));
        }
    }
    for b in budget_constraints(&l, scn) {
        prog = prog.constraint(b);
    }
    for j in 0..l.n - 1 {
        prog = prog.constraint(Box::new(LogSumFn::new(0.0).linear(w(j), 1.0).log(l.s(j), gn.source[j], -1.0).finish()));
    }
    let mut bounds = vec![(0.0, f64::INFINITY); l.dim()];
    bounds.resize(dim, (f64::NEG_INFINITY, f64::INFINITY));
    let sur = DcSurrogate { program: prog.bounds(bounds), layout: l, source_gain: gn.source[..l.n - 1].to_vec() };
    let x0 = sur.to_vec(pw_k);
    Ok(DcSurrogate { program: sur.program.start(x0), ..sur })
}

/// The power problem itself (nonconvex) in the surrogate's variables; used
/// to certify KKT points with the surrogate's multipliers.
pub fn power_problem(scn: &Scenario, traj: &Trajectory) -> Result<SmoothConvexProgram> {
    let cs = channel_state(scn, traj)?;
    let l = layout_for(scn);
    let gn = gains(&l, &cs);
    let mut obj = LogSumFn::new(0.0);
    for j in 1..l.n {
        obj = obj.log(l.r(j), gn.bob[j], -1.0).log(l.r(j), gn.eve[j], 1.0);
    }
    let mut prog = SmoothConvexProgram::new(l.dim(), Box::new(obj.finish()));
    for gain in [&gn.bob, &gn.eve] {
        for m in 1..l.n {
            let mut f = LogSumFn::new(0.0);
            for j in 1..=m {
                f = f.log(l.r(j), gain[j], 1.0);
            }
            for j in 0..m {
                f = f.log(l.s(j), gn.source[j], -1.0);
            }
            prog = prog.constraint(Box::new(f.finish()));
        }
    }
    for b in budget_constraints(&l, scn) {
        prog = prog.constraint(b);
    }
    Ok(prog.bounds(vec![(0.0, f64::INFINITY); l.dim()]))
}

/// KKT residual of the power problem at `pw` with the given multipliers.
pub fn power_kkt_residual(scn: &Scenario, traj: &Trajectory, pw: &PowerAllocation, duals: &Multipliers) -> Result<f64> {
    let prog = power_problem(scn, traj)?;
    let x = layout_for(scn).to_vec(pw);
    Ok(kkt_residual(&prog, &x, duals))
}

fn causality_ok(scn: &Scenario, traj: &Trajectory, pw: &PowerAllocation) -> Result<bool> {
    Ok(check_causality(scn, traj, pw)?.feasible)
}

/// Convex-concave iterations from the feasible allocation `pw_0`.
///
/// Stops once the relative secrecy change falls below `rel_tol` (and the KKT
/// residual below `kkt_tol`, if set), when a step
/// fails to increase the objective (the current point is kept), or after
/// `max_iter` surrogate solves. The report carries the KKT residual of the
/// power problem at the returned point, evaluated with the multipliers of the
/// last surrogate solve.
pub fn dc_allocate(scn: &Scenario, traj: &Trajectory, pw_0: &PowerAllocation, opts: &DcOptions) -> Result<(PowerAllocation, RunReport)> {
    let clock = Instant::now();
    let (pw, report, _) = dc_allocate_traced(scn, traj, pw_0, opts, &clock)?;
    Ok((pw, report))
}

/// [`dc_allocate`] that also returns every accepted iterate.
pub fn dc_allocate_traced(
    scn: &Scenario,
    traj: &Trajectory,
    pw_0: &PowerAllocation,
    opts: &DcOptions,
    clock: &Instant,
) -> Result<(PowerAllocation, RunReport, Vec<DcIterate>)> {
    scn.check_len(pw_0.len())?;
    let cs = channel_state(scn, traj)?;
    let mut pw = pw_0.clone();
    let secrecy = |pw: &PowerAllocation| rates_from_channel(&cs, pw).map(|r| r.secrecy_sum);
    let mut obj = secrecy(&pw)?;
    let mut report = RunReport::new(Stage::Power, obj);
    let mut trace = Vec::new();

    if scn.p_bar_s() == 0.0 || scn.p_bar_r() == 0.0 {
        // no data can be loaded or no data can be forwarded
        let zero_relay = pw.with_relay_scaled(0.0);
        pw = if scn.p_bar_s() == 0.0 { PowerAllocation::zeros(scn.n_slots()) } else { zero_relay };
        let obj = secrecy(&pw)?;
        report.notes.push("zero average power limit; relay kept silent".into());
        report.finish(RunStatus::Converged, obj, clock);
        return Ok((pw, report, trace));
    }
    if !causality_ok(scn, traj, &pw)? || !check_power_budget(scn, &pw)?.feasible {
        return Err(Error::InfeasibleStart("initial power allocation violates causality or budget".into()));
    }

    let mut status = RunStatus::MaxIter;
    for k in 0..opts.max_iter {
        let sur = build_dc_surrogate(scn, traj, &pw)?;
        let res = solve(&sur.program, &opts.solver);
        report.note_solver_residual(res.kkt_residual);
        if res.status != SolveStatus::Optimal {
            report.finish(RunStatus::SolverFailure, obj, clock);
            return Err(Error::SolverFailure { stage: "power allocation", status: res.status, last: Box::new(LastIterate::Power(pw)) });
        }
        let duals = sur.shared_multipliers(&res.duals);
        let candidate = sur.to_power(&res.x_opt);
        let cand_obj = secrecy(&candidate)?;
        let feasible = causality_ok(scn, traj, &candidate)? && check_power_budget(scn, &candidate)?.feasible;
        if !feasible || cand_obj <= obj {
            report.final_kkt_residual = Some(power_kkt_residual(scn, traj, &pw, &duals)?);
            status = RunStatus::NoAscent;
            break;
        }
        let rel_small = rel_change_below(obj, cand_obj, opts.rel_tol);
        pw = candidate;
        obj = cand_obj;
        let kkt = power_kkt_residual(scn, traj, &pw, &duals)?;
        report.final_kkt_residual = Some(kkt);
        let converged = rel_small && opts.kkt_tol.is_none_or(|t| kkt <= t);
        let gaps = check_causality(scn, traj, &pw)?;
        report.iterations.push(IterationRecord {
            iteration: k + 1,
            objective: obj,
            surrogate_objective: Some(-res.objective_value),
            kkt_residual: Some(res.kkt_residual),
            solver_status: Some(res.status),
            solver_iterations: res.iterations + res.phase_one_iterations,
            feasible: gaps.feasible_within(FEASIBILITY_TOL),
            max_causality_gap: gaps.max_gap(),
            min_mobility_slack: None,
            slack_tightness: None,
            elapsed_s: clock.elapsed().as_secs_f64(),
        });
        trace.push(DcIterate { pw: pw.clone(), objective: obj, surrogate_objective: -res.objective_value, iteration: k + 1 });
        if converged {
            status = RunStatus::Converged;
            break;
        }
    }
    report.finish(status, obj, clock);
    Ok((pw, report, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::verify_derivatives;
    use crate::ScenarioBuilder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small(n: usize) -> (Scenario, Trajectory) {
        let mut b = ScenarioBuilder::reference();
        b.n_slots = n;
        let s = b.build().unwrap();
        let xy = (0..n).map(|i| [2000.0 * i as f64 / (n - 1) as f64, -50.0]).collect();
        (s, Trajectory::new(xy).unwrap())
    }

    #[test]
    fn surrogate_gradient_at_origin() {
        let (s, t) = small(6);
        let pw = PowerAllocation::equal_source(&s);
        let sur = build_dc_surrogate(&s, &t, &pw).unwrap();
        let cs = channel_state(&s, &t).unwrap();
        let x = sur.to_vec(&pw);
        let mut g = vec![0.0; x.len()];
        sur.program.objective.gradient(&x, &mut g);
        for j in 1..6 {
            // maximize-convention gradient w.r.t. p_r[j] is -(grad of minimized)/scale
            let expect = (cs.gamma_rd[j] - cs.gamma_re[j]) / LN_2;
            let got = -g[sur.layout.r(j)] / s.p_bar_r();
            assert!((got - expect).abs() <= 1e-9 * expect.abs().max(1.0), "slot {j}: {got} vs {expect}");
        }
    }

    #[test]
    fn surrogate_is_tangent_and_minorant() {
        let (s, t) = small(5);
        let pw_k = PowerAllocation::new(vec![0.02, 0.01, 0.01, 0.01, 0.0], vec![0.0, 1e-3, 2e-3, 5e-3, 4e-3]).unwrap();
        let sur = build_dc_surrogate(&s, &t, &pw_k).unwrap();
        let truth = |pw: &PowerAllocation| crate::model::secrecy_sum(&s, &t, pw).unwrap();
        assert!((sur.surrogate_secrecy(&pw_k) - truth(&pw_k)).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let mut p_r: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..0.05)).collect();
            p_r[0] = 0.0;
            let pw = PowerAllocation::new(pw_k.p_s().to_vec(), p_r).unwrap();
            assert!(sur.surrogate_secrecy(&pw) <= truth(&pw) + 1e-12);
        }
    }

    #[test]
    fn surrogate_derivatives_match_finite_differences() {
        let (s, t) = small(5);
        let pw_k = PowerAllocation::new(vec![0.02, 0.01, 0.01, 0.01, 0.0], vec![0.0, 1e-3, 2e-3, 5e-3, 4e-3]).unwrap();
        let sur = build_dc_surrogate(&s, &t, &pw_k).unwrap();
        let x = sur.to_vec(&pw_k);
        let h = 1e-5 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt());
        assert!(verify_derivatives(&sur.program, &x, h).max_error() < 1e-5);
        let orig = power_problem(&s, &t).unwrap();
        assert!(verify_derivatives(&orig, &x[..orig.dim], h).max_error() < 1e-5);
    }

    #[test]
    fn identical_links_give_zero() {
        let mut b = ScenarioBuilder::reference();
        b.n_slots = 6;
        b.eve_xy = b.bob_xy;
        let s = b.build().unwrap();
        let t = Trajectory::constant([1500.0, 0.0], 6);
        let (pw, rep) = dc_allocate(&s, &t, &PowerAllocation::equal_source(&s), &DcOptions::default()).unwrap();
        assert!(rep.final_objective >= -1e-7);
        assert!(crate::model::secrecy_sum(&s, &t, &pw).unwrap() >= -1e-7);
    }

    #[test]
    fn zero_source_budget_silences_everything() {
        let mut b = ScenarioBuilder::reference();
        b.n_slots = 5;
        b.p_bar_s = 0.0;
        let s = b.build().unwrap();
        let t = Trajectory::constant([1500.0, 0.0], 5);
        let (pw, rep) = dc_allocate(&s, &t, &PowerAllocation::zeros(5), &DcOptions::default()).unwrap();
        assert_eq!(pw, PowerAllocation::zeros(5));
        assert_eq!(rep.final_objective, 0.0);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let (s, t) = small(4);
        let pw = PowerAllocation::new(vec![0.0; 4], vec![0.0, 0.01, 0.01, 0.01]).unwrap();
        assert!(matches!(dc_allocate(&s, &t, &pw, &DcOptions::default()), Err(Error::InfeasibleStart(_))));
    }

    #[test]
    fn ascent_and_feasibility_on_small_instance() {
        let (s, t) = small(12);
        let clock = Instant::now();
        let opts = DcOptions { kkt_tol: Some(1e-5), ..DcOptions::default() };
        let (pw, rep, trace) = dc_allocate_traced(&s, &t, &PowerAllocation::equal_source(&s), &opts, &clock).unwrap();
        let objs = rep.objective_trace();
        assert!(objs.windows(2).all(|w| w[1] >= w[0] - 1e-7), "{objs:?}");
        assert!(rep.final_objective > 0.0);
        for it in &trace {
            assert!(check_causality(&s, &t, &it.pw).unwrap().feasible);
            assert!(check_power_budget(&s, &it.pw).unwrap().feasible);
            assert_eq!(it.pw.p_s()[11], 0.0);
            assert_eq!(it.pw.p_r()[0], 0.0);
        }
        assert!(rep.final_kkt_residual.unwrap() <= 1e-5, "{rep:?}");
        assert_eq!(crate::model::secrecy_sum(&s, &t, &pw).unwrap(), rep.final_objective);
    }
}
