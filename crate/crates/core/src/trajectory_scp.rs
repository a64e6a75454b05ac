//! Trajectory optimization with the powers fixed, by sequential convex
//! programming.
//!
//! With slack variables `eps[n] <= eta[n]` and `tau[n] <= zeta[n]` standing in
//! for the squared horizontal distances to Bob and Eve, the only nonconvex
//! pieces left are the Bob and relay rates (convex in the squared distance,
//! so concave after a tangent cut) and the squared distances in the slack
//! couplings (convex, so bounded below by their tangent). Replacing them by
//! first-order lower bounds at the current trajectory gives a convex
//! subproblem whose feasible set is contained in the original one and whose
//! objective is a minorant touching the true objective at the zero step.
//!
//! The subproblem is solved in normalized units: lengths are divided by the
//! altitude `H` and SNR gains by `H^2`.

use std::f64::consts::LN_2;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, LastIterate, Result};
use crate::model::{check_causality, check_mobility, rate_profile, secrecy_sum, FEASIBILITY_TOL};
use crate::report::{rel_change_below, IterationRecord, RunReport, RunStatus, Stage};
use crate::scalar::{dist2, sq, Real};
use crate::solver::{kkt_residual, solve, Affine, SmoothConvexProgram, SmoothFn, SolveStatus, SolverOptions};
use crate::{PowerAllocation, Scenario, Trajectory};

/// First-order expansion of one air-to-ground link about a UAV position.
///
/// With `a = uav - node` and a horizontal displacement `d`, the squared
/// horizontal distance is `|a + d|^2`. The tangent of the convex map
/// `s -> log2(1 + gamma / (h2 + s))` at `s = |a|^2` gives the concave rate
/// bound `rate - kappa * (|d|^2 + 2 a.d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkExpansion<T> {
    pub anchor: [T; 2],
    pub gamma: T,
    pub h2: T,
    pub rate: T,
    pub kappa: T,
}

impl<T: Real> LinkExpansion<T> {
    /// Expansion for a UAV at `uav`, altitude `h`, ground node `node` and
    /// transmit SNR gain `gamma = p * ref_snr`.
    pub fn new(h: T, uav: [T; 2], node: [T; 2], gamma: T) -> Self {
        let anchor = [uav[0] - node[0], uav[1] - node[1]];
        let h2 = sq(h);
        let d2 = h2 + sq(anchor[0]) + sq(anchor[1]);
        let rate = (T::one() + gamma / d2).log2();
        let kappa = gamma / (T::lit(LN_2) * (d2 + gamma) * d2);
        Self { anchor, gamma, h2, rate, kappa }
    }

    fn lin(&self, d: [T; 2]) -> T {
        T::two() * (self.anchor[0] * d[0] + self.anchor[1] * d[1])
    }

    pub fn rate_lb(&self, d: [T; 2]) -> T {
        self.rate - self.kappa * (sq(d[0]) + sq(d[1]) + self.lin(d))
    }

    pub fn rate_lb_grad(&self, d: [T; 2]) -> [T; 2] {
        let c = -T::two() * self.kappa;
        [c * (d[0] + self.anchor[0]), c * (d[1] + self.anchor[1])]
    }

    /// The Hessian of the rate bound is this multiple of the identity.
    pub fn rate_lb_curvature(&self) -> T {
        -T::two() * self.kappa
    }

    pub fn rate_true(&self, d: [T; 2]) -> T {
        (T::one() + self.gamma / (self.h2 + self.dist2_true(d))).log2()
    }

    /// Tangent lower bound on the squared horizontal distance.
    pub fn dist2_lb(&self, d: [T; 2]) -> T {
        sq(self.anchor[0]) + sq(self.anchor[1]) + self.lin(d)
    }

    pub fn dist2_lb_grad(&self) -> [T; 2] {
        [T::two() * self.anchor[0], T::two() * self.anchor[1]]
    }

    pub fn dist2_true(&self, d: [T; 2]) -> T {
        sq(self.anchor[0] + d[0]) + sq(self.anchor[1] + d[1])
    }
}

/// Cached per-slot quantities at the current trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct TrajIterate {
    pub traj: Trajectory,
    pub d_ar: Vec<f64>,
    pub d_rd: Vec<f64>,
    pub r_relay: Vec<f64>,
    pub r_bob: Vec<f64>,
    pub r_eve: Vec<f64>,
    /// Squared horizontal distance to Eve, m^2.
    pub zeta: Vec<f64>,
    /// Squared horizontal distance to Bob, m^2.
    pub eta: Vec<f64>,
    pub objective: f64,
}

impl TrajIterate {
    pub fn new(scn: &Scenario, traj: &Trajectory, pw: &PowerAllocation) -> Result<Self> {
        let rp = rate_profile(scn, traj, pw)?;
        let h2 = sq(scn.altitude_h());
        let pts = traj.points();
        Ok(Self {
            traj: traj.clone(),
            d_ar: pts.iter().map(|&p| (h2 + dist2(p, scn.alice_xy())).sqrt()).collect(),
            d_rd: pts.iter().map(|&p| (h2 + dist2(p, scn.bob_xy())).sqrt()).collect(),
            zeta: pts.iter().map(|&p| dist2(p, scn.eve_xy())).collect(),
            eta: pts.iter().map(|&p| dist2(p, scn.bob_xy())).collect(),
            r_relay: rp.r_relay,
            r_bob: rp.r_bob,
            r_eve: rp.r_eve,
            objective: rp.secrecy_sum,
        })
    }
}

/// Subproblem unknowns in physical units. `eps[k]` and `tau[k]` belong to
/// slot `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubproblemVars {
    pub delta: Vec<f64>,
    pub xi: Vec<f64>,
    pub eps: Vec<f64>,
    pub tau: Vec<f64>,
}

/// Value, gradient and curvature (multiple of the identity) of a bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundEval {
    pub value: f64,
    pub grad: [f64; 2],
    pub curvature: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateBounds {
    pub relay: Vec<BoundEval>,
    pub bob: Vec<BoundEval>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceBounds {
    /// Lower bounds on the squared horizontal distance to Eve.
    pub zeta: Vec<BoundEval>,
    /// Lower bounds on the squared horizontal distance to Bob.
    pub eta: Vec<BoundEval>,
}

fn expansions(scn: &Scenario, it: &TrajIterate, pw: &PowerAllocation, node: [f64; 2], relay_side: bool) -> Vec<LinkExpansion<f64>> {
    let p = if relay_side { pw.p_s() } else { pw.p_r() };
    it.traj
        .points()
        .iter()
        .zip(p)
        .map(|(&xy, &p)| LinkExpansion::new(scn.altitude_h(), xy, node, p * scn.ref_snr()))
        .collect()
}

fn disp(v: &SubproblemVars, n: usize) -> [f64; 2] {
    [v.delta[n], v.xi[n]]
}

/// Concave lower bounds on the relay and Bob rates at the displaced points.
pub fn rate_lower_bounds(scn: &Scenario, it: &TrajIterate, v: &SubproblemVars, pw: &PowerAllocation) -> Result<RateBounds> {
    scn.check_len(pw.len())?;
    scn.check_len(v.delta.len())?;
    let eval = |e: &[LinkExpansion<f64>]| {
        e.iter()
            .enumerate()
            .map(|(n, e)| {
                let d = disp(v, n);
                BoundEval { value: e.rate_lb(d), grad: e.rate_lb_grad(d), curvature: e.rate_lb_curvature() }
            })
            .collect()
    };
    Ok(RateBounds {
        relay: eval(&expansions(scn, it, pw, scn.alice_xy(), true)),
        bob: eval(&expansions(scn, it, pw, scn.bob_xy(), false)),
    })
}

/// Affine lower bounds on the squared horizontal distances to Eve and Bob.
pub fn distance_lower_bounds(scn: &Scenario, it: &TrajIterate, v: &SubproblemVars) -> Result<DistanceBounds> {
    scn.check_len(v.delta.len())?;
    let eval = |node: [f64; 2]| {
        it.traj
            .points()
            .iter()
            .enumerate()
            .map(|(n, &xy)| {
                let e = LinkExpansion::new(scn.altitude_h(), xy, node, 0.0);
                BoundEval { value: e.dist2_lb(disp(v, n)), grad: e.dist2_lb_grad(), curvature: 0.0 }
            })
            .collect()
    };
    Ok(DistanceBounds { zeta: eval(scn.eve_xy()), eta: eval(scn.bob_xy()) })
}

/// `log2(1 + g / (1 + s))`, the received rate as a function of the
/// normalized squared horizontal distance `s`.
fn slack_rate(g: f64, s: f64) -> (f64, f64, f64) {
    let a = 1.0 + s;
    let b = a + g;
    ((g / a).ln_1p() / LN_2, -g / (LN_2 * a * b), g * (a + b) / (LN_2 * a * a * b * b))
}

/// Argument of a slack rate: a free slack variable, or the tangent bound on
/// the squared distance itself when that bound is degenerate.
#[derive(Debug, Clone, Copy)]
enum SlackArg {
    Var(usize),
    Pinned { u: usize, lb: LinkExpansion<f64> },
}

impl SlackArg {
    fn value(&self, x: &[f64]) -> f64 {
        match *self {
            SlackArg::Var(i) => x[i],
            SlackArg::Pinned { u, ref lb } => lb.dist2_lb([x[u], x[u + 1]]),
        }
    }

    fn indices(&self) -> Vec<usize> {
        match *self {
            SlackArg::Var(i) => vec![i],
            SlackArg::Pinned { u, .. } => vec![u, u + 1],
        }
    }

    /// Nonzero partial derivatives; the argument is affine in `x`.
    fn grad(&self) -> Vec<(usize, f64)> {
        match *self {
            SlackArg::Var(i) => vec![(i, 1.0)],
            SlackArg::Pinned { u, ref lb } => {
                let g = lb.dist2_lb_grad();
                vec![(u, g[0]), (u + 1, g[1])]
            }
        }
    }
}

enum Term {
    /// `sign * rate_lb` of a link at the slot whose displacement is `(u, u + 1)`.
    RateLb { u: usize, link: LinkExpansion<f64>, sign: f64 },
    /// `sign * log2(1 + g / (1 + s))` with `s` given by `arg`.
    Slack { arg: SlackArg, g: f64, sign: f64 },
}

/// Sum of separable surrogate terms.
struct TermSum {
    terms: Vec<Term>,
    support: Vec<usize>,
}

impl TermSum {
    fn new(terms: Vec<Term>) -> Self {
        let mut support: Vec<usize> = terms
            .iter()
            .flat_map(|t| match *t {
                Term::RateLb { u, .. } => vec![u, u + 1],
                Term::Slack { ref arg, .. } => arg.indices(),
            })
            .collect();
        support.sort_unstable();
        support.dedup();
        Self { terms, support }
    }
}

impl SmoothFn for TermSum {
    fn value(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| match *t {
                Term::RateLb { u, ref link, sign } => sign * link.rate_lb([x[u], x[u + 1]]),
                Term::Slack { ref arg, g, sign } => sign * slack_rate(g, arg.value(x)).0,
            })
            .sum()
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        for t in &self.terms {
            match *t {
                Term::RateLb { u, ref link, sign } => {
                    let g = link.rate_lb_grad([x[u], x[u + 1]]);
                    grad[u] += sign * g[0];
                    grad[u + 1] += sign * g[1];
                }
                Term::Slack { ref arg, g, sign } => {
                    let d1 = slack_rate(g, arg.value(x)).1;
                    for (i, v) in arg.grad() {
                        grad[i] += sign * d1 * v;
                    }
                }
            }
        }
    }

    fn add_hessian(&self, x: &[f64], weight: f64, hess: &mut DMatrix<f64>) {
        for t in &self.terms {
            match *t {
                Term::RateLb { u, ref link, sign } => {
                    let c = weight * sign * link.rate_lb_curvature();
                    hess[(u, u)] += c;
                    hess[(u + 1, u + 1)] += c;
                }
                Term::Slack { ref arg, g, sign } => {
                    let d2 = weight * sign * slack_rate(g, arg.value(x)).2;
                    let sg = arg.grad();
                    for &(i, vi) in &sg {
                        for &(j, vj) in &sg {
                            hess[(i, j)] += d2 * vi * vj;
                        }
                    }
                }
            }
        }
    }

    fn support(&self) -> Option<&[usize]> {
        Some(&self.support)
    }
}

/// `|offset + p_a - p_b|^2 - r2` where `p_a`, `p_b` are optional
/// displacement pairs starting at the given indices.
struct StepBall {
    a: Option<usize>,
    b: Option<usize>,
    offset: [f64; 2],
    r2: f64,
    support: Vec<usize>,
}

impl StepBall {
    fn new(a: Option<usize>, b: Option<usize>, offset: [f64; 2], r2: f64) -> Self {
        let support = a.into_iter().chain(b).flat_map(|i| [i, i + 1]).collect();
        Self { a, b, offset, r2, support }
    }

    fn diff(&self, x: &[f64]) -> [f64; 2] {
        let mut r = self.offset;
        if let Some(a) = self.a {
            r[0] += x[a];
            r[1] += x[a + 1];
        }
        if let Some(b) = self.b {
            r[0] -= x[b];
            r[1] -= x[b + 1];
        }
        r
    }
}

impl SmoothFn for StepBall {
    fn value(&self, x: &[f64]) -> f64 {
        let r = self.diff(x);
        r[0] * r[0] + r[1] * r[1] - self.r2
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let r = self.diff(x);
        for (idx, s) in [(self.a, 2.0), (self.b, -2.0)] {
            if let Some(i) = idx {
                grad[i] += s * r[0];
                grad[i + 1] += s * r[1];
            }
        }
    }

    fn add_hessian(&self, _x: &[f64], weight: f64, hess: &mut DMatrix<f64>) {
        let w = 2.0 * weight;
        for i in self.a.into_iter().chain(self.b) {
            hess[(i, i)] += w;
            hess[(i + 1, i + 1)] += w;
        }
        if let (Some(a), Some(b)) = (self.a, self.b) {
            for k in 0..2 {
                hess[(a + k, b + k)] -= w;
                hess[(b + k, a + k)] -= w;
            }
        }
    }

    fn support(&self) -> Option<&[usize]> {
        Some(&self.support)
    }
}

/// Anchors closer than this (normalized squared distance) have a flat
/// distance tangent; their slack is replaced by the tangent itself.
const PIN_DIST2: f64 = 1e-8;

/// Convex subproblem at one trajectory iterate.
///
/// Variable layout (normalized): displacements `(u, v)` of slot `n` at
/// `2n, 2n + 1`, followed by the free Bob and Eve slacks of slots with a
/// transmitting relay. Slots where the relay is silent, and anchors sitting
/// on top of Bob or Eve, have their slack pinned to the distance tangent.
pub struct Subproblem {
    pub program: SmoothConvexProgram,
    h: f64,
    n: usize,
    active: Vec<usize>,
    /// Bob and Eve slack of slot `k + 1`.
    slacks: Vec<[SlackArg; 2]>,
    eta_lb: Vec<LinkExpansion<f64>>,
    zeta_lb: Vec<LinkExpansion<f64>>,
}

impl Subproblem {
    pub fn active_slots(&self) -> &[usize] {
        &self.active
    }

    /// Physical subproblem variables from a solver vector.
    pub fn vars(&self, x: &[f64]) -> SubproblemVars {
        let h2 = self.h * self.h;
        SubproblemVars {
            delta: (0..self.n).map(|i| x[2 * i] * self.h).collect(),
            xi: (0..self.n).map(|i| x[2 * i + 1] * self.h).collect(),
            eps: self.slacks.iter().map(|s| s[0].value(x) * h2).collect(),
            tau: self.slacks.iter().map(|s| s[1].value(x) * h2).collect(),
        }
    }

    /// Solver vector from physical variables; pinned slacks are ignored.
    pub fn to_x(&self, v: &SubproblemVars) -> Vec<f64> {
        let h2 = self.h * self.h;
        let mut x = vec![0.0; self.program.dim];
        for i in 0..self.n {
            x[2 * i] = v.delta[i] / self.h;
            x[2 * i + 1] = v.xi[i] / self.h;
        }
        for (k, s) in self.slacks.iter().enumerate() {
            for (arg, val) in s.iter().zip([v.eps[k], v.tau[k]]) {
                if let SlackArg::Var(i) = *arg {
                    x[i] = val / h2;
                }
            }
        }
        x
    }

    /// Zero displacement with the slacks at the current squared distances.
    pub fn zero_step(&self) -> SubproblemVars {
        let zero = [0.0, 0.0];
        let h2 = self.h * self.h;
        SubproblemVars {
            delta: vec![0.0; self.n],
            xi: vec![0.0; self.n],
            eps: (1..self.n).map(|s| self.eta_lb[s].dist2_lb(zero) * h2).collect(),
            tau: (1..self.n).map(|s| self.zeta_lb[s].dist2_lb(zero) * h2).collect(),
        }
    }

    /// Surrogate secrecy objective (maximize convention).
    pub fn surrogate_secrecy(&self, v: &SubproblemVars) -> f64 {
        -self.program.objective.value(&self.to_x(v))
    }

    /// Largest `min(zeta_lb - tau, eta_lb - eps)` over free slacks, m^2.
    pub fn slack_tightness(&self, x: &[f64]) -> f64 {
        let h2 = self.h * self.h;
        self.slacks
            .iter()
            .enumerate()
            .filter_map(|(k, s)| {
                let d = [x[2 * (k + 1)], x[2 * (k + 1) + 1]];
                let gap = |arg: &SlackArg, lb: &LinkExpansion<f64>| match *arg {
                    SlackArg::Var(i) => Some(lb.dist2_lb(d) - x[i]),
                    SlackArg::Pinned { .. } => None,
                };
                let e = gap(&s[0], &self.eta_lb[k + 1]);
                let t = gap(&s[1], &self.zeta_lb[k + 1]);
                match (e, t) {
                    (None, None) => None,
                    (e, t) => Some(e.unwrap_or(f64::INFINITY).min(t.unwrap_or(f64::INFINITY)) * h2),
                }
            })
            .fold(0.0, f64::max)
    }

    fn step(&self, traj: &Trajectory, x: &[f64]) -> Trajectory {
        let pts = traj.points().iter().enumerate().map(|(i, p)| [p[0] + x[2 * i] * self.h, p[1] + x[2 * i + 1] * self.h]).collect();
        Trajectory::new(pts).expect("finite displacement")
    }
}

/// Builds the convex subproblem at `it`.
pub fn build_subproblem(scn: &Scenario, pw: &PowerAllocation, it: &TrajIterate) -> Result<Subproblem> {
    scn.check_len(pw.len())?;
    scn.check_len(it.traj.len())?;
    let n = scn.n_slots();
    let h = scn.altitude_h();
    let norm = |p: [f64; 2]| [p[0] / h, p[1] / h];
    let pts: Vec<[f64; 2]> = it.traj.points().iter().map(|&p| norm(p)).collect();
    let snr = scn.ref_snr() / (h * h);
    let link = |n: usize, node: [f64; 2], p: f64| LinkExpansion::new(1.0, pts[n], norm(node), p * snr);

    let active: Vec<usize> = (1..n).filter(|&s| pw.p_r()[s] > 0.0).collect();
    let eta_lb: Vec<_> = (0..n).map(|s| link(s, scn.bob_xy(), 0.0)).collect();
    let zeta_lb: Vec<_> = (0..n).map(|s| link(s, scn.eve_xy(), 0.0)).collect();
    let g_r = |s: usize| pw.p_r()[s] * snr;

    let mut dim = 2 * n;
    let mut free = Vec::new();
    let slacks: Vec<[SlackArg; 2]> = (1..n)
        .map(|s| {
            let pick = |lb: &LinkExpansion<f64>, dim: &mut usize, free: &mut Vec<(usize, usize, LinkExpansion<f64>)>| {
                if pw.p_r()[s] > 0.0 && lb.dist2_lb([0.0, 0.0]) > PIN_DIST2 {
                    free.push((*dim, s, *lb));
                    *dim += 1;
                    SlackArg::Var(*dim - 1)
                } else {
                    SlackArg::Pinned { u: 2 * s, lb: *lb }
                }
            };
            let e = pick(&eta_lb[s], &mut dim, &mut free);
            let t = pick(&zeta_lb[s], &mut dim, &mut free);
            [e, t]
        })
        .collect();

    let mut obj = Vec::new();
    for &s in &active {
        obj.push(Term::RateLb { u: 2 * s, link: link(s, scn.bob_xy(), pw.p_r()[s]), sign: -1.0 });
        obj.push(Term::Slack { arg: slacks[s - 1][1], g: g_r(s), sign: 1.0 });
    }
    let mut prog = SmoothConvexProgram::new(dim, Box::new(TermSum::new(obj)));

    let v2 = sq(scn.step_len() / h);
    if let Some(st) = scn.start_xy() {
        let st = norm(st);
        prog = prog.constraint(Box::new(StepBall::new(Some(0), None, [pts[0][0] - st[0], pts[0][1] - st[1]], v2)));
    }
    for s in 1..n {
        let off = [pts[s][0] - pts[s - 1][0], pts[s][1] - pts[s - 1][1]];
        prog = prog.constraint(Box::new(StepBall::new(Some(2 * s), Some(2 * (s - 1)), off, v2)));
    }
    if let Some(en) = scn.end_xy() {
        let en = norm(en);
        let l = n - 1;
        prog = prog.constraint(Box::new(StepBall::new(Some(2 * l), None, [pts[l][0] - en[0], pts[l][1] - en[1]], v2)));
    }

    for bob in [true, false] {
        for m in 1..n {
            let mut terms = Vec::new();
            for &s in active.iter().take_while(|&&s| s <= m) {
                terms.push(Term::Slack { arg: slacks[s - 1][if bob { 0 } else { 1 }], g: g_r(s), sign: 1.0 });
            }
            if terms.is_empty() {
                continue;
            }
            for j in (0..m).filter(|&j| pw.p_s()[j] > 0.0) {
                terms.push(Term::RateLb { u: 2 * j, link: link(j, scn.alice_xy(), pw.p_s()[j]), sign: -1.0 });
            }
            prog = prog.constraint(Box::new(TermSum::new(terms)));
        }
    }

    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); dim];
    let mut x0 = vec![0.0; dim];
    for &(idx, s, ref lb) in &free {
        let g = lb.dist2_lb_grad();
        let v = lb.dist2_lb([0.0, 0.0]);
        prog = prog.constraint(Box::new(Affine::new(-v, [(idx, 1.0), (2 * s, -g[0]), (2 * s + 1, -g[1])])));
        bounds[idx].0 = 0.0;
        x0[idx] = (v - 1e-3).max(0.5 * v);
    }
    prog = prog.bounds(bounds).start(x0);
    Ok(Subproblem { program: prog, h, n, active, slacks, eta_lb, zeta_lb })
}

/// Largest relay power scale `alpha` in `[0, 1]` making `(traj, pw)`
/// satisfy the causality constraints with no tolerance. Returns 1 when they
/// already hold exactly.
pub fn restore_feasibility_factor(scn: &Scenario, traj: &Trajectory, pw: &PowerAllocation) -> Result<f64> {
    let ok = |a: f64| -> Result<bool> { Ok(check_causality(scn, traj, &pw.with_relay_scaled(a))?.max_gap() <= 0.0) };
    if ok(1.0)? {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `pw` with the relay powers scaled down by [`restore_feasibility_factor`].
pub fn restore_feasibility(scn: &Scenario, traj: &Trajectory, pw: &PowerAllocation) -> Result<PowerAllocation> {
    let a = restore_feasibility_factor(scn, traj, pw)?;
    Ok(if a == 1.0 { pw.clone() } else { pw.with_relay_scaled(a) })
}

/// Straight flight between fixed endpoints at constant speed.
///
/// With one endpoint fixed the relay hovers there; with none it hovers
/// midway between Alice and Bob.
pub fn initial_trajectory(scn: &Scenario) -> Result<Trajectory> {
    let n = scn.n_slots();
    match (scn.start_xy(), scn.end_xy()) {
        (Some(s), Some(e)) => {
            let dist = dist2(s, e).sqrt();
            let reach = (n + 1) as f64 * scn.step_len();
            if dist > reach {
                return Err(Error::InfeasibleEndpoints { distance: dist, reach });
            }
            let pts = (0..n)
                .map(|i| {
                    let f = (i + 1) as f64 / (n + 1) as f64;
                    [s[0] + f * (e[0] - s[0]), s[1] + f * (e[1] - s[1])]
                })
                .collect();
            Ok(Trajectory::new(pts)?)
        }
        (Some(p), None) | (None, Some(p)) => Ok(Trajectory::constant(p, n)),
        (None, None) => {
            let (a, b) = (scn.alice_xy(), scn.bob_xy());
            Ok(Trajectory::constant([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])], n))
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScpOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub solver: SolverOptions,
}

impl Default for ScpOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-4, max_iter: 100, solver: SolverOptions::default() }
    }
}

/// Sequential convex programming from `traj_0` with the powers fixed.
pub fn scp_optimize(scn: &Scenario, pw: &PowerAllocation, traj_0: &Trajectory, opts: &ScpOptions) -> Result<(Trajectory, RunReport)> {
    let clock = Instant::now();
    let mut trace = Vec::new();
    let (traj, report) = scp_optimize_traced(scn, pw, traj_0, opts, &clock, &mut trace)?;
    Ok((traj, report))
}

/// [`scp_optimize`] that also pushes every accepted trajectory to `trace`.
pub fn scp_optimize_traced(
    scn: &Scenario,
    pw: &PowerAllocation,
    traj_0: &Trajectory,
    opts: &ScpOptions,
    clock: &Instant,
    trace: &mut Vec<Trajectory>,
) -> Result<(Trajectory, RunReport)> {
    scn.check_len(traj_0.len())?;
    scn.check_len(pw.len())?;
    let mob = check_mobility(scn, traj_0);
    if !mob.feasible {
        return Err(Error::InfeasibleStart(format!("mobility slack {:.3e} m^2", mob.min_slack())));
    }
    let cg = check_causality(scn, traj_0, pw)?;
    if !cg.feasible {
        return Err(Error::InfeasibleStart(format!("causality gap {:.3e} bits/s/Hz", cg.max_gap())));
    }

    let mut it = TrajIterate::new(scn, traj_0, pw)?;
    let mut report = RunReport::new(Stage::Trajectory, it.objective);
    if pw.p_r().iter().all(|&p| p == 0.0) {
        report.notes.push("relay silent; trajectory left unchanged".into());
        report.finish(RunStatus::Converged, it.objective, clock);
        return Ok((it.traj, report));
    }

    let mut status = RunStatus::MaxIter;
    for l in 0..opts.max_iter {
        let sub = build_subproblem(scn, pw, &it)?;
        let res = solve(&sub.program, &opts.solver);
        report.note_solver_residual(res.kkt_residual);
        if res.status != SolveStatus::Optimal {
            report.finish(RunStatus::SolverFailure, it.objective, clock);
            return Err(Error::SolverFailure { stage: "trajectory", status: res.status, last: Box::new(LastIterate::Trajectory(it.traj)) });
        }
        report.final_kkt_residual = Some(res.kkt_residual);
        report.zero_step_kkt_residual = Some(kkt_residual(&sub.program, &sub.to_x(&sub.zero_step()), &res.duals));

        let cand = sub.step(&it.traj, &res.x_opt);
        let mob = check_mobility(scn, &cand);
        let caus = check_causality(scn, &cand, pw)?;
        let cand_obj = secrecy_sum(scn, &cand, pw)?;
        if !mob.feasible || !caus.feasible || cand_obj <= it.objective {
            status = RunStatus::NoAscent;
            break;
        }
        let converged = rel_change_below(it.objective, cand_obj, opts.rel_tol);
        it = TrajIterate::new(scn, &cand, pw)?;
        report.iterations.push(IterationRecord {
            iteration: l + 1,
            objective: it.objective,
            surrogate_objective: Some(-res.objective_value),
            kkt_residual: Some(res.kkt_residual),
            solver_status: Some(res.status),
            solver_iterations: res.iterations + res.phase_one_iterations,
            feasible: caus.feasible_within(FEASIBILITY_TOL) && mob.feasible,
            max_causality_gap: caus.max_gap(),
            min_mobility_slack: Some(mob.min_slack()),
            slack_tightness: Some(sub.slack_tightness(&res.x_opt)),
            elapsed_s: clock.elapsed().as_secs_f64(),
        });
        trace.push(it.traj.clone());
        if converged {
            status = RunStatus::Converged;
            break;
        }
    }
    report.finish(status, it.objective, clock);
    Ok((it.traj, report))
}
