//! Primal-dual interior-point solver for small dense smooth convex programs
//!
//! ```txt
//!     minimize    f(x)
//!     subject to  g_k(x) <= 0,   k = 0..m
//!                 lo_i <= x_i <= hi_i
//! ```
//!
//! Each Newton step solves the perturbed KKT system with the multipliers
//! eliminated, so the linear system is the dense `dim x dim` matrix
//!
//! ```txt
//!     H = ∇²f + Σ λ_k ∇²g_k + Σ (λ_k / -g_k) ∇g_k ∇g_kᵀ
//! ```
//!
//! factored by Cholesky. The barrier parameter `μ` is reduced geometrically
//! once the iterate is centered. Infeasible starting points go through a
//! phase-I problem `min s  s.t.  g_k(x) <= s` solved with the same machinery.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// A twice differentiable scalar function of the decision vector.
pub trait SmoothFn: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    /// Writes the gradient into `grad`, which holds zeros on entry.
    fn gradient(&self, x: &[f64], grad: &mut [f64]);

    /// Adds `weight * ∇²f(x)` to `hess`.
    fn add_hessian(&self, x: &[f64], weight: f64, hess: &mut DMatrix<f64>);

    /// Indices outside of which the gradient is identically zero.
    fn support(&self) -> Option<&[usize]> {
        None
    }
}

type ValueFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type HessFn = Box<dyn Fn(&[f64], f64, &mut DMatrix<f64>) + Send + Sync>;

/// [`SmoothFn`] assembled from closures.
pub struct ClosureFn {
    value: ValueFn,
    gradient: GradFn,
    hessian: HessFn,
}

impl ClosureFn {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        hessian: impl Fn(&[f64], f64, &mut DMatrix<f64>) + Send + Sync + 'static,
    ) -> Self {
        Self { value: Box::new(value), gradient: Box::new(gradient), hessian: Box::new(hessian) }
    }
}

impl SmoothFn for ClosureFn {
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        (self.gradient)(x, grad)
    }
    fn add_hessian(&self, x: &[f64], weight: f64, hess: &mut DMatrix<f64>) {
        (self.hessian)(x, weight, hess)
    }
}

/// `c + Σ a_i x_i`.
#[derive(Debug, Clone)]
pub struct Affine {
    pub constant: f64,
    idx: Vec<usize>,
    coef: Vec<f64>,
}

impl Affine {
    pub fn new(constant: f64, terms: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let (idx, coef) = terms.into_iter().unzip();
        Self { constant, idx, coef }
    }
}

impl SmoothFn for Affine {
    fn value(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.coef).fold(self.constant, |acc, (&i, &a)| acc + a * x[i])
    }
    fn gradient(&self, _x: &[f64], grad: &mut [f64]) {
        for (&i, &a) in self.idx.iter().zip(&self.coef) {
            grad[i] += a;
        }
    }
    fn add_hessian(&self, _x: &[f64], _weight: f64, _hess: &mut DMatrix<f64>) {}
    fn support(&self) -> Option<&[usize]> {
        Some(&self.idx)
    }
}

/// Minimize-convention program description.
pub struct SmoothConvexProgram {
    pub dim: usize,
    pub objective: Box<dyn SmoothFn>,
    pub ineqs: Vec<Box<dyn SmoothFn>>,
    /// Per-variable `(lo, hi)`; infinite entries mean unbounded.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub strictly_feasible_start: Option<Vec<f64>>,
}

impl SmoothConvexProgram {
    pub fn new(dim: usize, objective: Box<dyn SmoothFn>) -> Self {
        Self { dim, objective, ineqs: Vec::new(), bounds: None, strictly_feasible_start: None }
    }

    pub fn constraint(mut self, g: Box<dyn SmoothFn>) -> Self {
        self.ineqs.push(g);
        self
    }

    pub fn bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn start(mut self, x0: Vec<f64>) -> Self {
        self.strictly_feasible_start = Some(x0);
        self
    }

    fn bound(&self, i: usize) -> (f64, f64) {
        self.bounds.as_ref().map_or((f64::NEG_INFINITY, f64::INFINITY), |b| b[i])
    }

    /// Largest constraint value (including bounds) at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let view = MainView::new(self);
        (0..view.n_cons()).map(|k| view.con_value(k, x)).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Lagrange multipliers. `lower[i]`/`upper[i]` are zero for absent bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Multipliers {
    pub ineq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Multipliers {
    pub fn zeros(prog: &SmoothConvexProgram) -> Self {
        Self { ineq: vec![0.0; prog.ineqs.len()], lower: vec![0.0; prog.dim], upper: vec![0.0; prog.dim] }
    }

    /// Multipliers for a program without bounds.
    pub fn ineq_only(ineq: Vec<f64>, dim: usize) -> Self {
        Self { ineq, lower: vec![0.0; dim], upper: vec![0.0; dim] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverResult {
    pub x_opt: Vec<f64>,
    pub duals: Multipliers,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub phase_one_iterations: usize,
    pub objective_value: f64,
    /// Objective at the end of each barrier stage.
    pub stage_objectives: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    pub mu_factor: f64,
    pub fraction_to_boundary: f64,
    /// Phase-I stops once every constraint is below `-phase_one_margin`.
    pub phase_one_margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 300, mu_init: 1.0, mu_factor: 0.2, fraction_to_boundary: 0.995, phase_one_margin: 1e-4 }
    }
}

/// Constraint access shared by the main problem and its phase-I problem.
trait View {
    fn dim(&self) -> usize;
    fn n_cons(&self) -> usize;
    fn obj_value(&self, x: &[f64]) -> f64;
    fn obj_gradient(&self, x: &[f64], grad: &mut [f64]);
    fn obj_add_hessian(&self, x: &[f64], w: f64, h: &mut DMatrix<f64>);
    fn con_value(&self, k: usize, x: &[f64]) -> f64;
    /// Sparse gradient of constraint `k`, written into `out` (cleared first).
    fn con_gradient(&self, k: usize, x: &[f64], scratch: &mut [f64], out: &mut Vec<(usize, f64)>);
    fn con_add_hessian(&self, k: usize, x: &[f64], w: f64, h: &mut DMatrix<f64>);
}

enum Con {
    General(usize),
    Lower(usize, f64),
    Upper(usize, f64),
}

struct MainView<'a> {
    prog: &'a SmoothConvexProgram,
    cons: Vec<Con>,
}

impl<'a> MainView<'a> {
    fn new(prog: &'a SmoothConvexProgram) -> Self {
        let mut cons: Vec<Con> = (0..prog.ineqs.len()).map(Con::General).collect();
        for i in 0..prog.dim {
            let (lo, hi) = prog.bound(i);
            if lo.is_finite() {
                cons.push(Con::Lower(i, lo));
            }
            if hi.is_finite() {
                cons.push(Con::Upper(i, hi));
            }
        }
        Self { prog, cons }
    }

    fn split_multipliers(&self, lambda: &[f64]) -> Multipliers {
        let mut m = Multipliers::zeros(self.prog);
        for (c, &l) in self.cons.iter().zip(lambda) {
            match *c {
                Con::General(k) => m.ineq[k] = l,
                Con::Lower(i, _) => m.lower[i] = l,
                Con::Upper(i, _) => m.upper[i] = l,
            }
        }
        m
    }

    fn join_multipliers(&self, m: &Multipliers) -> Vec<f64> {
        self.cons
            .iter()
            .map(|c| match *c {
                Con::General(k) => m.ineq[k],
                Con::Lower(i, _) => m.lower[i],
                Con::Upper(i, _) => m.upper[i],
            })
            .collect()
    }
}

fn gather(f: &dyn SmoothFn, x: &[f64], scratch: &mut [f64], out: &mut Vec<(usize, f64)>) {
    out.clear();
    f.gradient(x, scratch);
    match f.support() {
        Some(idx) => {
            for &i in idx {
                if scratch[i] != 0.0 {
                    out.push((i, scratch[i]));
                    scratch[i] = 0.0;
                }
            }
        }
        None => {
            for (i, v) in scratch.iter_mut().enumerate() {
                if *v != 0.0 {
                    out.push((i, *v));
                    *v = 0.0;
                }
            }
        }
    }
}

impl View for MainView<'_> {
    fn dim(&self) -> usize {
        self.prog.dim
    }
    fn n_cons(&self) -> usize {
        self.cons.len()
    }
    fn obj_value(&self, x: &[f64]) -> f64 {
        self.prog.objective.value(x)
    }
    fn obj_gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        self.prog.objective.gradient(x, grad)
    }
    fn obj_add_hessian(&self, x: &[f64], w: f64, h: &mut DMatrix<f64>) {
        self.prog.objective.add_hessian(x, w, h)
    }
    fn con_value(&self, k: usize, x: &[f64]) -> f64 {
        match self.cons[k] {
            Con::General(j) => self.prog.ineqs[j].value(x),
            Con::Lower(i, lo) => lo - x[i],
            Con::Upper(i, hi) => x[i] - hi,
        }
    }
    fn con_gradient(&self, k: usize, x: &[f64], scratch: &mut [f64], out: &mut Vec<(usize, f64)>) {
        match self.cons[k] {
            Con::General(j) => gather(self.prog.ineqs[j].as_ref(), x, scratch, out),
            Con::Lower(i, _) => {
                out.clear();
                out.push((i, -1.0));
            }
            Con::Upper(i, _) => {
                out.clear();
                out.push((i, 1.0));
            }
        }
    }
    fn con_add_hessian(&self, k: usize, x: &[f64], w: f64, h: &mut DMatrix<f64>) {
        if let Con::General(j) = self.cons[k] {
            self.prog.ineqs[j].add_hessian(x, w, h)
        }
    }
}

/// `min s  s.t.  g_k(x) - s <= 0,  s >= -floor`; variable `s` is last.
/// Constraints flagged in `hard` are kept as they are.
struct PhaseOneView<'a> {
    inner: MainView<'a>,
    floor: f64,
    hard: Vec<bool>,
}

impl View for PhaseOneView<'_> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }
    fn n_cons(&self) -> usize {
        self.inner.n_cons() + 1
    }
    fn obj_value(&self, x: &[f64]) -> f64 {
        x[x.len() - 1]
    }
    fn obj_gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        grad[x.len() - 1] = 1.0;
    }
    fn obj_add_hessian(&self, _x: &[f64], _w: f64, _h: &mut DMatrix<f64>) {}
    fn con_value(&self, k: usize, x: &[f64]) -> f64 {
        let n = self.inner.dim();
        if k == self.inner.n_cons() {
            -self.floor - x[n]
        } else if self.hard[k] {
            self.inner.con_value(k, &x[..n])
        } else {
            self.inner.con_value(k, &x[..n]) - x[n]
        }
    }
    fn con_gradient(&self, k: usize, x: &[f64], scratch: &mut [f64], out: &mut Vec<(usize, f64)>) {
        let n = self.inner.dim();
        if k == self.inner.n_cons() {
            out.clear();
            out.push((n, -1.0));
        } else {
            self.inner.con_gradient(k, &x[..n], &mut scratch[..n], out);
            if !self.hard[k] {
                out.push((n, -1.0));
            }
        }
    }
    fn con_add_hessian(&self, k: usize, x: &[f64], w: f64, h: &mut DMatrix<f64>) {
        // inner callbacks only touch the leading `n x n` block
        if k < self.inner.n_cons() {
            self.inner.con_add_hessian(k, &x[..self.inner.dim()], w, h);
        }
    }
}

struct Outcome {
    x: Vec<f64>,
    lambda: Vec<f64>,
    status: SolveStatus,
    residual: f64,
    iterations: usize,
    stage_objectives: Vec<f64>,
}

fn residual_of<V: View>(view: &V, x: &[f64], lambda: &[f64], g: &[f64], scratch: &mut [f64], sp: &mut Vec<(usize, f64)>) -> f64 {
    let mut stat = vec![0.0; view.dim()];
    view.obj_gradient(x, &mut stat);
    let mut r: f64 = 0.0;
    for k in 0..view.n_cons() {
        view.con_gradient(k, x, scratch, sp);
        for &(i, v) in sp.iter() {
            stat[i] += lambda[k] * v;
        }
        r = r.max(g[k].max(0.0)).max((lambda[k] * g[k]).abs()).max((-lambda[k]).max(0.0));
    }
    stat.iter().fold(r, |acc, v| acc.max(v.abs()))
}

/// Cholesky with `λI` regularization doubled from 1e-10 until it succeeds.
fn regularized_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let mut reg = 1e-10;
    while reg < 1e12 {
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += reg;
        }
        if let Some(ch) = shifted.cholesky() {
            return Some(ch.solve(rhs));
        }
        reg *= 2.0;
    }
    None
}

/// Interior-point iterations from a strictly feasible `x0`. `early_exit` is
/// polled after every accepted step.
fn interior_point<V: View>(view: &V, x0: Vec<f64>, opts: &SolverOptions, early_exit: &dyn Fn(&[f64], &[f64]) -> bool) -> Outcome {
    let n = view.dim();
    let m = view.n_cons();
    let mut x = x0;
    let mut scratch = vec![0.0; n];
    let mut sp: Vec<(usize, f64)> = Vec::new();
    let mut g: Vec<f64> = (0..m).map(|k| view.con_value(k, &x)).collect();
    let mut mu = opts.mu_init;
    let mu_min = 0.05 * opts.tol;
    let mut lambda: Vec<f64> = g.iter().map(|&gk| mu / -gk).collect();
    let mut stage_objectives = Vec::new();
    let mut grads: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let mut hess = DMatrix::<f64>::zeros(n, n);
    let mut grad_f = vec![0.0; n];

    let finish = |x: Vec<f64>, lambda: Vec<f64>, status, residual, iterations, stage_objectives| Outcome {
        x,
        lambda,
        status,
        residual,
        iterations,
        stage_objectives,
    };

    for iter in 0..opts.max_iter {
        view.obj_gradient(&x, &mut grad_f);
        for (k, gk) in grads.iter_mut().enumerate() {
            view.con_gradient(k, &x, &mut scratch, gk);
        }
        // stationarity and complementarity
        let mut stat = grad_f.clone();
        for k in 0..m {
            for &(i, v) in &grads[k] {
                stat[i] += lambda[k] * v;
            }
        }
        let stat_norm = stat.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let comp = (0..m).fold(0.0f64, |a, k| a.max((lambda[k] * g[k]).abs()));
        let residual = stat_norm.max(comp);
        if residual <= opts.tol {
            return finish(x, lambda, SolveStatus::Optimal, residual, iter, stage_objectives);
        }
        // barrier subproblem error; shrink mu once it is O(mu)
        let centering = (0..m).fold(0.0f64, |a, k| a.max((lambda[k] * -g[k] - mu).abs()));
        if mu > mu_min && stat_norm.max(centering) <= 10.0 * mu {
            stage_objectives.push(view.obj_value(&x));
            mu = (mu * opts.mu_factor).max(mu_min);
        }

        hess.fill(0.0);
        view.obj_add_hessian(&x, 1.0, &mut hess);
        let mut rhs = DVector::from_iterator(n, grad_f.iter().map(|v| -v));
        for k in 0..m {
            // lagging multipliers would understate the curvature of a near-active constraint
            view.con_add_hessian(k, &x, lambda[k].max(mu / -g[k]), &mut hess);
            let w = lambda[k] / -g[k];
            let gk = &grads[k];
            let data = hess.as_mut_slice();
            for &(j, vj) in gk {
                let col = &mut data[j * n..(j + 1) * n];
                let s = w * vj;
                for &(i, vi) in gk {
                    col[i] += s * vi;
                }
                rhs[j] -= mu * vj / -g[k];
            }
        }
        let Some(dx) = regularized_solve(&hess, &rhs) else {
            return finish(x, lambda, SolveStatus::NumericalFailure, residual, iter, stage_objectives);
        };
        // Δλ_k = -(λ_k/g_k) ∇g_kᵀΔx - λ_k - μ/g_k
        let dlambda: Vec<f64> = (0..m)
            .map(|k| {
                let gdx: f64 = grads[k].iter().map(|&(i, v)| v * dx[i]).sum();
                -(lambda[k] / g[k]) * gdx - lambda[k] - mu / g[k]
            })
            .collect();
        // separate dual step so a single multiplier cannot jam the primal step
        let mut dual_step = 1.0f64;
        for k in 0..m {
            if dlambda[k] < 0.0 {
                dual_step = dual_step.min(-opts.fraction_to_boundary * lambda[k] / dlambda[k]);
            }
        }
        let mut step = 1.0f64;
        let barrier = |x: &[f64], g: &[f64]| view.obj_value(x) - mu * g.iter().map(|&gk| (-gk).ln()).sum::<f64>();
        let phi0 = barrier(&x, &g);
        let slope = -rhs.dot(&dx);
        let mut accepted = None;
        let mut trial = vec![0.0; n];
        while step > 1e-14 {
            for i in 0..n {
                trial[i] = x[i] + step * dx[i];
            }
            let g_trial: Vec<f64> = (0..m).map(|k| view.con_value(k, &trial)).collect();
            // keep a fraction of the distance to every boundary
            let interior = g_trial
                .iter()
                .zip(&g)
                .all(|(&gt, &g0)| gt.is_finite() && gt <= (1.0 - opts.fraction_to_boundary) * g0);
            if interior {
                let phi = barrier(&trial, &g_trial);
                if phi.is_finite() && phi <= phi0 + 1e-4 * step * slope + 1e-13 * phi0.abs().max(1.0) {
                    accepted = Some(g_trial);
                    break;
                }
            }
            step *= 0.5;
        }
        let Some(g_new) = accepted else {
            return finish(x, lambda, SolveStatus::NumericalFailure, residual, iter, stage_objectives);
        };
        x.copy_from_slice(&trial);
        g = g_new;
        for k in 0..m {
            // keep each multiplier within a bounded factor of mu / -g
            let centre = mu / -g[k];
            lambda[k] = (lambda[k] + dual_step * dlambda[k]).clamp(centre / 1e10, centre * 1e10);
        }
        if early_exit(&x, &g) {
            let r = residual_of(view, &x, &lambda, &g, &mut scratch, &mut sp);
            return finish(x, lambda, SolveStatus::Optimal, r, iter + 1, stage_objectives);
        }
    }
    let r = residual_of(view, &x, &lambda, &g, &mut scratch, &mut sp);
    let status = if r <= opts.tol { SolveStatus::Optimal } else { SolveStatus::MaxIter };
    finish(x, lambda, status, r, opts.max_iter, stage_objectives)
}

/// Solves `prog`. Deterministic for identical inputs.
pub fn solve(prog: &SmoothConvexProgram, opts: &SolverOptions) -> SolverResult {
    let view = MainView::new(prog);
    let n = prog.dim;
    let mut x0 = prog.strictly_feasible_start.clone().unwrap_or_else(|| default_start(prog));
    assert_eq!(x0.len(), n, "start point has wrong dimension");
    let g0: Vec<f64> = (0..view.n_cons()).map(|k| view.con_value(k, &x0)).collect();
    let mut phase_one_iterations = 0;
    let max_g = g0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max_g < 0.0) || g0.iter().any(|v| !v.is_finite()) {
        if !max_g.is_finite() {
            return failed(prog, x0, SolveStatus::NumericalFailure, 0);
        }
        // phase I; bounds already strictly satisfied stay hard so callbacks
        // are never evaluated outside them
        let hard: Vec<bool> = view.cons.iter().zip(&g0).map(|(c, &g)| !matches!(c, Con::General(_)) && g < 0.0).collect();
        let p1 = PhaseOneView { inner: MainView::new(prog), floor: 1.0, hard };
        let mut z0 = x0.clone();
        z0.push(max_g + 1.0);
        let margin = opts.phase_one_margin;
        let stop = |z: &[f64], _g: &[f64]| {
            let x = &z[..n];
            (0..view.n_cons()).all(|k| view.con_value(k, x) <= -margin)
        };
        let p1_opts = SolverOptions { max_iter: opts.max_iter, ..*opts };
        let out = interior_point(&p1, z0, &p1_opts, &stop);
        phase_one_iterations = out.iterations;
        let x1 = out.x[..n].to_vec();
        let worst = (0..view.n_cons()).map(|k| view.con_value(k, &x1)).fold(f64::NEG_INFINITY, f64::max);
        if !(worst < 0.0) {
            let status = if worst >= opts.tol && out.status == SolveStatus::Optimal {
                SolveStatus::Infeasible
            } else {
                SolveStatus::NumericalFailure
            };
            return failed(prog, x1, status, phase_one_iterations);
        }
        x0 = x1;
    }
    let out = interior_point(&view, x0, opts, &|_, _| false);
    let duals = view.split_multipliers(&out.lambda);
    SolverResult {
        objective_value: prog.objective.value(&out.x),
        x_opt: out.x,
        duals,
        status: out.status,
        kkt_residual: out.residual,
        iterations: out.iterations,
        phase_one_iterations,
        stage_objectives: out.stage_objectives,
    }
}

fn default_start(prog: &SmoothConvexProgram) -> Vec<f64> {
    (0..prog.dim)
        .map(|i| match prog.bound(i) {
            (lo, hi) if lo.is_finite() && hi.is_finite() => 0.5 * (lo + hi),
            (lo, _) if lo.is_finite() => lo + 1.0,
            (_, hi) if hi.is_finite() => hi - 1.0,
            _ => 0.0,
        })
        .collect()
}

fn failed(prog: &SmoothConvexProgram, x: Vec<f64>, status: SolveStatus, iterations: usize) -> SolverResult {
    let duals = Multipliers::zeros(prog);
    let kkt_residual = kkt_residual(prog, &x, &duals);
    SolverResult {
        objective_value: prog.objective.value(&x),
        x_opt: x,
        duals,
        status,
        kkt_residual,
        iterations: 0,
        phase_one_iterations: iterations,
        stage_objectives: Vec::new(),
    }
}

/// `max(‖∇f + Σλ∇g‖∞, max g₊, max |λ g|, max (-λ)₊)`, bounds included.
pub fn kkt_residual(prog: &SmoothConvexProgram, x: &[f64], duals: &Multipliers) -> f64 {
    let view = MainView::new(prog);
    let lambda = view.join_multipliers(duals);
    let g: Vec<f64> = (0..view.n_cons()).map(|k| view.con_value(k, x)).collect();
    let mut scratch = vec![0.0; prog.dim];
    let mut sp = Vec::new();
    residual_of(&view, x, &lambda, &g, &mut scratch, &mut sp)
}

/// Worst relative disagreement between analytic derivatives and central
/// differences, per callback.
#[derive(Debug, Clone, Serialize)]
pub struct DerivativeReport {
    pub objective: f64,
    pub ineqs: Vec<f64>,
}

impl DerivativeReport {
    pub fn max_error(&self) -> f64 {
        self.ineqs.iter().copied().fold(self.objective, f64::max)
    }
}

/// Relative error `‖analytic - fd‖∞ / max(1, ‖fd‖∞)` over gradient and
/// Hessian, maximized over the two.
pub fn derivative_error(f: &dyn SmoothFn, x: &[f64], h: f64) -> f64 {
    let n = x.len();
    let mut grad = vec![0.0; n];
    f.gradient(x, &mut grad);
    let mut hess = DMatrix::zeros(n, n);
    f.add_hessian(x, 1.0, &mut hess);
    let mut xp = x.to_vec();
    let mut fd_grad = vec![0.0; n];
    let mut fd_hess = DMatrix::zeros(n, n);
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    for j in 0..n {
        xp[j] = x[j] + h;
        let fp = f.value(&xp);
        gp.fill(0.0);
        f.gradient(&xp, &mut gp);
        xp[j] = x[j] - h;
        let fm = f.value(&xp);
        gm.fill(0.0);
        f.gradient(&xp, &mut gm);
        xp[j] = x[j];
        fd_grad[j] = (fp - fm) / (2.0 * h);
        for i in 0..n {
            fd_hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let rel = |a: &[f64], b: &[f64]| {
        let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        a.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs())) / scale
    };
    rel(&grad, &fd_grad).max(rel(hess.as_slice(), fd_hess.as_slice()))
}

pub fn verify_derivatives(prog: &SmoothConvexProgram, x: &[f64], h: f64) -> DerivativeReport {
    DerivativeReport {
        objective: derivative_error(prog.objective.as_ref(), x, h),
        ineqs: prog.ineqs.iter().map(|g| derivative_error(g.as_ref(), x, h)).collect(),
    }
}
