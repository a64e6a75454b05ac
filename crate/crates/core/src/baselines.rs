//! Benchmarks: a relay parked at the best fixed location, and a data ferry
//! that loads above Alice, flies to Bob and unloads.

use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::model::{channel_state, rate_profile};
use crate::power_dc::{dc_allocate, DcOptions};
use crate::report::{RunReport, RunStatus, Stage};
use crate::scalar::dist2;
use crate::{PowerAllocation, Scenario, Trajectory};

/// Rectangular grid of candidate hovering locations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    /// Number of local passes around the incumbent, each halving the step.
    pub refinements: usize,
}

impl GridSpec {
    /// 41 x 21 points over `[0, D] x [-3S, 3S]` with two refinements, where
    /// `D` is Bob's abscissa and `S` Eve's ordinate (the altitude if Eve sits
    /// on the x axis).
    pub fn reference(scn: &Scenario) -> Self {
        let d = scn.bob_xy()[0];
        let s = if scn.eve_xy()[1] != 0.0 { scn.eve_xy()[1].abs() } else { scn.altitude_h() };
        Self { x_range: (d.min(0.0), d.max(0.0)), y_range: (-3.0 * s, 3.0 * s), nx: 41, ny: 21, refinements: 2 }
    }

    pub fn single(p: [f64; 2]) -> Self {
        Self { x_range: (p[0], p[0]), y_range: (p[1], p[1]), nx: 1, ny: 1, refinements: 0 }
    }

    fn step(&self) -> [f64; 2] {
        let s = |(lo, hi): (f64, f64), n: usize| if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
        [s(self.x_range, self.nx), s(self.y_range, self.ny)]
    }

    fn points(&self) -> Vec<[f64; 2]> {
        let h = self.step();
        (0..self.nx)
            .flat_map(|i| (0..self.ny).map(move |j| [self.x_range.0 + i as f64 * h[0], self.y_range.0 + j as f64 * h[1]]))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StaticOutcome {
    pub location: [f64; 2],
    pub traj: Trajectory,
    pub pw: PowerAllocation,
    pub objective: f64,
    pub cells_evaluated: usize,
    pub cells_pruned: usize,
    pub report: RunReport,
}

/// Upper bound on the secrecy sum of any feasible allocation with the relay
/// hovering at `p`.
///
/// Delivered data cannot exceed what the relay loaded in the first `N - 1`
/// slots, which concavity bounds by the equal split of the source budget;
/// the same argument bounds Bob's total rate by the relay budget. With
/// constant gains `b > c` Eve's rate is at least `c / b` of Bob's.
pub fn static_upper_bound(scn: &Scenario, p: [f64; 2]) -> Result<f64> {
    let cs = channel_state(scn, &Trajectory::constant(p, scn.n_slots()))?;
    let (a, b, c) = (cs.gamma_ar[0], cs.gamma_rd[0], cs.gamma_re[0]);
    if c >= b {
        return Ok(0.0);
    }
    let m = (scn.n_slots() - 1) as f64;
    let loaded = m * (1.0 + a * scn.source_budget() / m).log2();
    let sent = m * (1.0 + b * scn.relay_budget() / m).log2();
    Ok((1.0 - c / b) * loaded.min(sent))
}

/// Best fixed hovering location over `grid` with the powers optimized by
/// the power stage. Cells whose [`static_upper_bound`] cannot beat the
/// incumbent are skipped; the bound is exact, so skipping never changes the
/// answer. Endpoint constraints of `scn` are ignored.
pub fn static_relay_best(scn: &Scenario, grid: &GridSpec, opts: &DcOptions) -> Result<StaticOutcome> {
    let clock = Instant::now();
    let scn = scn.with_free_endpoints();
    let n = scn.n_slots();
    let pw_0 = PowerAllocation::equal_source(&scn);
    let mut best: Option<(f64, [f64; 2], PowerAllocation)> = None;
    let (mut evaluated, mut pruned) = (0, 0);
    let mut visited: Vec<[f64; 2]> = Vec::new();
    let mut report = RunReport::new(Stage::StaticBaseline, 0.0);

    let mut sweep = |cands: Vec<[f64; 2]>, best: &mut Option<(f64, [f64; 2], PowerAllocation)>, report: &mut RunReport| -> Result<()> {
        let mut ranked = Vec::with_capacity(cands.len());
        for p in cands {
            if visited.contains(&p) {
                continue;
            }
            visited.push(p);
            ranked.push((static_upper_bound(&scn, p)?, p));
        }
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (bound, p) in ranked {
            if best.as_ref().is_some_and(|b| bound <= b.0) {
                pruned += 1;
                continue;
            }
            let traj = Trajectory::constant(p, n);
            let (pw, rep) = dc_allocate(&scn, &traj, &pw_0, opts)?;
            evaluated += 1;
            report.note_solver_residual(rep.worst_solver_residual);
            if best.as_ref().is_none_or(|b| rep.final_objective > b.0) {
                *best = Some((rep.final_objective, p, pw));
            }
        }
        Ok(())
    };

    sweep(grid.points(), &mut best, &mut report)?;
    let mut h = grid.step();
    for _ in 0..grid.refinements {
        h = [h[0] / 2.0, h[1] / 2.0];
        let c = best.as_ref().expect("grid is nonempty").1;
        let mut cands = Vec::new();
        for i in -1..=1 {
            for j in -1..=1 {
                cands.push([c[0] + i as f64 * h[0], c[1] + j as f64 * h[1]]);
            }
        }
        sweep(cands, &mut best, &mut report)?;
    }

    let (objective, location, pw) = best.expect("grid is nonempty");
    report.notes.push(format!("{evaluated} locations optimized, {pruned} skipped by the upper bound"));
    report.finish(RunStatus::Converged, objective, &clock);
    Ok(StaticOutcome {
        location,
        traj: Trajectory::constant(location, n),
        pw,
        objective,
        cells_evaluated: evaluated,
        cells_pruned: pruned,
        report,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FerryOutcome {
    pub traj: Trajectory,
    pub pw: PowerAllocation,
    pub objective: f64,
    /// Slots spent loading above Alice.
    pub load_slots: usize,
    pub transit_slots: usize,
    pub report: RunReport,
}

/// Slots needed to fly from Alice to Bob at full speed.
pub fn ferry_transit_slots(scn: &Scenario) -> usize {
    (dist2(scn.alice_xy(), scn.bob_xy()).sqrt() / scn.step_len()).ceil() as usize
}

/// The ferry plan for a given number of loading slots: hover above Alice
/// with equal source power, cross to Bob in silence, then hover above Bob
/// with equal relay power, lowered if needed so that neither Bob nor Eve
/// receives more than was loaded. Returns `None` when the phases do not fit.
pub fn ferry_plan(scn: &Scenario, load_slots: usize) -> Result<Option<(Trajectory, PowerAllocation)>> {
    let n = scn.n_slots();
    let m = ferry_transit_slots(scn);
    if load_slots == 0 || load_slots + m >= n {
        return Ok(None);
    }
    let send = n - load_slots - m;
    let (a, b) = (scn.alice_xy(), scn.bob_xy());
    let dist = dist2(a, b).sqrt();
    let mut xy = vec![a; load_slots];
    for j in 0..m {
        let f = (((j + 1) as f64) * scn.step_len()).min(dist) / dist;
        xy.push(if j + 1 == m { b } else { [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])] });
    }
    xy.extend(std::iter::repeat_n(b, send));
    let traj = Trajectory::new(xy)?;

    let cs = channel_state(scn, &traj)?;
    let p_s = scn.source_budget() / load_slots as f64;
    let loaded = load_slots as f64 * (1.0 + p_s * cs.gamma_ar[0]).log2();
    let g = cs.gamma_rd[n - 1].max(cs.gamma_re[n - 1]);
    let mut p_r = scn.relay_budget() / send as f64;
    if send as f64 * (1.0 + p_r * g).log2() > loaded {
        p_r = ((loaded / send as f64).exp2() - 1.0) / g * (1.0 - 1e-12);
    }
    let mut ps = vec![0.0; n];
    let mut pr = vec![0.0; n];
    ps[..load_slots].fill(p_s);
    pr[n - send..].fill(p_r);
    Ok(Some((traj, PowerAllocation::new(ps, pr)?)))
}

/// Best ferry plan over every feasible number of loading slots. When the
/// horizon is too short for the crossing the relay hovers above Alice in
/// silence and the objective is zero.
pub fn data_ferry(scn: &Scenario) -> Result<FerryOutcome> {
    let clock = Instant::now();
    let n = scn.n_slots();
    let m = ferry_transit_slots(scn);
    let mut report = RunReport::new(Stage::FerryBaseline, 0.0);
    let mut best: Option<(f64, usize, Trajectory, PowerAllocation)> = None;
    for n1 in 1..n.saturating_sub(m) {
        if let Some((traj, pw)) = ferry_plan(scn, n1)? {
            let obj = rate_profile(scn, &traj, &pw)?.secrecy_sum;
            if best.as_ref().is_none_or(|b| obj > b.0) {
                best = Some((obj, n1, traj, pw));
            }
        }
    }
    let mut out = match best {
        Some((objective, load_slots, traj, pw)) => {
            report.notes.push(format!("{load_slots} loading, {m} transit, {} sending slots", n - load_slots - m));
            FerryOutcome { traj, pw, objective, load_slots, transit_slots: m, report }
        }
        None => {
            report.notes.push(format!("horizon of {n} slots too short for a {m}-slot crossing with loading and sending"));
            let traj = Trajectory::constant(scn.alice_xy(), n);
            FerryOutcome { traj, pw: PowerAllocation::zeros(n), objective: 0.0, load_slots: 0, transit_slots: m, report }
        }
    };
    out.report.finish(RunStatus::Converged, out.objective, &clock);
    Ok(out)
}
