//! Problem instance, free-space channel and rate bookkeeping, and the
//! feasibility predicates of the secrecy-rate maximization problem.
//!
//! Slots are indexed from zero in code. Slot `0` is the first slot (the
//! relay cannot transmit in it) and slot `N - 1` is the last one (the source
//! cannot transmit in it).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{dist2, sq, Real};

/// Default absolute tolerance on rate-difference and squared-distance
/// constraints.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid power allocation: {0}")]
    InvalidPower(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("dimension mismatch: expected {expected} slots, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Mutable description of a scenario; [`ScenarioBuilder::build`] validates it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBuilder<T> {
    pub alice_xy: [T; 2],
    pub bob_xy: [T; 2],
    pub eve_xy: [T; 2],
    pub altitude_h: T,
    pub n_slots: usize,
    pub slot_len: T,
    pub start_xy: Option<[T; 2]>,
    pub end_xy: Option<[T; 2]>,
    pub v_max: T,
    pub ref_snr: T,
    pub p_bar_s: T,
    pub p_bar_r: T,
}

impl<T: Real> ScenarioBuilder<T> {
    /// The evaluation setup: Bob at (2000, 0), Eve at (1000, 100), 100 m
    /// altitude, 50 m/s, 10 dBm average powers, 80 dB reference SNR, and a
    /// 100 s horizon of 1 s slots with free endpoints.
    pub fn reference() -> Self {
        Self {
            alice_xy: [T::zero(); 2],
            bob_xy: [T::lit(2000.0), T::zero()],
            eve_xy: [T::lit(1000.0), T::lit(100.0)],
            altitude_h: T::lit(100.0),
            n_slots: 100,
            slot_len: T::one(),
            start_xy: None,
            end_xy: None,
            v_max: T::lit(50.0),
            ref_snr: T::lit(1e8),
            p_bar_s: T::lit(0.01),
            p_bar_r: T::lit(0.01),
        }
    }

    /// Sets the horizon `T` keeping the slot length.
    pub fn horizon(mut self, horizon_s: T) -> Self {
        let n = (horizon_s / self.slot_len).round();
        self.n_slots = n.to_usize().unwrap_or(0);
        self
    }

    pub fn endpoints(mut self, start: Option<[T; 2]>, end: Option<[T; 2]>) -> Self {
        self.start_xy = start;
        self.end_xy = end;
        self
    }

    pub fn build(self) -> Result<Scenario<T>, ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidScenario(msg.to_string()));
        let finite2 = |p: [T; 2]| p[0].is_finite() && p[1].is_finite();
        if !(finite2(self.alice_xy) && finite2(self.bob_xy) && finite2(self.eve_xy)) {
            return bad("node coordinates must be finite");
        }
        if self.start_xy.is_some_and(|p| !finite2(p)) || self.end_xy.is_some_and(|p| !finite2(p)) {
            return bad("endpoint coordinates must be finite");
        }
        if self.n_slots < 2 {
            return bad("n_slots must be at least 2");
        }
        let positive = |v: T| v.is_finite() && v > T::zero();
        if !positive(self.slot_len) {
            return bad("slot_len must be positive");
        }
        if !positive(self.altitude_h) {
            return bad("altitude_h must be positive");
        }
        if !positive(self.v_max) {
            return bad("v_max must be positive");
        }
        if !positive(self.ref_snr) {
            return bad("ref_snr must be positive");
        }
        let nonneg = |v: T| v.is_finite() && v >= T::zero();
        if !nonneg(self.p_bar_s) || !nonneg(self.p_bar_r) {
            return bad("average power limits must be nonnegative");
        }
        if self.alice_xy == self.bob_xy {
            return bad("bob_xy must differ from alice_xy");
        }
        Ok(Scenario { b: self })
    }
}

/// Immutable problem instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Scenario<T> {
    b: ScenarioBuilder<T>,
}

impl<T: Real> Scenario<T> {
    pub fn alice_xy(&self) -> [T; 2] {
        self.b.alice_xy
    }
    pub fn bob_xy(&self) -> [T; 2] {
        self.b.bob_xy
    }
    pub fn eve_xy(&self) -> [T; 2] {
        self.b.eve_xy
    }
    pub fn altitude_h(&self) -> T {
        self.b.altitude_h
    }
    pub fn n_slots(&self) -> usize {
        self.b.n_slots
    }
    pub fn slot_len(&self) -> T {
        self.b.slot_len
    }
    pub fn horizon(&self) -> T {
        self.b.slot_len * T::from_usize(self.b.n_slots).unwrap()
    }
    pub fn start_xy(&self) -> Option<[T; 2]> {
        self.b.start_xy
    }
    pub fn end_xy(&self) -> Option<[T; 2]> {
        self.b.end_xy
    }
    pub fn v_max(&self) -> T {
        self.b.v_max
    }
    /// Per-slot travel budget `V = v_max * slot_len`.
    pub fn step_len(&self) -> T {
        self.b.v_max * self.b.slot_len
    }
    pub fn ref_snr(&self) -> T {
        self.b.ref_snr
    }
    pub fn p_bar_s(&self) -> T {
        self.b.p_bar_s
    }
    pub fn p_bar_r(&self) -> T {
        self.b.p_bar_r
    }
    /// Total source energy budget `N * p_bar_s` (in slot units).
    pub fn source_budget(&self) -> T {
        T::from_usize(self.b.n_slots).unwrap() * self.b.p_bar_s
    }
    pub fn relay_budget(&self) -> T {
        T::from_usize(self.b.n_slots).unwrap() * self.b.p_bar_r
    }

    pub fn to_builder(&self) -> ScenarioBuilder<T> {
        self.b.clone()
    }

    /// Same scenario with both endpoints released.
    pub fn with_free_endpoints(&self) -> Self {
        let mut b = self.b.clone();
        b.start_xy = None;
        b.end_xy = None;
        Scenario { b }
    }

    pub fn check_len(&self, got: usize) -> Result<(), ModelError> {
        if got != self.b.n_slots {
            return Err(ModelError::DimensionMismatch { expected: self.b.n_slots, got });
        }
        Ok(())
    }
}

/// Horizontal UAV positions, one per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    xy: Vec<[T; 2]>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(xy: Vec<[T; 2]>) -> Result<Self, ModelError> {
        if xy.is_empty() {
            return Err(ModelError::InvalidTrajectory("empty trajectory".into()));
        }
        if xy.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(ModelError::InvalidTrajectory("non-finite coordinate".into()));
        }
        Ok(Self { xy })
    }

    /// Hover at `p` for `n` slots.
    pub fn constant(p: [T; 2], n: usize) -> Self {
        Self { xy: vec![p; n] }
    }

    pub fn len(&self) -> usize {
        self.xy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xy.is_empty()
    }

    pub fn points(&self) -> &[[T; 2]] {
        &self.xy
    }

    pub fn point(&self, n: usize) -> [T; 2] {
        self.xy[n]
    }
}

/// Per-slot source and relay transmit powers in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation<T> {
    p_s: Vec<T>,
    p_r: Vec<T>,
}

impl<T: Real> PowerAllocation<T> {
    /// Validates nonnegativity, finiteness and the structural zeros
    /// `p_s[N-1] = 0`, `p_r[0] = 0`.
    pub fn new(p_s: Vec<T>, p_r: Vec<T>) -> Result<Self, ModelError> {
        if p_s.len() != p_r.len() {
            return Err(ModelError::DimensionMismatch { expected: p_s.len(), got: p_r.len() });
        }
        if p_s.len() < 2 {
            return Err(ModelError::InvalidPower("need at least two slots".into()));
        }
        for (name, v) in [("p_s", &p_s), ("p_r", &p_r)] {
            if let Some(bad) = v.iter().find(|p| !p.is_finite() || **p < T::zero()) {
                return Err(ModelError::InvalidPower(format!("{name} entry {bad:?} is negative or not finite")));
            }
        }
        if p_s[p_s.len() - 1] != T::zero() {
            return Err(ModelError::InvalidPower("source power in the last slot must be zero".into()));
        }
        if p_r[0] != T::zero() {
            return Err(ModelError::InvalidPower("relay power in the first slot must be zero".into()));
        }
        Ok(Self { p_s, p_r })
    }

    pub fn zeros(n: usize) -> Self {
        Self { p_s: vec![T::zero(); n], p_r: vec![T::zero(); n] }
    }

    /// Source spends its whole budget evenly over slots `0..N-1`; relay silent.
    pub fn equal_source(scn: &Scenario<T>) -> Self {
        let n = scn.n_slots();
        let share = scn.source_budget() / T::from_usize(n - 1).unwrap();
        let mut p_s = vec![share; n];
        p_s[n - 1] = T::zero();
        Self { p_s, p_r: vec![T::zero(); n] }
    }

    /// Both terminals spread their whole budget evenly over their active slots.
    pub fn equal(scn: &Scenario<T>) -> Self {
        let n = scn.n_slots();
        let mut pw = Self::equal_source(scn);
        let share = scn.relay_budget() / T::from_usize(n - 1).unwrap();
        pw.p_r = vec![share; n];
        pw.p_r[0] = T::zero();
        pw
    }

    pub fn len(&self) -> usize {
        self.p_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_s.is_empty()
    }

    pub fn p_s(&self) -> &[T] {
        &self.p_s
    }

    pub fn p_r(&self) -> &[T] {
        &self.p_r
    }

    /// Copy with the relay powers multiplied by `alpha >= 0`.
    pub fn with_relay_scaled(&self, alpha: T) -> Self {
        Self { p_s: self.p_s.clone(), p_r: self.p_r.iter().map(|&p| p * alpha).collect() }
    }

    pub fn total_source(&self) -> T {
        self.p_s.iter().fold(T::zero(), |a, &b| a + b)
    }

    pub fn total_relay(&self) -> T {
        self.p_r.iter().fold(T::zero(), |a, &b| a + b)
    }
}

/// Per-slot link distances (meters) and SNR gains `ref_snr / d^2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelState<T> {
    pub d_ar: Vec<T>,
    pub d_rd: Vec<T>,
    pub d_re: Vec<T>,
    pub gamma_ar: Vec<T>,
    pub gamma_rd: Vec<T>,
    pub gamma_re: Vec<T>,
}

/// Per-slot reception rates (bits/s/Hz) and the aggregate secrecy rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateProfile<T> {
    pub r_relay: Vec<T>,
    pub r_bob: Vec<T>,
    pub r_eve: Vec<T>,
    pub secrecy_sum: T,
    pub secrecy_avg: T,
}

/// Squared 3-D distance between a UAV at horizontal position `uav` and a
/// ground node at `node`.
pub fn link_dist2<T: Real>(h: T, uav: [T; 2], node: [T; 2]) -> T {
    sq(h) + dist2(uav, node)
}

pub fn channel_state<T: Real>(scn: &Scenario<T>, traj: &Trajectory<T>) -> Result<ChannelState<T>, ModelError> {
    scn.check_len(traj.len())?;
    let h = scn.altitude_h();
    let n = traj.len();
    let mut cs = ChannelState {
        d_ar: Vec::with_capacity(n),
        d_rd: Vec::with_capacity(n),
        d_re: Vec::with_capacity(n),
        gamma_ar: Vec::with_capacity(n),
        gamma_rd: Vec::with_capacity(n),
        gamma_re: Vec::with_capacity(n),
    };
    for &p in traj.points() {
        for (node, d, g) in [
            (scn.alice_xy(), &mut cs.d_ar, &mut cs.gamma_ar),
            (scn.bob_xy(), &mut cs.d_rd, &mut cs.gamma_rd),
            (scn.eve_xy(), &mut cs.d_re, &mut cs.gamma_re),
        ] {
            let d2 = link_dist2(h, p, node);
            d.push(d2.sqrt());
            g.push(scn.ref_snr() / d2);
        }
    }
    Ok(cs)
}

/// Rates from an already computed channel state.
pub fn rates_from_channel<T: Real>(cs: &ChannelState<T>, pw: &PowerAllocation<T>) -> Result<RateProfile<T>, ModelError> {
    let n = cs.gamma_ar.len();
    if pw.len() != n {
        return Err(ModelError::DimensionMismatch { expected: n, got: pw.len() });
    }
    let rate = |p: T, g: T| (T::one() + p * g).log2();
    let r_relay: Vec<T> = pw.p_s().iter().zip(&cs.gamma_ar).map(|(&p, &g)| rate(p, g)).collect();
    let r_bob: Vec<T> = pw.p_r().iter().zip(&cs.gamma_rd).map(|(&p, &g)| rate(p, g)).collect();
    let r_eve: Vec<T> = pw.p_r().iter().zip(&cs.gamma_re).map(|(&p, &g)| rate(p, g)).collect();
    let secrecy_sum = r_bob.iter().zip(&r_eve).skip(1).fold(T::zero(), |acc, (&b, &e)| acc + (b - e));
    Ok(RateProfile { secrecy_avg: secrecy_sum / T::from_usize(n).unwrap(), r_relay, r_bob, r_eve, secrecy_sum })
}

pub fn rate_profile<T: Real>(scn: &Scenario<T>, traj: &Trajectory<T>, pw: &PowerAllocation<T>) -> Result<RateProfile<T>, ModelError> {
    scn.check_len(pw.len())?;
    let cs = channel_state(scn, traj)?;
    rates_from_channel(&cs, pw)
}

/// True secrecy sum `sum_{n>=1} (r_bob[n] - r_eve[n])`.
pub fn secrecy_sum<T: Real>(scn: &Scenario<T>, traj: &Trajectory<T>, pw: &PowerAllocation<T>) -> Result<T, ModelError> {
    Ok(rate_profile(scn, traj, pw)?.secrecy_sum)
}

/// Slack of each mobility constraint, `V^2 - (squared step length)`;
/// negative slack is a violation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MobilityVerdict<T> {
    pub start_slack: Option<T>,
    pub step_slacks: Vec<T>,
    pub end_slack: Option<T>,
    pub feasible: bool,
}

impl<T: Real> MobilityVerdict<T> {
    pub fn min_slack(&self) -> T {
        self.start_slack
            .into_iter()
            .chain(self.step_slacks.iter().copied())
            .chain(self.end_slack)
            .fold(T::infinity(), T::min)
    }

    pub fn feasible_within(&self, tol: T) -> bool {
        self.min_slack() >= -tol
    }
}

/// Mobility slacks for raw points; endpoints that are `None` are skipped.
pub fn mobility_slacks<T: Real>(start: Option<[T; 2]>, end: Option<[T; 2]>, step: T, xy: &[[T; 2]]) -> MobilityVerdict<T> {
    let v2 = sq(step);
    let start_slack = match (start, xy.first()) {
        (Some(s), Some(&p)) => Some(v2 - dist2(p, s)),
        _ => None,
    };
    let end_slack = match (end, xy.last()) {
        (Some(e), Some(&p)) => Some(v2 - dist2(p, e)),
        _ => None,
    };
    let step_slacks = xy.windows(2).map(|w| v2 - dist2(w[1], w[0])).collect();
    let mut verdict = MobilityVerdict { start_slack, step_slacks, end_slack, feasible: false };
    verdict.feasible = verdict.feasible_within(T::lit(FEASIBILITY_TOL));
    verdict
}

pub fn check_mobility<T: Real>(scn: &Scenario<T>, traj: &Trajectory<T>) -> MobilityVerdict<T> {
    mobility_slacks(scn.start_xy(), scn.end_xy(), scn.step_len(), traj.points())
}

/// Information-causality prefix gaps. Entry `k` is the constraint for slot
/// `k + 1`: delivered data through that slot minus data decoded by the relay
/// through the previous slot. Positive gaps are violations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CausalityVerdict<T> {
    pub bob_gaps: Vec<T>,
    pub eve_gaps: Vec<T>,
    pub feasible: bool,
}

impl<T: Real> CausalityVerdict<T> {
    pub fn max_gap(&self) -> T {
        self.bob_gaps.iter().chain(&self.eve_gaps).copied().fold(T::neg_infinity(), T::max)
    }

    pub fn feasible_within(&self, tol: T) -> bool {
        self.bob_gaps.is_empty() || self.max_gap() <= tol
    }
}

pub fn causality_gaps<T: Real>(rates: &RateProfile<T>) -> CausalityVerdict<T> {
    let n = rates.r_relay.len();
    let mut bob_gaps = Vec::with_capacity(n.saturating_sub(1));
    let mut eve_gaps = Vec::with_capacity(n.saturating_sub(1));
    let (mut loaded, mut bob, mut eve) = (T::zero(), T::zero(), T::zero());
    for k in 1..n {
        loaded = loaded + rates.r_relay[k - 1];
        bob = bob + rates.r_bob[k];
        eve = eve + rates.r_eve[k];
        bob_gaps.push(bob - loaded);
        eve_gaps.push(eve - loaded);
    }
    let mut verdict = CausalityVerdict { bob_gaps, eve_gaps, feasible: false };
    verdict.feasible = verdict.feasible_within(T::lit(FEASIBILITY_TOL));
    verdict
}

pub fn check_causality<T: Real>(
    scn: &Scenario<T>,
    traj: &Trajectory<T>,
    pw: &PowerAllocation<T>,
) -> Result<CausalityVerdict<T>, ModelError> {
    Ok(causality_gaps(&rate_profile(scn, traj, pw)?))
}

/// Slack of the total-energy budgets, `N * p_bar - sum(p)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetVerdict<T> {
    pub source_slack: T,
    pub relay_slack: T,
    pub feasible: bool,
}

pub fn check_power_budget<T: Real>(scn: &Scenario<T>, pw: &PowerAllocation<T>) -> Result<BudgetVerdict<T>, ModelError> {
    scn.check_len(pw.len())?;
    let source_slack = scn.source_budget() - pw.total_source();
    let relay_slack = scn.relay_budget() - pw.total_relay();
    let tol = -T::lit(FEASIBILITY_TOL);
    Ok(BudgetVerdict { source_slack, relay_slack, feasible: source_slack >= tol && relay_slack >= tol })
}
