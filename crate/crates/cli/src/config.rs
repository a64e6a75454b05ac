//! Run configuration: TOML or JSON, chosen by file extension.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uavsec::ao::AoOptions;
use uavsec::baselines::GridSpec;
use uavsec::power_dc::DcOptions;
use uavsec::solver::SolverOptions;
use uavsec::trajectory_scp::ScpOptions;
use uavsec::{Scenario, ScenarioBuilder};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {msg}")]
    Field { field: &'static str, msg: String },
    #[error(transparent)]
    Scenario(#[from] uavsec::model::ModelError),
}

fn field(field: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Field { field, msg: msg.into() }
}

/// A number or a string such as `"80 dB"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alice_xy: Option<[f64; 2]>,
    pub bob_xy: [f64; 2],
    pub eve_xy: [f64; 2],
    pub altitude_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot_len_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_slots: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_xy: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_xy: Option<[f64; 2]>,
    pub v_max_mps: f64,
    pub ref_snr: Quantity,
    pub p_bar_s: String,
    pub p_bar_r: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Write `trajectory_iter_<l>.csv` after every accepted trajectory step.
    pub snapshots: bool,
    /// Recorded in the report; every stage is deterministic.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { output_dir: PathBuf::from("out"), snapshots: false, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    Line,
    Ferry,
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AoConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub starts: Vec<Start>,
}

impl Default for AoConfig {
    fn default() -> Self {
        let d = AoOptions::default();
        Self { rel_tol: d.rel_tol, max_iter: d.max_iter, starts: vec![Start::Line, Start::Ferry, Start::Static] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kkt_tol: Option<f64>,
}

impl Default for PowerConfig {
    fn default() -> Self {
        let d = DcOptions::default();
        Self { rel_tol: d.rel_tol, max_iter: d.max_iter, kkt_tol: d.kkt_tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        let d = ScpOptions::default();
        Self { rel_tol: d.rel_tol, max_iter: d.max_iter }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    pub mu_factor: f64,
    pub fraction_to_boundary: f64,
    pub phase_one_margin: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            mu_init: d.mu_init,
            mu_factor: d.mu_factor,
            fraction_to_boundary: d.fraction_to_boundary,
            phase_one_margin: d.phase_one_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StaticConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_range: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_range: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refinements: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub ao: AoConfig,
    #[serde(default)]
    pub power: PowerConfig,
    #[serde(default)]
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, rename = "static")]
    pub static_grid: StaticConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display()))),
            _ => toml::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display()))),
        }
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let s = &self.scenario;
        let slot_len = s.slot_len_s.unwrap_or(1.0);
        let n_slots = match (s.horizon_s, s.n_slots) {
            (Some(_), Some(_)) => return Err(field("scenario.horizon_s", "give either horizon_s or n_slots, not both")),
            (None, None) => return Err(field("scenario.horizon_s", "one of horizon_s or n_slots is required")),
            (None, Some(n)) => n,
            (Some(t), None) => {
                let n = (t / slot_len).round();
                if !(n.is_finite() && n >= 0.0 && (n * slot_len - t).abs() <= 1e-9 * t.abs().max(1.0)) {
                    return Err(field("scenario.horizon_s", format!("{t} s is not a whole number of {slot_len} s slots")));
                }
                n as usize
            }
        };
        let b = ScenarioBuilder {
            alice_xy: s.alice_xy.unwrap_or([0.0, 0.0]),
            bob_xy: s.bob_xy,
            eve_xy: s.eve_xy,
            altitude_h: s.altitude_m,
            n_slots,
            slot_len,
            start_xy: s.start_xy,
            end_xy: s.end_xy,
            v_max: s.v_max_mps,
            ref_snr: parse_ratio(&s.ref_snr).map_err(|m| field("scenario.ref_snr", m))?,
            p_bar_s: parse_power(&s.p_bar_s).map_err(|m| field("scenario.p_bar_s", m))?,
            p_bar_r: parse_power(&s.p_bar_r).map_err(|m| field("scenario.p_bar_r", m))?,
        };
        Ok(b.build()?)
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            tol: s.tol,
            max_iter: s.max_iter,
            mu_init: s.mu_init,
            mu_factor: s.mu_factor,
            fraction_to_boundary: s.fraction_to_boundary,
            phase_one_margin: s.phase_one_margin,
        }
    }

    pub fn dc_options(&self) -> DcOptions {
        DcOptions { rel_tol: self.power.rel_tol, max_iter: self.power.max_iter, kkt_tol: self.power.kkt_tol, solver: self.solver_options() }
    }

    pub fn scp_options(&self) -> ScpOptions {
        ScpOptions { rel_tol: self.trajectory.rel_tol, max_iter: self.trajectory.max_iter, solver: self.solver_options() }
    }

    pub fn ao_options(&self) -> AoOptions {
        AoOptions { rel_tol: self.ao.rel_tol, max_iter: self.ao.max_iter, power: self.dc_options(), trajectory: self.scp_options() }
    }

    pub fn grid(&self, scn: &Scenario) -> GridSpec {
        let d = GridSpec::reference(scn);
        let g = &self.static_grid;
        GridSpec {
            x_range: g.x_range.map_or(d.x_range, |r| (r[0], r[1])),
            y_range: g.y_range.map_or(d.y_range, |r| (r[0], r[1])),
            nx: g.nx.unwrap_or(d.nx),
            ny: g.ny.unwrap_or(d.ny),
            refinements: g.refinements.unwrap_or(d.refinements),
        }
    }

    /// Checks the numeric options that the scenario builder does not cover.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &'static str, v: f64| if v.is_finite() && v > 0.0 { Ok(()) } else { Err(field(name, "must be positive")) };
        positive("ao.rel_tol", self.ao.rel_tol)?;
        positive("power.rel_tol", self.power.rel_tol)?;
        positive("trajectory.rel_tol", self.trajectory.rel_tol)?;
        positive("solver.tol", self.solver.tol)?;
        positive("solver.mu_init", self.solver.mu_init)?;
        positive("solver.phase_one_margin", self.solver.phase_one_margin)?;
        if let Some(t) = self.power.kkt_tol {
            positive("power.kkt_tol", t)?;
        }
        if !(self.solver.mu_factor > 0.0 && self.solver.mu_factor < 1.0) {
            return Err(field("solver.mu_factor", "must lie in (0, 1)"));
        }
        if !(self.solver.fraction_to_boundary > 0.0 && self.solver.fraction_to_boundary < 1.0) {
            return Err(field("solver.fraction_to_boundary", "must lie in (0, 1)"));
        }
        if self.ao.starts.is_empty() {
            return Err(field("ao.starts", "at least one start is required"));
        }
        if self.static_grid.nx == Some(0) || self.static_grid.ny == Some(0) {
            return Err(field("static.nx", "grid sizes must be at least 1"));
        }
        Ok(())
    }

    /// The configuration with every default filled in and the scenario in
    /// canonical units: slot count, linear reference SNR and powers in watts.
    pub fn resolved(&self, scn: &Scenario) -> Config {
        let g = self.grid(scn);
        let mut c = self.clone();
        c.scenario = ScenarioConfig {
            alice_xy: Some(scn.alice_xy()),
            bob_xy: scn.bob_xy(),
            eve_xy: scn.eve_xy(),
            altitude_m: scn.altitude_h(),
            slot_len_s: Some(scn.slot_len()),
            horizon_s: None,
            n_slots: Some(scn.n_slots()),
            start_xy: scn.start_xy(),
            end_xy: scn.end_xy(),
            v_max_mps: scn.v_max(),
            ref_snr: Quantity::Number(scn.ref_snr()),
            p_bar_s: format!("{} W", scn.p_bar_s()),
            p_bar_r: format!("{} W", scn.p_bar_r()),
        };
        c.static_grid = StaticConfig {
            x_range: Some([g.x_range.0, g.x_range.1]),
            y_range: Some([g.y_range.0, g.y_range.1]),
            nx: Some(g.nx),
            ny: Some(g.ny),
            refinements: Some(g.refinements),
        };
        c
    }
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("cannot read a number from {s:?}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s:?} is not finite"))
    }
}

/// Power in watts from `"<value> dBm"`, `"<value> W"` or `"<value> mW"`.
pub fn parse_power(s: &str) -> Result<f64, String> {
    let t = s.trim();
    if let Some(v) = t.strip_suffix("dBm") {
        Ok(10f64.powf(number(v)? / 10.0) * 1e-3)
    } else if let Some(v) = t.strip_suffix("mW") {
        Ok(number(v)? * 1e-3)
    } else if let Some(v) = t.strip_suffix('W') {
        number(v)
    } else if number(t).is_ok() {
        Err(format!("{s:?} has no unit; use dBm, W or mW"))
    } else {
        Err(format!("cannot read a power from {s:?}; use dBm, W or mW"))
    }
}

/// Linear ratio from a plain number or `"<value> dB"`.
pub fn parse_ratio(q: &Quantity) -> Result<f64, String> {
    match q {
        Quantity::Number(v) => Ok(*v),
        Quantity::Text(s) => match s.trim().strip_suffix("dB") {
            Some(v) => Ok(10f64.powf(number(v)? / 10.0)),
            None => number(s),
        },
    }
}
