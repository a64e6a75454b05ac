//! CSV and JSON artifacts.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use uavsec::ao::Evaluation;
use uavsec::report::RunReport;
use uavsec::{PowerAllocation, Scenario, Trajectory};

use crate::config::Config;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory(path: &Path, traj: &Trajectory, pw: &PowerAllocation, ev: &Evaluation) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["slot", "x_m", "y_m", "p_s_w", "p_r_w", "r_relay", "r_bob", "r_eve"])?;
    let r = &ev.rates;
    for (i, q) in traj.points().iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            num(q[0]),
            num(q[1]),
            num(pw.p_s()[i]),
            num(pw.p_r()[i]),
            num(r.r_relay[i]),
            num(r.r_bob[i]),
            num(r.r_eve[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_snapshot(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["slot", "x_m", "y_m"])?;
    for (i, q) in traj.points().iter().enumerate() {
        w.write_record([(i + 1).to_string(), num(q[0]), num(q[1])])?;
    }
    w.flush()?;
    Ok(())
}

/// Trajectory and, when the power columns are present, the allocation.
pub fn read_trajectory(path: &Path) -> Result<(Trajectory, Option<PowerAllocation>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(ix), Some(iy)) = (col("x_m"), col("y_m")) else {
        bail!("{}: columns x_m and y_m are required", path.display());
    };
    let powers = match (col("p_s_w"), col("p_r_w")) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => bail!("{}: give both p_s_w and p_r_w or neither", path.display()),
    };
    let (mut xy, mut ps, mut pr) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let get = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("").trim();
            s.parse().with_context(|| format!("{} row {}: cannot read {s:?}", path.display(), line + 1))
        };
        xy.push([get(ix)?, get(iy)?]);
        if let Some((a, b)) = powers {
            ps.push(get(a)?);
            pr.push(get(b)?);
        }
    }
    let traj = Trajectory::new(xy)?;
    let pw = match powers {
        Some(_) => Some(PowerAllocation::new(ps, pr)?),
        None => None,
    };
    Ok((traj, pw))
}

#[derive(Serialize)]
pub struct Report<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub config: &'a Config,
    pub scenario: &'a Scenario,
    pub evaluation: &'a Evaluation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<&'a RunReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<serde_json::Value>,
    pub notes: Vec<String>,
    pub elapsed_s: f64,
}

pub fn write_report(path: &Path, report: &Report) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}
