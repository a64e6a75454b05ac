mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use uavsec::ao::{ao_multistart, evaluate, Evaluation};
use uavsec::baselines::{data_ferry, static_relay_best};
use uavsec::error::LastIterate;
use uavsec::power_dc::dc_allocate;
use uavsec::report::RunReport;
use uavsec::trajectory_scp::{initial_trajectory, restore_feasibility, scp_optimize_traced};
use uavsec::{Error, PowerAllocation, Scenario, Trajectory};

use config::{Config, ConfigError, Start};
use output::Report;

#[derive(Parser)]
#[command(name = "uavsec", version, about = "Secrecy-rate optimization for a UAV mobile relay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML or JSON configuration file
    config: PathBuf,
    /// Overrides `run.output_dir`
    #[arg(long, short)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Joint power and trajectory optimization
    Ao(Common),
    /// Trajectory optimization with equal power
    Trajectory(Common),
    /// Power allocation on a fixed trajectory
    Power {
        #[command(flatten)]
        common: Common,
        /// CSV with columns x_m, y_m; defaults to the initial trajectory
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Static relaying or data ferrying
    Baseline {
        kind: BaselineKind,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluates a trajectory.csv against the scenario
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Validates the configuration and checks the initial trajectory
    Check(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Static,
    Ferry,
}

enum Failure {
    Config(anyhow::Error),
    Infeasible(anyhow::Error),
    Numerical(anyhow::Error),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Numerical(_) => 4,
            Failure::Other(_) => 1,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Infeasible(e) | Failure::Numerical(e) | Failure::Other(e) => e,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Model(_) => Failure::Config(e.into()),
            Error::InfeasibleStart(_) | Error::InfeasibleEndpoints { .. } => Failure::Infeasible(e.into()),
            Error::SolverFailure { .. } => Failure::Numerical(e.into()),
        }
    }
}

/// Everything a command produces.
struct Outcome {
    traj: Trajectory,
    pw: PowerAllocation,
    run: Option<RunReport>,
    baseline: Option<serde_json::Value>,
    snapshots: Vec<Trajectory>,
    notes: Vec<String>,
}

impl Outcome {
    fn plain(traj: Trajectory, pw: PowerAllocation) -> Self {
        Self { traj, pw, run: None, baseline: None, snapshots: Vec::new(), notes: Vec::new() }
    }
}

struct Ctx {
    cfg: Config,
    scn: Scenario,
    out_dir: PathBuf,
    name: &'static str,
    clock: Instant,
    dropped_endpoints: bool,
}

impl Ctx {
    fn new(common: &Common, name: &'static str) -> Result<Self, Failure> {
        let cfg = Config::load(&common.config)?;
        cfg.validate()?;
        let scn = cfg.scenario()?;
        let out_dir = common.output_dir.clone().unwrap_or_else(|| cfg.run.output_dir.clone());
        Ok(Self { cfg, scn, out_dir, name, clock: Instant::now(), dropped_endpoints: false })
    }

    fn write(&self, out: &Outcome) -> Result<Evaluation, Failure> {
        std::fs::create_dir_all(&self.out_dir).with_context(|| format!("cannot create {}", self.out_dir.display()))?;
        let ev = evaluate(&self.scn, &out.traj, &out.pw)?;
        output::write_trajectory(&self.out_dir.join("trajectory.csv"), &out.traj, &out.pw, &ev)?;
        if self.cfg.run.snapshots {
            for (l, t) in out.snapshots.iter().enumerate() {
                output::write_snapshot(&self.out_dir.join(format!("trajectory_iter_{}.csv", l + 1)), t)?;
            }
        }
        let resolved = self.cfg.resolved(&self.scn);
        let report = Report {
            command: self.name,
            seed: self.cfg.run.seed,
            config: &resolved,
            scenario: &self.scn,
            evaluation: &ev,
            run: out.run.as_ref(),
            baseline: out.baseline.clone(),
            notes: out.notes.clone(),
            elapsed_s: self.clock.elapsed().as_secs_f64(),
        };
        output::write_report(&self.out_dir.join("report.json"), &report)?;
        log::info!("wrote {}", self.out_dir.display());
        Ok(ev)
    }

    /// Saves the last consistent iterate of a failed solve before reporting.
    fn salvage(&self, e: Error) -> Failure {
        if let Error::SolverFailure { last, .. } = &e {
            let pair = match last.as_ref() {
                LastIterate::Joint(t, p) => Some((t.clone(), p.clone())),
                _ => None,
            };
            if let Some((t, p)) = pair {
                let mut out = Outcome::plain(t, p);
                out.notes.push(format!("stopped early: {e}"));
                if let Err(w) = self.write(&out) {
                    log::warn!("could not save the last iterate: {}", w.error());
                }
            }
        }
        e.into()
    }
}

fn equal_power_start(scn: &Scenario) -> Result<(Trajectory, PowerAllocation), Failure> {
    let traj = initial_trajectory(scn)?;
    let pw = restore_feasibility(scn, &traj, &PowerAllocation::equal(scn))?;
    Ok((traj, pw))
}

fn run_ao(ctx: &Ctx) -> Result<Outcome, Failure> {
    let scn = &ctx.scn;
    let mut starts = Vec::new();
    let mut notes = Vec::new();
    let fixed = scn.start_xy().is_some() || scn.end_xy().is_some();
    for s in &ctx.cfg.ao.starts {
        match s {
            Start::Ferry | Start::Static if fixed => notes.push(format!("{s:?} start skipped: endpoints are fixed").to_lowercase()),
            Start::Line => starts.push((initial_trajectory(scn)?, PowerAllocation::equal_source(scn))),
            Start::Ferry => {
                let f = data_ferry(scn)?;
                notes.push(format!("ferry start objective {:.9}", f.objective));
                starts.push((f.traj, f.pw));
            }
            Start::Static => {
                let st = static_relay_best(scn, &ctx.cfg.grid(scn), &ctx.cfg.dc_options())?;
                notes.push(format!("static start objective {:.9} at ({}, {})", st.objective, st.location[0], st.location[1]));
                starts.push((st.traj, st.pw));
            }
        }
    }
    let out = ao_multistart(scn, &starts, &ctx.cfg.ao_options()).map_err(|e| ctx.salvage(e))?;
    Ok(Outcome { traj: out.traj, pw: out.pw, run: Some(out.report), baseline: None, snapshots: out.snapshots, notes })
}

fn run_trajectory(ctx: &Ctx) -> Result<Outcome, Failure> {
    let (traj_0, pw) = equal_power_start(&ctx.scn)?;
    let mut notes = Vec::new();
    if pw.total_relay() < ctx.scn.relay_budget() * (1.0 - 1e-12) {
        notes.push(format!("equal relay power scaled to {:.6e} W per slot for causality", pw.p_r().last().copied().unwrap_or(0.0)));
    }
    let mut snapshots = Vec::new();
    let res = scp_optimize_traced(&ctx.scn, &pw, &traj_0, &ctx.cfg.scp_options(), &ctx.clock, &mut snapshots);
    let (traj, report) = res.map_err(|e| match e {
        Error::SolverFailure { stage, status, last } => {
            let last = match *last {
                LastIterate::Trajectory(t) => LastIterate::Joint(t, pw.clone()),
                other => other,
            };
            ctx.salvage(Error::SolverFailure { stage, status, last: Box::new(last) })
        }
        e => e.into(),
    })?;
    Ok(Outcome { traj, pw, run: Some(report), baseline: None, snapshots, notes })
}

fn run_power(ctx: &Ctx, path: Option<&Path>) -> Result<Outcome, Failure> {
    let traj = match path {
        Some(p) => output::read_trajectory(p).map_err(Failure::Config)?.0,
        None => initial_trajectory(&ctx.scn)?,
    };
    ctx.scn.check_len(traj.len()).map_err(Error::from)?;
    let (pw, report) = dc_allocate(&ctx.scn, &traj, &PowerAllocation::equal_source(&ctx.scn), &ctx.cfg.dc_options()).map_err(|e| match e {
        Error::SolverFailure { stage, status, last } => {
            let last = match *last {
                LastIterate::Power(p) => LastIterate::Joint(traj.clone(), p),
                other => other,
            };
            ctx.salvage(Error::SolverFailure { stage, status, last: Box::new(last) })
        }
        e => e.into(),
    })?;
    Ok(Outcome { run: Some(report), ..Outcome::plain(traj, pw) })
}

fn run_baseline(ctx: &Ctx, kind: BaselineKind) -> Result<Outcome, Failure> {
    let mut out = baseline(ctx, kind)?;
    if ctx.dropped_endpoints {
        out.notes.push("baselines hover at fixed points; start_xy and end_xy were dropped".into());
    }
    Ok(out)
}

fn baseline(ctx: &Ctx, kind: BaselineKind) -> Result<Outcome, Failure> {
    match kind {
        BaselineKind::Static => {
            let st = static_relay_best(&ctx.scn, &ctx.cfg.grid(&ctx.scn), &ctx.cfg.dc_options())?;
            let info = serde_json::json!({
                "kind": "static",
                "location": st.location,
                "objective": st.objective,
                "cells_evaluated": st.cells_evaluated,
                "cells_pruned": st.cells_pruned,
            });
            Ok(Outcome { run: Some(st.report), baseline: Some(info), ..Outcome::plain(st.traj, st.pw) })
        }
        BaselineKind::Ferry => {
            let f = data_ferry(&ctx.scn)?;
            let info = serde_json::json!({
                "kind": "ferry",
                "objective": f.objective,
                "load_slots": f.load_slots,
                "transit_slots": f.transit_slots,
            });
            Ok(Outcome { run: Some(f.report), baseline: Some(info), ..Outcome::plain(f.traj, f.pw) })
        }
    }
}

fn run_eval(ctx: &Ctx, path: &Path) -> Result<Outcome, Failure> {
    let (traj, pw) = output::read_trajectory(path).map_err(Failure::Config)?;
    let pw = pw.ok_or_else(|| Failure::Config(anyhow::anyhow!("{}: columns p_s_w and p_r_w are required", path.display())))?;
    ctx.scn.check_len(traj.len()).map_err(Error::from)?;
    Ok(Outcome::plain(traj, pw))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (ctx, out, strict) = match &cli.command {
        Command::Ao(c) => {
            let ctx = Ctx::new(c, "ao")?;
            let out = run_ao(&ctx)?;
            (ctx, out, false)
        }
        Command::Trajectory(c) => {
            let ctx = Ctx::new(c, "trajectory")?;
            let out = run_trajectory(&ctx)?;
            (ctx, out, false)
        }
        Command::Power { common, trajectory } => {
            let ctx = Ctx::new(common, "power")?;
            let out = run_power(&ctx, trajectory.as_deref())?;
            (ctx, out, false)
        }
        Command::Baseline { kind, common } => {
            let mut ctx = Ctx::new(common, "baseline")?;
            if ctx.scn.start_xy().is_some() || ctx.scn.end_xy().is_some() {
                ctx.scn = ctx.scn.with_free_endpoints();
                ctx.dropped_endpoints = true;
            }
            let out = run_baseline(&ctx, *kind)?;
            (ctx, out, false)
        }
        Command::Eval { common, input } => {
            let ctx = Ctx::new(common, "eval")?;
            let out = run_eval(&ctx, input)?;
            (ctx, out, true)
        }
        Command::Check(c) => {
            let ctx = Ctx::new(c, "check")?;
            let (traj, pw) = equal_power_start(&ctx.scn)?;
            (ctx, Outcome::plain(traj, pw), true)
        }
    };
    let ev = ctx.write(&out)?;
    let verdict = serde_json::json!({
        "objective": ev.objective,
        "secrecy_avg": ev.secrecy_avg,
        "feasible": ev.feasible,
        "mobility_feasible": ev.mobility.feasible,
        "causality_max_gap": ev.causality.max_gap(),
        "budget_feasible": ev.budget.feasible,
    });
    println!("{verdict}");
    if strict && !ev.feasible {
        return Err(Failure::Infeasible(anyhow::anyhow!("the trajectory and allocation violate the constraints")));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
