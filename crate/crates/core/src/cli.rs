//! Command-line front end. `run` returns the process exit status:
//! 0 on success, 1 when planning fails, 2 on bad input.

use crate::geometry::{CuboidObstacle, Point3};
use crate::grid::SubAirspaceId;
use crate::output::{
    compare_table, convergence_table, emit_results, length_table, new_length_table, Field, Format, Table,
};
use crate::pso::{plan_sub_airspace, FinePlan, Problem};
use crate::replan::{detect_conflicts, repair};
use crate::sampling::Waypath;
use crate::scenario::{load_scenario, Scenario};
use crate::sim::{run_world, Mode, Phase, SimResult};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "airgrid", version, about = "Sub-airspace trajectory planning and multi-UAV simulation")]
pub struct Cli {
    /// Scenario file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Planning mode; a comma-separated list for `compare`.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value = "csv")]
    pub format: Format,
    /// Seed range for `compare`: `1..5` (inclusive), `1..=5` or `1,4,9`.
    #[arg(long, global = true)]
    pub seeds: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Plan inside the single sub-airspace of the scenario.
    PlanSub,
    /// Fly the listed UAVs through the airspace.
    Plan,
    /// Multi-UAV simulation (50 random UAVs unless a scenario is given).
    Simulate,
    /// Paired runs of several modes over a seed range.
    Compare,
    /// Plan, drop a sudden obstacle on waypoint 5 (zero-based) and repair.
    ReplanDemo,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Planning(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(format!("cannot write output: {e}"))
    }
}

/// Parses `1..5`, `1..=5`, `3` or `1,4,9`. Ranges include both ends.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let bad = || format!("bad seed list '{s}'");
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn load(cli: &Cli, multi: bool) -> Result<Scenario, CliError> {
    let mut s = match &cli.scenario {
        Some(path) => load_scenario(path).map_err(|e| CliError::Input(e.to_string()))?,
        None => {
            let mut s = Scenario::default();
            if multi {
                s.uavs.clear();
                s.random_uavs.count = 50;
            }
            s
        }
    };
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    if let Some(m) = &cli.mode {
        if !matches!(cli.command, Command::Compare) {
            s.mode = m.parse().map_err(CliError::Input)?;
        }
    }
    Ok(s)
}

fn write(tables: &[Table], dir: &Path, format: Format) -> Result<(), CliError> {
    for t in tables {
        t.write_to_dir(dir, format)?;
    }
    Ok(())
}

fn path_table(name: &str, paths: &[(&str, &[Point3])]) -> Table {
    let mut t = Table::new(name, &["path", "seq", "x", "y", "z"]);
    for (label, pts) in paths {
        for (k, p) in pts.iter().enumerate() {
            t.push(vec![(*label).into(), k.into(), p.x.into(), p.y.into(), p.z.into()]);
        }
    }
    t
}

fn plan_single(s: &Scenario) -> Result<(FinePlan, Problem), CliError> {
    let sub = &s.sub_airspace;
    let obstacles = sub.obstacle_list();
    let params = s.fine_params();
    let problem = Problem::new(&obstacles, params.cost, params.constraints.with_bounds(sub.bounds()));
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let plan = plan_sub_airspace(
        s.mode.planner(),
        SubAirspaceId(1),
        sub.bounds(),
        &obstacles,
        sub.start,
        sub.goal,
        &params,
        &mut rng,
    )
    .map_err(|e| CliError::Planning(e.to_string()))?;
    Ok((plan, problem))
}

fn plan_sub(cli: &Cli) -> Result<(), CliError> {
    let s = load(cli, false)?;
    let (plan, problem) = plan_single(&s)?;
    let mut wp = Table::new("waypoints", &["uav_id", "seq", "x", "y", "z", "cell_id"]);
    for (k, p) in plan.waypath.waypoints.iter().enumerate() {
        wp.push(vec![1u32.into(), k.into(), p.x.into(), p.y.into(), p.z.into(), 1u32.into()]);
    }
    let conv = convergence_table([("plan-sub".to_string(), plan.history.as_slice())]);
    let mut seeds = Table::new("seed_costs", &["index", "cost"]);
    for (k, c) in plan.seed_costs.iter().enumerate() {
        seeds.push(vec![k.into(), (*c).into()]);
    }
    let penalized = problem.penalized_cost(&plan.waypath.waypoints);
    let mut summary = Table::new("summary", &["seed", "mode", "cost", "penalized_cost", "length", "feasible"]);
    summary.push(vec![
        s.seed.into(),
        s.mode.name().into(),
        plan.cost.into(),
        penalized.into(),
        plan.waypath.length().into(),
        Field::Text(plan.is_feasible().to_string()),
    ]);
    write(&[wp, conv, seeds, summary], &cli.out, cli.format)?;
    println!(
        "plan-sub seed {} {}: cost {:.4}, length {:.2} m, feasible {}",
        s.seed,
        s.mode,
        plan.cost,
        plan.waypath.length(),
        plan.is_feasible()
    );
    if !plan.is_feasible() {
        return Err(CliError::Planning(format!("trajectory violates {} constraint(s)", plan.violations.total())));
    }
    Ok(())
}

fn simulate(cli: &Cli, multi: bool) -> Result<(), CliError> {
    let s = load(cli, multi)?;
    let world = s.build_world().map_err(|e| CliError::Input(e.to_string()))?;
    let result = run_world(world, s.mode);
    emit_results(&result, &format!("seed{}", s.seed), &cli.out, cli.format)?;
    report(&result);
    let failed = result.trajectories.iter().filter(|t| t.phase != Phase::Arrived).count();
    if failed > 0 {
        return Err(CliError::Planning(format!("{failed} UAV(s) did not arrive")));
    }
    Ok(())
}

fn report(r: &SimResult) {
    println!(
        "seed {} {}: {}/{} arrived in {} ticks, max occupancy {}, total length {:.2} m",
        r.seed,
        r.mode,
        r.arrived(),
        r.trajectories.len(),
        r.metrics.ticks,
        r.metrics.airspace_max_occupancy(),
        r.metrics.total_length()
    );
}

fn compare(cli: &Cli) -> Result<(), CliError> {
    let base = load(cli, true)?;
    let modes: Vec<Mode> = cli
        .mode
        .as_deref()
        .unwrap_or("SSP,NoSlidingWindow")
        .split(',')
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(CliError::Input)?;
    let seeds = match (&cli.seeds, cli.seed) {
        (Some(r), _) => parse_seeds(r).map_err(CliError::Input)?,
        (None, Some(seed)) => vec![seed],
        (None, None) => (1..=5).collect(),
    };
    let mut rows = Vec::new();
    let mut lengths = new_length_table();
    for seed in seeds {
        let s = Scenario { seed, ..base.clone() };
        let world = s.build_world().map_err(|e| CliError::Input(e.to_string()))?;
        let results: Vec<SimResult> = modes.iter().map(|&m| run_world(world.clone(), m)).collect();
        for r in &results {
            report(r);
            length_table(&mut lengths, &format!("seed{seed}"), r.mode, &r.metrics.lengths);
        }
        rows.push((seed, results));
    }
    write(&[compare_table(&modes, &rows), lengths], &cli.out, cli.format)
}

/// Cube centred on waypoint 5, small enough to leave its neighbours clear.
pub fn demo_obstacle(path: &[Point3], id: u32) -> CuboidObstacle {
    let p = path[5];
    let gap = path[4].distance(&p).min(p.distance(&path[6]));
    let side = (0.6 * gap).min(12.0);
    let h = side / 2.0;
    CuboidObstacle::sudden(id, Point3::new(p.x - h, p.y - h, p.z - h), [side, side, side])
}

fn replan_demo(cli: &Cli) -> Result<(), CliError> {
    let s = load(cli, false)?;
    if s.constraints.waypoints < 7 {
        return Err(CliError::Input("replan-demo needs at least 7 waypoints".into()));
    }
    let (plan, _) = plan_single(&s)?;
    let sub = &s.sub_airspace;
    let obstacles = sub.obstacle_list();
    let ob = demo_obstacle(&plan.waypath.waypoints, obstacles.len() as u32 + 1);
    let conflicts = detect_conflicts(&plan.waypath.waypoints, &ob, s.sim.replan_margin);
    let (lo, hi) = conflicts.bracket().expect("waypoint 5 is inside the obstacle");
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    rng.set_stream(1);
    let fixed: Waypath = repair(&plan.waypath, &ob, &obstacles, sub.bounds(), &s.settings().repair, &mut rng)
        .map_err(|e| CliError::Planning(e.to_string()))?;
    let paths = path_table("replan", &[("original", &plan.waypath.waypoints), ("repaired", &fixed.waypoints)]);
    let mut summary = Table::new(
        "replan_summary",
        &["seed", "bracket_lo", "bracket_hi", "obstacle_anchor", "obstacle_side", "original_length", "repaired_length"],
    );
    summary.push(vec![
        s.seed.into(),
        lo.into(),
        hi.into(),
        Field::Json(serde_json::to_value(ob.anchor).expect("point serializes")),
        ob.len_x.into(),
        plan.waypath.length().into(),
        fixed.length().into(),
    ]);
    write(&[paths, summary], &cli.out, cli.format)?;
    println!(
        "replan-demo seed {}: bracket ({lo}, {hi}), {} -> {} waypoints, length {:.2} -> {:.2} m",
        s.seed,
        plan.waypath.len(),
        fixed.len(),
        plan.waypath.length(),
        fixed.length()
    );
    Ok(())
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::PlanSub => plan_sub(&cli),
        Command::Plan => simulate(&cli, false),
        Command::Simulate => simulate(&cli, true),
        Command::Compare => compare(&cli),
        Command::ReplanDemo => replan_demo(&cli),
    };
    match outcome {
        Ok(()) => 0,
        Err(CliError::Planning(m)) => {
            eprintln!("planning failed: {m}");
            1
        }
        Err(CliError::Input(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}
