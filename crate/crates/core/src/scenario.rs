//! Scenario files: TOML with one section per parameter block.
//!
//! Every field is optional; omitted values take the defaults of the
//! reference setup (5 x 5 x 5 grid over 1000 x 1000 x 250 m, 75 random
//! buildings, one UAV from the origin to (750, 900, 80), the sub-airspace
//! planning parameters, speed 5 m/s).

use crate::coarse::SspParams;
use crate::geometry::{Aabb, CuboidObstacle, ObstacleKind, Point3};
use crate::grid::AirspaceGrid;
use crate::pso::{ConstraintParams, CostParams, FineParams, PsoParams, SeedParams};
use crate::replan::RepairParams;
use crate::sampling::RrtParams;
use crate::sim::{sample_free_point, Mode, SimSettings, SuddenInjection, UavSpec, World};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation { field: field.into(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AirspaceConfig {
    pub extent: [f64; 3],
    pub cells: [u32; 3],
}

impl Default for AirspaceConfig {
    fn default() -> Self {
        Self { extent: [1000.0, 1000.0, 250.0], cells: [5, 5, 5] }
    }
}

/// Cuboid literal: corner nearest the origin plus edge lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub anchor: Point3,
    pub len_x: f64,
    pub len_y: f64,
    pub len_z: f64,
}

impl ObstacleSpec {
    pub fn new(anchor: [f64; 3], lens: [f64; 3]) -> Self {
        Self { anchor: anchor.into(), len_x: lens[0], len_y: lens[1], len_z: lens[2] }
    }

    fn to_obstacle(self, id: u32, kind: ObstacleKind) -> CuboidObstacle {
        CuboidObstacle::new(id, kind, self.anchor, [self.len_x, self.len_y, self.len_z])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomObstacles {
    pub count: usize,
    pub height_range: [f64; 2],
    /// Range of each footprint side.
    pub footprint_range: [f64; 2],
    /// Keep-out distance around listed UAV starts and goals.
    pub clearance: f64,
}

impl Default for RandomObstacles {
    fn default() -> Self {
        Self { count: 75, height_range: [25.0, 240.0], footprint_range: [20.0, 60.0], clearance: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomUavs {
    pub count: usize,
    /// Minimum number of cells on the direct route, start and goal included.
    pub min_cells: u32,
    /// Minimum distance from start and goal to any obstacle.
    pub clearance: f64,
}

impl Default for RandomUavs {
    fn default() -> Self {
        Self { count: 0, min_cells: 5, clearance: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuddenSpec {
    pub tick: u64,
    pub anchor: Point3,
    pub len_x: f64,
    pub len_y: f64,
    pub len_z: f64,
}

/// Single sub-airspace environment used by `plan-sub`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubAirspaceConfig {
    pub extent: [f64; 3],
    pub obstacles: Vec<ObstacleSpec>,
    pub start: Point3,
    pub goal: Point3,
}

impl Default for SubAirspaceConfig {
    fn default() -> Self {
        Self {
            extent: [200.0, 200.0, 50.0],
            obstacles: vec![
                ObstacleSpec::new([40.0, 50.0, 0.0], [50.0, 50.0, 100.0]),
                ObstacleSpec::new([20.0, 120.0, 0.0], [30.0, 30.0, 100.0]),
                ObstacleSpec::new([150.0, 125.0, 0.0], [30.0, 30.0, 100.0]),
            ],
            start: Point3::new(0.0, 75.0, 25.0),
            goal: Point3::new(200.0, 140.0, 25.0),
        }
    }
}

impl SubAirspaceConfig {
    pub fn bounds(&self) -> Aabb {
        Aabb::new(Point3::ORIGIN, self.extent.into())
    }

    pub fn obstacle_list(&self) -> Vec<CuboidObstacle> {
        self.obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| o.to_obstacle(i as u32 + 1, ObstacleKind::Static))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub speed: f64,
    pub dt: f64,
    pub max_ticks: u64,
    pub stagger: u64,
    pub loss_rate: f64,
    pub exit_attempts: usize,
    pub exit_clearance: f64,
    /// Conflict margin around sudden obstacles.
    pub replan_margin: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let s = SimSettings::default();
        Self {
            speed: s.speed,
            dt: s.dt,
            max_ticks: s.max_ticks,
            stagger: s.stagger,
            loss_rate: s.loss_rate,
            exit_attempts: s.exit_attempts,
            exit_clearance: s.exit_clearance,
            replan_margin: s.repair.margin,
        }
    }
}

fn default_uavs() -> Vec<UavSpec> {
    vec![UavSpec { start: Point3::ORIGIN, goal: Point3::new(750.0, 900.0, 80.0) }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub mode: Mode,
    pub airspace: AirspaceConfig,
    pub obstacles: Vec<ObstacleSpec>,
    pub random_obstacles: RandomObstacles,
    pub uavs: Vec<UavSpec>,
    pub random_uavs: RandomUavs,
    pub sudden: Vec<SuddenSpec>,
    pub sub_airspace: SubAirspaceConfig,
    pub ssp: SspParams,
    pub rrt: RrtParams,
    pub seeds: SeedParams,
    pub cost: CostParams,
    pub constraints: ConstraintParams,
    pub pso: PsoParams,
    pub sim: SimConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 1,
            mode: Mode::Ssp,
            airspace: AirspaceConfig::default(),
            obstacles: Vec::new(),
            random_obstacles: RandomObstacles::default(),
            uavs: default_uavs(),
            random_uavs: RandomUavs::default(),
            sudden: Vec::new(),
            sub_airspace: SubAirspaceConfig::default(),
            ssp: SspParams::default(),
            rrt: RrtParams::default(),
            seeds: SeedParams::default(),
            cost: CostParams::default(),
            constraints: ConstraintParams::default(),
            pso: PsoParams::default(),
            sim: SimConfig::default(),
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ScenarioError::Parse { line, column, message: e.message().to_string() }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_scenario(&text)
}

fn check_point(field: String, p: Point3, bounds: &Aabb) -> Result<(), ScenarioError> {
    if !p.is_finite() || !bounds.contains(&p) {
        return Err(invalid(field, format!("{p} lies outside the airspace")));
    }
    Ok(())
}

fn check_range(field: &str, r: [f64; 2]) -> Result<(), ScenarioError> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] > 0.0 && r[0] <= r[1]) {
        return Err(invalid(field, format!("expected 0 < min <= max, got [{}, {}]", r[0], r[1])));
    }
    Ok(())
}

impl Scenario {
    /// Canonical TOML form; parses back to an equal scenario.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario is serializable")
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::new(Point3::ORIGIN, self.airspace.extent.into())
    }

    pub fn fine_params(&self) -> FineParams {
        FineParams {
            rrt: self.rrt,
            seeds: self.seeds,
            pso: self.pso,
            cost: self.cost,
            constraints: self.constraints,
        }
    }

    pub fn settings(&self) -> SimSettings {
        SimSettings {
            ssp: self.ssp,
            fine: self.fine_params(),
            repair: RepairParams {
                rrt: self.rrt,
                smooth_points: self.seeds.smooth_points,
                margin: self.sim.replan_margin,
                ..RepairParams::default()
            },
            speed: self.sim.speed,
            dt: self.sim.dt,
            max_ticks: self.sim.max_ticks,
            stagger: self.sim.stagger,
            loss_rate: self.sim.loss_rate,
            exit_attempts: self.sim.exit_attempts,
            exit_clearance: self.sim.exit_clearance,
        }
    }

    /// Field-level checks that do not depend on the random draws.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (i, v) in self.airspace.extent.iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                return Err(invalid(format!("airspace.extent[{i}]"), "must be positive"));
            }
        }
        for (i, n) in self.airspace.cells.iter().enumerate() {
            if *n == 0 {
                return Err(invalid(format!("airspace.cells[{i}]"), "must be at least 1"));
            }
        }
        let bounds = self.bounds();
        for (i, o) in self.obstacles.iter().enumerate() {
            o.to_obstacle(0, ObstacleKind::Static)
                .validate()
                .map_err(|(f, r)| invalid(format!("obstacles[{i}].{f}"), r))?;
        }
        for (i, s) in self.sudden.iter().enumerate() {
            CuboidObstacle::sudden(0, s.anchor, [s.len_x, s.len_y, s.len_z])
                .validate()
                .map_err(|(f, r)| invalid(format!("sudden[{i}].{f}"), r))?;
        }
        for (i, o) in self.sub_airspace.obstacles.iter().enumerate() {
            o.to_obstacle(0, ObstacleKind::Static)
                .validate()
                .map_err(|(f, r)| invalid(format!("sub_airspace.obstacles[{i}].{f}"), r))?;
        }
        for (i, v) in self.sub_airspace.extent.iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                return Err(invalid(format!("sub_airspace.extent[{i}]"), "must be positive"));
            }
        }
        let sub = self.sub_airspace.bounds();
        check_point("sub_airspace.start".into(), self.sub_airspace.start, &sub)?;
        check_point("sub_airspace.goal".into(), self.sub_airspace.goal, &sub)?;
        for (i, u) in self.uavs.iter().enumerate() {
            check_point(format!("uavs[{i}].start"), u.start, &bounds)?;
            check_point(format!("uavs[{i}].goal"), u.goal, &bounds)?;
        }
        let r = &self.random_obstacles;
        check_range("random_obstacles.height_range", r.height_range)?;
        check_range("random_obstacles.footprint_range", r.footprint_range)?;
        if r.count > 0 && (r.footprint_range[1] > bounds.max.x || r.footprint_range[1] > bounds.max.y) {
            return Err(invalid("random_obstacles.footprint_range", "wider than the airspace"));
        }
        self.ssp.validate().map_err(|(f, r)| invalid(f, r))?;
        self.rrt.validate().map_err(|(f, r)| invalid(f, r))?;
        let c = &self.constraints;
        for (f, v) in [
            ("constraints.l_max", c.l_max),
            ("constraints.path_max", c.path_max),
            ("constraints.turn_max_deg", c.turn_max_deg),
            ("constraints.pitch_max_deg", c.pitch_max_deg),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(f, "must be positive"));
            }
        }
        if c.waypoints < 2 {
            return Err(invalid("constraints.waypoints", "need at least 2"));
        }
        if self.seeds.rrt_paths + self.seeds.birrt_paths + self.seeds.straight_paths == 0 {
            return Err(invalid("seeds", "population is empty"));
        }
        if self.seeds.smooth_points == 0 {
            return Err(invalid("seeds.smooth_points", "must be at least 1"));
        }
        let p = &self.pso;
        if p.max_iterations == 0 {
            return Err(invalid("pso.max_iterations", "must be positive"));
        }
        if !(p.v_max > 0.0) {
            return Err(invalid("pso.v_max", "must be positive"));
        }
        for (f, v) in [("cost.k3", self.cost.k3), ("cost.k4", self.cost.k4), ("cost.k5", self.cost.k5), ("cost.k6", self.cost.k6)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(f, "must be non-negative"));
            }
        }
        let s = &self.sim;
        if !(s.speed.is_finite() && s.speed > 0.0) {
            return Err(invalid("sim.speed", "must be positive"));
        }
        if !(s.dt.is_finite() && s.dt > 0.0) {
            return Err(invalid("sim.dt", "must be positive"));
        }
        if !(0.0..=1.0).contains(&s.loss_rate) {
            return Err(invalid("sim.loss_rate", "must lie in [0, 1]"));
        }
        if s.exit_attempts == 0 {
            return Err(invalid("sim.exit_attempts", "must be positive"));
        }
        if !(s.replan_margin >= 0.0) {
            return Err(invalid("sim.replan_margin", "must be non-negative"));
        }
        Ok(())
    }

    /// Draws the random obstacles and UAVs and assembles the world.
    pub fn build_world(&self) -> Result<World, ScenarioError> {
        self.validate()?;
        let bounds = self.bounds();
        let mut obstacles: Vec<CuboidObstacle> = self
            .obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| o.to_obstacle(i as u32 + 1, ObstacleKind::Static))
            .collect();

        let keep_clear: Vec<Point3> = self.uavs.iter().flat_map(|u| [u.start, u.goal]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(0);
        let r = &self.random_obstacles;
        let mut placed = 0;
        let mut tries = 0;
        while placed < r.count {
            tries += 1;
            if tries > 1000 * r.count.max(1) {
                return Err(invalid("random_obstacles.count", "cannot place obstacles clear of the UAV endpoints"));
            }
            let lx = rng.gen_range(r.footprint_range[0]..=r.footprint_range[1]);
            let ly = rng.gen_range(r.footprint_range[0]..=r.footprint_range[1]);
            let h = rng.gen_range(r.height_range[0]..=r.height_range[1]);
            let x = rng.gen_range(0.0..=bounds.max.x - lx);
            let y = rng.gen_range(0.0..=bounds.max.y - ly);
            let ob = CuboidObstacle::building(obstacles.len() as u32 + 1, Point3::new(x, y, 0.0), [lx, ly, h]);
            if keep_clear.iter().any(|p| ob.aabb().distance_to(p) <= r.clearance) {
                continue;
            }
            obstacles.push(ob);
            placed += 1;
        }

        let grid = AirspaceGrid::new(self.airspace.extent, self.airspace.cells, obstacles)
            .map_err(|e| invalid("airspace", e.to_string()))?;
        for (i, u) in self.uavs.iter().enumerate() {
            for (name, p) in [("start", u.start), ("goal", u.goal)] {
                if !grid.is_clear(p, 0.0) {
                    return Err(invalid(format!("uavs[{i}].{name}"), format!("{p} is inside an obstacle")));
                }
            }
        }

        let mut uavs = self.uavs.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let ru = &self.random_uavs;
        let mut tries = 0;
        while uavs.len() < self.uavs.len() + ru.count {
            tries += 1;
            if tries > 1000 * ru.count.max(1) {
                return Err(invalid("random_uavs.min_cells", "cannot draw start/goal pairs that far apart"));
            }
            let (Some(start), Some(goal)) =
                (sample_free_point(&grid, ru.clearance, &mut rng), sample_free_point(&grid, ru.clearance, &mut rng))
            else {
                return Err(invalid("random_uavs", "no free space for UAV endpoints"));
            };
            let (a, b) = (grid.locate(start).unwrap(), grid.locate(goal).unwrap());
            if grid.cell_distance(a, b) + 1 >= ru.min_cells {
                uavs.push(UavSpec { start, goal });
            }
        }

        let first_id = grid.obstacles().len() as u32 + 1;
        let sudden = self
            .sudden
            .iter()
            .enumerate()
            .map(|(i, s)| SuddenInjection {
                tick: s.tick,
                obstacle: CuboidObstacle::sudden(first_id + i as u32, s.anchor, [s.len_x, s.len_y, s.len_z]),
            })
            .collect();
        Ok(World { grid, uavs, sudden, settings: self.settings(), seed: self.seed })
    }
}
