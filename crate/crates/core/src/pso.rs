//! RRT-seeded particle swarm optimization of the waypoints inside one
//! sub-airspace.
//!
//! The swarm starts from smoothed RRT and Bi-RRT paths plus the straight
//! segment between the fixed endpoints. Each particle encodes the interior
//! waypoints; the objective is the obstacle-distance / length cost plus a
//! large penalty per violated flight constraint or colliding segment.

use crate::geometry::{
    pitch_angle, point_to_cuboid_distance, polyline_length, segment_collides, segment_delta,
    turn_angle, Aabb, Axis, CuboidObstacle, ObstacleKind, Point3,
};
use crate::grid::SubAirspaceId;
use crate::sampling::{birrt_plan, rrt_plan, smooth_and_resample, FreeSpace, PlanError, RrtParams, Waypath};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Penalty added per violated constraint or colliding segment.
pub const VIOLATION_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PsoError {
    #[error("no seed trajectories")]
    EmptySwarm,
    #[error("seed trajectories disagree on endpoints or waypoint count")]
    MismatchedSeeds,
    #[error("every candidate trajectory has infinite cost")]
    NoFeasibleSeed,
    #[error(transparent)]
    Planning(#[from] PlanError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    pub k3: f64,
    pub k4: f64,
    /// Static-obstacle distance weight; ignored when there are none.
    pub k5: f64,
    /// Sudden-obstacle distance weight; ignored when there are none.
    pub k6: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self { k3: 0.8, k4: 0.2, k5: 100.0, k6: 100.0 }
    }
}

fn sub_airspace_box() -> Aabb {
    Aabb::new(Point3::ORIGIN, Point3::new(200.0, 200.0, 50.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintParams {
    /// Maximum distance between adjacent waypoints (m).
    pub l_max: f64,
    /// Maximum trajectory length inside the sub-airspace (m).
    pub path_max: f64,
    pub turn_max_deg: f64,
    pub pitch_max_deg: f64,
    /// Waypoints per sub-airspace trajectory.
    pub waypoints: usize,
    /// Sub-airspace box; set per cell by the caller.
    #[serde(skip, default = "sub_airspace_box")]
    pub bounds: Aabb,
}

impl Default for ConstraintParams {
    fn default() -> Self {
        Self {
            l_max: 40.0,
            path_max: 400.0,
            turn_max_deg: 60.0,
            pitch_max_deg: 45.0,
            waypoints: 10,
            bounds: sub_airspace_box(),
        }
    }
}

impl ConstraintParams {
    pub fn with_bounds(mut self, bounds: Aabb) -> Self {
        self.bounds = bounds;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoParams {
    pub max_iterations: usize,
    pub inertia: f64,
    pub c1: f64,
    pub c2: f64,
    /// Per-coordinate speed limit, meters per iteration.
    pub v_max: f64,
    /// Stop after this many iterations without improvement.
    pub stall_iterations: usize,
    pub tolerance: f64,
}

impl Default for PsoParams {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            inertia: 0.8,
            c1: 1.4,
            c2: 1.4,
            v_max: 2.5,
            stall_iterations: 20,
            tolerance: 1e-6,
        }
    }
}

/// Seed population composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedParams {
    pub rrt_paths: usize,
    pub birrt_paths: usize,
    pub straight_paths: usize,
    /// Moving-average window used when smoothing seeds.
    pub smooth_points: usize,
}

impl Default for SeedParams {
    fn default() -> Self {
        Self { rrt_paths: 15, birrt_paths: 15, straight_paths: 1, smooth_points: 5 }
    }
}

fn distance_term(weight: f64, points: &[Point3], obstacles: &[&CuboidObstacle]) -> f64 {
    if obstacles.is_empty() || weight == 0.0 {
        return 0.0;
    }
    let sum: f64 = points
        .iter()
        .map(|p| obstacles.iter().map(|ob| point_to_cuboid_distance(*p, ob)).sum::<f64>())
        .sum();
    if sum == 0.0 {
        f64::INFINITY
    } else {
        weight / sum
    }
}

/// `k3 * (k5 / sum lob + k6 / sum lso) + k4 * length`, summing distances
/// over every waypoint and every obstacle of each kind.
pub fn trajectory_cost(
    points: &[Point3],
    static_obstacles: &[CuboidObstacle],
    sudden_obstacles: &[CuboidObstacle],
    cp: &CostParams,
) -> f64 {
    let st: Vec<&CuboidObstacle> = static_obstacles.iter().collect();
    let su: Vec<&CuboidObstacle> = sudden_obstacles.iter().collect();
    cp.k3 * (distance_term(cp.k5, points, &st) + distance_term(cp.k6, points, &su))
        + cp.k4 * polyline_length(points)
}

/// Constraint violations of a waypoint list, counted per instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Violations {
    /// Segments longer than `l_max`.
    pub segment_length: usize,
    /// 1 if the total length exceeds `path_max`.
    pub total_length: usize,
    /// Interior waypoints turning more than allowed (or with a vertical
    /// neighbouring segment).
    pub turn: usize,
    /// Segments climbing or descending too steeply (or of zero length).
    pub pitch: usize,
    /// Waypoints outside the sub-airspace box.
    pub bounds: usize,
    /// Segments touching an obstacle.
    pub collisions: usize,
}

impl Violations {
    pub fn total(&self) -> usize {
        self.segment_length + self.total_length + self.turn + self.pitch + self.bounds + self.collisions
    }

    pub fn is_feasible(&self) -> bool {
        self.total() == 0
    }
}

pub fn violations(points: &[Point3], c: &ConstraintParams, obstacles: &[CuboidObstacle]) -> Violations {
    let mut v = Violations::default();
    let deltas: Vec<_> = points.windows(2).map(|w| segment_delta(w[0], w[1])).collect();
    let mut total = 0.0;
    for d in &deltas {
        let len = d.length();
        total += len;
        if len > c.l_max {
            v.segment_length += 1;
        }
        match pitch_angle(*d) {
            Ok(a) if a.abs() <= c.pitch_max_deg => {}
            _ => v.pitch += 1,
        }
    }
    if total > c.path_max {
        v.total_length = 1;
    }
    for w in deltas.windows(2) {
        match turn_angle(w[0], w[1]) {
            Ok(a) if a <= c.turn_max_deg => {}
            _ => v.turn += 1,
        }
    }
    v.bounds = points.iter().filter(|p| !c.bounds.contains_with_tolerance(p, 1e-9)).count();
    v.collisions = points.windows(2).filter(|w| segment_collides(w[0], w[1], obstacles)).count();
    v
}

/// `VIOLATION_PENALTY` times the number of violations; zero when feasible.
pub fn feasibility_penalty(points: &[Point3], c: &ConstraintParams, obstacles: &[CuboidObstacle]) -> f64 {
    VIOLATION_PENALTY * violations(points, c, obstacles).total() as f64
}

/// Everything needed to score a candidate trajectory in one sub-airspace.
#[derive(Debug, Clone)]
pub struct Problem {
    pub static_obstacles: Vec<CuboidObstacle>,
    pub sudden_obstacles: Vec<CuboidObstacle>,
    pub cost: CostParams,
    pub constraints: ConstraintParams,
    all: Vec<CuboidObstacle>,
}

impl Problem {
    pub fn new(obstacles: &[CuboidObstacle], cost: CostParams, constraints: ConstraintParams) -> Self {
        let static_obstacles: Vec<_> = obstacles.iter().copied().filter(|o| o.kind == ObstacleKind::Static).collect();
        let sudden_obstacles: Vec<_> = obstacles.iter().copied().filter(|o| o.kind == ObstacleKind::Sudden).collect();
        Self { static_obstacles, sudden_obstacles, cost, constraints, all: obstacles.to_vec() }
    }

    pub fn obstacles(&self) -> &[CuboidObstacle] {
        &self.all
    }

    pub fn free_space(&self) -> FreeSpace<'_> {
        FreeSpace::new(self.constraints.bounds, &self.all)
    }

    pub fn cost(&self, points: &[Point3]) -> f64 {
        trajectory_cost(points, &self.static_obstacles, &self.sudden_obstacles, &self.cost)
    }

    pub fn violations(&self, points: &[Point3]) -> Violations {
        violations(points, &self.constraints, &self.all)
    }

    /// Cost plus feasibility penalty.
    pub fn penalized_cost(&self, points: &[Point3]) -> f64 {
        self.cost(points) + VIOLATION_PENALTY * self.violations(points).total() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoOutcome {
    pub best: Waypath,
    /// Penalized cost of `best`.
    pub best_cost: f64,
    /// Global-best penalized cost after initialization and after every
    /// iteration.
    pub history: Vec<f64>,
    /// Penalized cost of each seed, in input order.
    pub seed_costs: Vec<f64>,
}

fn encode(points: &[Point3]) -> Vec<f64> {
    points[1..points.len() - 1].iter().flat_map(|p| p.to_array()).collect()
}

fn decode(start: Point3, goal: Point3, x: &[f64]) -> Vec<Point3> {
    let mut out = Vec::with_capacity(x.len() / 3 + 2);
    out.push(start);
    out.extend(x.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])));
    out.push(goal);
    out
}

/// Global-best PSO over the interior waypoints of `seeds`.
///
/// Velocities are clamped per coordinate to `v_max` and positions to the
/// sub-airspace box. Runs until `max_iterations` or until the global best
/// improves by less than `tolerance` for `stall_iterations` iterations in
/// a row.
pub fn optimize<R: Rng + ?Sized>(
    seeds: &[Waypath],
    problem: &Problem,
    pso: &PsoParams,
    rng: &mut R,
) -> Result<PsoOutcome, PsoError> {
    let first = seeds.first().ok_or(PsoError::EmptySwarm)?;
    let (start, goal, j) = (first.start(), first.end(), first.len());
    if j < 2 || seeds.iter().any(|s| s.len() != j || s.start() != start || s.end() != goal) {
        return Err(PsoError::MismatchedSeeds);
    }
    let cell = first.sub_airspace;
    let eval = |x: &[f64]| problem.penalized_cost(&decode(start, goal, x));

    let mut pos: Vec<Vec<f64>> = seeds.iter().map(|s| encode(&s.waypoints)).collect();
    let dim = pos[0].len();
    let mut vel: Vec<Vec<f64>> = (0..seeds.len())
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..=1.0) * pso.v_max).collect())
        .collect();
    let seed_costs: Vec<f64> = pos.iter().map(|x| eval(x)).collect();
    let mut pbest = pos.clone();
    let mut pbest_cost = seed_costs.clone();
    let mut g = 0;
    for i in 1..seeds.len() {
        if pbest_cost[i] < pbest_cost[g] {
            g = i;
        }
    }
    let mut gbest = pbest[g].clone();
    let mut gbest_cost = pbest_cost[g];
    let mut history = vec![gbest_cost];

    let bounds = problem.constraints.bounds;
    let lo: Vec<f64> = (0..dim).map(|d| bounds.min.get(Axis::ALL[d % 3])).collect();
    let hi: Vec<f64> = (0..dim).map(|d| bounds.max.get(Axis::ALL[d % 3])).collect();

    let mut stale = 0;
    if dim > 0 {
        for _ in 0..pso.max_iterations {
            let before = gbest_cost;
            for i in 0..pos.len() {
                for d in 0..dim {
                    let r1: f64 = rng.gen();
                    let r2: f64 = rng.gen();
                    let v = pso.inertia * vel[i][d]
                        + pso.c1 * r1 * (pbest[i][d] - pos[i][d])
                        + pso.c2 * r2 * (gbest[d] - pos[i][d]);
                    vel[i][d] = v.clamp(-pso.v_max, pso.v_max);
                    pos[i][d] = (pos[i][d] + vel[i][d]).clamp(lo[d], hi[d]);
                }
                let c = eval(&pos[i]);
                if c < pbest_cost[i] {
                    pbest_cost[i] = c;
                    pbest[i].clone_from(&pos[i]);
                    if c < gbest_cost {
                        gbest_cost = c;
                        gbest.clone_from(&pos[i]);
                    }
                }
            }
            history.push(gbest_cost);
            // inf - inf is NaN and counts as no improvement
            if before - gbest_cost >= pso.tolerance {
                stale = 0;
            } else {
                stale += 1;
                if stale >= pso.stall_iterations {
                    break;
                }
            }
        }
    }
    if !gbest_cost.is_finite() {
        return Err(PsoError::NoFeasibleSeed);
    }
    Ok(PsoOutcome {
        best: Waypath::new(cell, decode(start, goal, &gbest)),
        best_cost: gbest_cost,
        history,
        seed_costs,
    })
}

/// Smoothed RRT and Bi-RRT paths plus the straight segment, all resampled
/// to `constraints.waypoints` points. The straight seed is kept even when
/// it collides.
pub fn build_seed_population<R: Rng + ?Sized>(
    problem: &Problem,
    cell: SubAirspaceId,
    start: Point3,
    goal: Point3,
    rrt: &RrtParams,
    seeds: &SeedParams,
    rng: &mut R,
) -> Result<Vec<Waypath>, PlanError> {
    let space = problem.free_space();
    let j = problem.constraints.waypoints;
    let mut out = Vec::with_capacity(seeds.rrt_paths + seeds.birrt_paths + seeds.straight_paths);
    let mut last_err = None;
    let sampled = seeds.rrt_paths + seeds.birrt_paths;
    for k in 0..sampled {
        let raw = if k < seeds.rrt_paths {
            rrt_plan(&space, start, goal, rrt, rng)
        } else {
            birrt_plan(&space, start, goal, rrt, rng)
        };
        match raw {
            Ok(raw) if raw.len() >= 2 => {
                out.push(Waypath::new(cell, smooth_and_resample(&raw, &space, j, seeds.smooth_points)))
            }
            Ok(_) => out.push(Waypath::straight(cell, start, goal, j)),
            Err(e @ PlanError::InvalidEndpoint(_)) => return Err(e),
            Err(e) => last_err = Some(e),
        }
    }
    if sampled > 0 && out.is_empty() {
        return Err(last_err.unwrap_or(PlanError::PlanningFailed(rrt.max_iterations)));
    }
    for _ in 0..seeds.straight_paths {
        out.push(Waypath::straight(cell, start, goal, j));
    }
    Ok(out)
}

/// Which sampler(s) produce the sub-airspace trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinePlanner {
    PsoRrt,
    RrtOnly,
    BirrtOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineParams {
    pub rrt: RrtParams,
    pub seeds: SeedParams,
    pub pso: PsoParams,
    pub cost: CostParams,
    pub constraints: ConstraintParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinePlan {
    pub waypath: Waypath,
    /// Unpenalized trajectory cost.
    pub cost: f64,
    pub violations: Violations,
    /// Convergence history (PSO only).
    pub history: Vec<f64>,
    pub seed_costs: Vec<f64>,
}

impl FinePlan {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_feasible()
    }
}

/// Plans the trajectory from `start` to `goal` inside `bounds`.
pub fn plan_sub_airspace<R: Rng + ?Sized>(
    planner: FinePlanner,
    cell: SubAirspaceId,
    bounds: Aabb,
    obstacles: &[CuboidObstacle],
    start: Point3,
    goal: Point3,
    params: &FineParams,
    rng: &mut R,
) -> Result<FinePlan, PsoError> {
    let problem = Problem::new(obstacles, params.cost, params.constraints.with_bounds(bounds));
    let j = problem.constraints.waypoints;
    let finish = |waypath: Waypath, history: Vec<f64>, seed_costs: Vec<f64>| FinePlan {
        cost: problem.cost(&waypath.waypoints),
        violations: problem.violations(&waypath.waypoints),
        waypath,
        history,
        seed_costs,
    };
    match planner {
        FinePlanner::PsoRrt => {
            let seeds = build_seed_population(&problem, cell, start, goal, &params.rrt, &params.seeds, rng)?;
            let out = optimize(&seeds, &problem, &params.pso, rng)?;
            Ok(finish(out.best, out.history, out.seed_costs))
        }
        FinePlanner::RrtOnly | FinePlanner::BirrtOnly => {
            let space = problem.free_space();
            let raw = if planner == FinePlanner::RrtOnly {
                rrt_plan(&space, start, goal, &params.rrt, rng)?
            } else {
                birrt_plan(&space, start, goal, &params.rrt, rng)?
            };
            let pts = if raw.len() >= 2 {
                smooth_and_resample(&raw, &space, j, params.seeds.smooth_points)
            } else {
                vec![start; j]
            };
            Ok(finish(Waypath::new(cell, pts), Vec::new(), Vec::new()))
        }
    }
}
