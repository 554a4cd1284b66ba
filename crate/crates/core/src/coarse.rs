//! Coarse routing among sub-airspaces.
//!
//! Each cell carries a node cost `k1 * O_n + k2 * AEC_n` (static obstacle
//! count and current UAV count). A route is a face-connected sequence of
//! cells; its cost is the sum of its node costs, start and goal included.
//! Routes are recomputed with fresh occupancy each time a UAV enters a new
//! cell (the sliding window), and the exit point on each shared face is
//! steered toward the upcoming turns of the route (the attraction step).

use crate::adsb::OccupancyTable;
use crate::geometry::{Axis, Point3};
use crate::grid::{AirspaceGrid, FaceRect, GridError, SubAirspaceId};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

/// Clearance kept between a sampled exit point and the edges of its region.
pub const EXIT_CLEARANCE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoarseError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("no route from {0} to {1}")]
    Unreachable(SubAirspaceId, SubAirspaceId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SspParams {
    /// Weight of the static obstacle count.
    pub k1: f64,
    /// Weight of the UAV count.
    pub k2: f64,
    pub window_length: usize,
}

impl Default for SspParams {
    fn default() -> Self {
        Self { k1: 0.01, k2: 0.99, window_length: 4 }
    }
}

impl SspParams {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if !(self.k1 > 0.0) {
            return Err(("ssp.k1", "must be positive".into()));
        }
        if !(self.k2 > 0.0) {
            return Err(("ssp.k2", "must be positive".into()));
        }
        if (self.k1 + self.k2 - 1.0).abs() > 1e-9 {
            return Err(("ssp.k2", format!("k1 + k2 must equal 1, got {}", self.k1 + self.k2)));
        }
        if self.window_length == 0 {
            return Err(("ssp.window_length", "must be positive".into()));
        }
        Ok(())
    }
}

pub fn node_cost(params: &SspParams, static_obstacles: u32, uavs: u32) -> f64 {
    params.k1 * static_obstacles as f64 + params.k2 * uavs as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarsePlan {
    pub cells: Vec<SubAirspaceId>,
    /// One slot per consecutive pair of cells; filled as the UAV commits to
    /// a point on the shared face.
    pub exit_points: Vec<Option<Point3>>,
    pub total_cost: f64,
}

impl CoarsePlan {
    fn from_route(cells: Vec<SubAirspaceId>, total_cost: f64) -> Self {
        let exits = cells.len().saturating_sub(1);
        Self { cells, exit_points: vec![None; exits], total_cost }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Moves between consecutive cells.
    pub fn moves(&self, grid: &AirspaceGrid) -> Vec<(Axis, i8)> {
        self.cells
            .windows(2)
            .map(|w| grid.direction(w[0], w[1]).expect("face-adjacent route"))
            .collect()
    }

    pub fn direction_changes(&self, grid: &AirspaceGrid) -> usize {
        self.moves(grid).windows(2).filter(|m| m[0] != m[1]).count()
    }

    /// Drops the cells before `cell`, keeping exit commitments aligned.
    pub fn advance_to(&mut self, cell: SubAirspaceId) -> bool {
        match self.cells.iter().position(|&c| c == cell) {
            Some(k) => {
                self.cells.drain(..k);
                self.exit_points.drain(..k.min(self.exit_points.len()));
                true
            }
            None => false,
        }
    }

    /// Face-adjacency, no repeated cell, and every committed exit on its face.
    pub fn is_valid(&self, grid: &AirspaceGrid) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.cells.iter().all(|c| grid.is_valid(*c) && seen.insert(*c))
            && self.exit_points.len() + 1 == self.cells.len().max(1)
            && self.cells.windows(2).zip(&self.exit_points).all(|(w, e)| {
                grid.shared_face(w[0], w[1])
                    .map(|f| e.map_or(true, |p| f.contains(&p, 1e-9)))
                    .unwrap_or(false)
            })
    }
}

#[derive(Debug, Clone)]
struct Label {
    cost: f64,
    route: Vec<SubAirspaceId>,
}

fn cost_cmp(a: f64, b: f64) -> Ordering {
    let tol = 1e-9 * (1.0 + a.abs().max(b.abs()));
    if (a - b).abs() <= tol {
        Ordering::Equal
    } else {
        a.partial_cmp(&b).unwrap_or(Ordering::Equal)
    }
}

// cost, then fewer cells, then lexicographic id sequence
fn label_cmp(a: &Label, b: &Label) -> Ordering {
    cost_cmp(a.cost, b.cost)
        .then(a.route.len().cmp(&b.route.len()))
        .then_with(|| a.route.cmp(&b.route))
}

/// Minimum node-cost route from `start` to `goal` avoiding `excluded`.
///
/// Dijkstra over cells with non-negative node costs; labels are ordered by
/// cost, then route length, then lexicographic id sequence, which extends
/// consistently along edges so the tie-break is exact.
pub fn shortest_cell_route(
    grid: &AirspaceGrid,
    cost: impl Fn(SubAirspaceId) -> f64,
    start: SubAirspaceId,
    goal: SubAirspaceId,
    excluded: &[SubAirspaceId],
) -> Result<(Vec<SubAirspaceId>, f64), CoarseError> {
    for id in [start, goal] {
        if !grid.is_valid(id) {
            return Err(GridError::InvalidCell(id).into());
        }
    }
    if excluded.contains(&start) || excluded.contains(&goal) {
        return Err(CoarseError::Unreachable(start, goal));
    }
    let n = grid.len();
    let idx = |id: SubAirspaceId| id.0 as usize - 1;
    let mut best: Vec<Option<Label>> = vec![None; n];
    let mut done = vec![false; n];
    for &e in excluded {
        if grid.is_valid(e) {
            done[idx(e)] = true;
        }
    }
    best[idx(start)] = Some(Label { cost: cost(start).max(0.0), route: vec![start] });

    loop {
        let mut pick: Option<usize> = None;
        for i in 0..n {
            if done[i] {
                continue;
            }
            if let Some(l) = &best[i] {
                let better = match pick {
                    None => true,
                    Some(p) => label_cmp(l, best[p].as_ref().unwrap()) == Ordering::Less,
                };
                if better {
                    pick = Some(i);
                }
            }
        }
        let Some(u) = pick else {
            return Err(CoarseError::Unreachable(start, goal));
        };
        done[u] = true;
        let current = best[u].clone().unwrap();
        let uid = SubAirspaceId(u as u32 + 1);
        if uid == goal {
            return Ok((current.route, current.cost));
        }
        for v in grid.neighbors(uid) {
            let vi = idx(v);
            if done[vi] {
                continue;
            }
            let mut route = current.route.clone();
            route.push(v);
            let cand = Label { cost: current.cost + cost(v).max(0.0), route };
            let replace = match &best[vi] {
                None => true,
                Some(old) => label_cmp(&cand, old) == Ordering::Less,
            };
            if replace {
                best[vi] = Some(cand);
            }
        }
    }
}

/// Node-cost function over the grid for the given occupancy snapshot.
pub fn cell_cost<'a>(
    grid: &'a AirspaceGrid,
    params: &'a SspParams,
    occupancy: &'a OccupancyTable,
) -> impl Fn(SubAirspaceId) -> f64 + 'a {
    move |id| node_cost(params, grid.static_obstacle_count(id), occupancy.get(id))
}

/// Cheapest coarse route between two cells. Exit points are left unset.
pub fn plan_coarse(
    grid: &AirspaceGrid,
    params: &SspParams,
    occupancy: &OccupancyTable,
    start: SubAirspaceId,
    goal: SubAirspaceId,
) -> Result<CoarsePlan, CoarseError> {
    let (route, cost) = shortest_cell_route(grid, cell_cost(grid, params, occupancy), start, goal, &[])?;
    Ok(CoarsePlan::from_route(route, cost))
}

/// Sliding-window update, called when the UAV enters `current`.
///
/// If at most `window_length` cells of `plan` remain (counting `current`)
/// the plan is kept. Otherwise the route from `current` to the goal is
/// recomputed with the latest occupancy. A `committed_exit` pins the next
/// cell to the one across the face containing that point.
pub fn sliding_window_replan(
    grid: &AirspaceGrid,
    params: &SspParams,
    occupancy: &OccupancyTable,
    plan: &CoarsePlan,
    current: SubAirspaceId,
    committed_exit: Option<Point3>,
) -> Result<CoarsePlan, CoarseError> {
    let mut kept = plan.clone();
    if !kept.advance_to(current) {
        kept = CoarsePlan::from_route(vec![current], 0.0);
    }
    let goal = *plan.cells.last().unwrap_or(&current);
    if kept.cells.len() <= params.window_length && kept.cells.last() == Some(&goal) {
        return Ok(kept);
    }
    let cost = cell_cost(grid, params, occupancy);

    let pinned = committed_exit.and_then(|p| {
        grid.neighbors(current).into_iter().find(|&n| {
            grid.shared_face(current, n).map(|f| f.contains(&p, 1e-9)).unwrap_or(false)
        })
        .map(|n| (n, p))
    });
    match pinned {
        Some((next, p)) if next == goal => {
            let mut out = CoarsePlan::from_route(vec![current, goal], cost(current) + cost(goal));
            out.exit_points[0] = Some(p);
            Ok(out)
        }
        Some((next, p)) => {
            let (tail, tail_cost) = shortest_cell_route(grid, &cost, next, goal, &[current])?;
            let mut route = vec![current];
            route.extend(tail);
            let mut out = CoarsePlan::from_route(route, cost(current) + tail_cost);
            out.exit_points[0] = Some(p);
            Ok(out)
        }
        None => plan_coarse(grid, params, occupancy, current, goal),
    }
}

/// Part of the exit face toward which the route turns next.
///
/// `window` starts at the current cell; `window[0] -> window[1]` crosses
/// `face`. For each in-plane axis the first later move along it picks the
/// half of the face on that side of the midline. Two such axes give a
/// quadrant, one gives a half, none gives the whole face.
pub fn attraction_region(grid: &AirspaceGrid, window: &[SubAirspaceId], face: &FaceRect) -> FaceRect {
    let [ua, va] = face.in_plane_axes();
    let mut first_u: Option<i8> = None;
    let mut first_v: Option<i8> = None;
    for w in window.iter().skip(1).collect::<Vec<_>>().windows(2) {
        if let Some((axis, sign)) = grid.direction(*w[0], *w[1]) {
            if axis == ua && first_u.is_none() {
                first_u = Some(sign);
            } else if axis == va && first_v.is_none() {
                first_v = Some(sign);
            }
        }
    }
    let split = |(lo, hi): (f64, f64), sign: Option<i8>| {
        let mid = 0.5 * (lo + hi);
        match sign {
            Some(s) if s > 0 => (mid, hi),
            Some(_) => (lo, mid),
            None => (lo, hi),
        }
    };
    FaceRect { u: split(face.u, first_u), v: split(face.v, first_v), ..*face }
}

/// Uniform point inside `region`, kept `EXIT_CLEARANCE` from its edges
/// (or at the midline when the region is narrower than twice that).
pub fn select_exit_point<R: Rng + ?Sized>(region: &FaceRect, rng: &mut R) -> Point3 {
    let pick = |(lo, hi): (f64, f64), r: f64| {
        if hi - lo > 2.0 * EXIT_CLEARANCE {
            lo + EXIT_CLEARANCE + (hi - lo - 2.0 * EXIT_CLEARANCE) * r
        } else {
            0.5 * (lo + hi)
        }
    };
    let ru: f64 = rng.gen();
    let rv: f64 = rng.gen();
    region.point(pick(region.u, ru), pick(region.v, rv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat(nx: u32, ny: u32) -> AirspaceGrid {
        AirspaceGrid::new([nx as f64 * 10.0, ny as f64 * 10.0, 10.0], [nx, ny, 1], Vec::new()).unwrap()
    }

    fn ids(v: &[u32]) -> Vec<SubAirspaceId> {
        v.iter().copied().map(SubAirspaceId).collect()
    }

    #[test]
    fn node_cost_examples() {
        let p = SspParams::default();
        assert_eq!(node_cost(&p, 0, 0), 0.0);
        assert!((node_cost(&p, 2, 3) - 2.99).abs() < 1e-12);
        assert!((node_cost(&p, 5, 0) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(SspParams::default().validate().is_ok());
        let bad = SspParams { k1: 0.5, k2: 0.6, ..Default::default() };
        assert_eq!(bad.validate().unwrap_err().0, "ssp.k2");
    }

    #[test]
    fn single_cell_plan() {
        let g = flat(3, 3);
        let mut occ = OccupancyTable::empty(9);
        occ.set(SubAirspaceId(5), 2);
        let p = SspParams::default();
        let plan = plan_coarse(&g, &p, &occ, SubAirspaceId(5), SubAirspaceId(5)).unwrap();
        assert_eq!(plan.cells, ids(&[5]));
        assert!((plan.total_cost - node_cost(&p, 0, 2)).abs() < 1e-12);
        assert!(plan.exit_points.is_empty());
    }

    #[test]
    fn equal_costs_give_lexicographic_l_path() {
        let g = flat(3, 3);
        let (route, cost) =
            shortest_cell_route(&g, |_| 1.0, SubAirspaceId(1), SubAirspaceId(9), &[]).unwrap();
        assert_eq!(route, ids(&[1, 2, 3, 6, 9]));
        assert_eq!(cost, 5.0);
    }

    #[test]
    fn detours_around_expensive_cell() {
        let g = flat(2, 2);
        let costs = [0.0, 10.0, 0.0, 0.0];
        let (route, cost) = shortest_cell_route(
            &g,
            |id| costs[id.0 as usize - 1],
            SubAirspaceId(1),
            SubAirspaceId(4),
            &[],
        )
        .unwrap();
        assert_eq!(route, ids(&[1, 3, 4]));
        assert_eq!(cost, 0.0);
    }

    #[test]
    fn window_guard_and_idempotence() {
        let g = flat(5, 1);
        let p = SspParams::default();
        let occ = OccupancyTable::empty(5);
        let plan = plan_coarse(&g, &p, &occ, SubAirspaceId(1), SubAirspaceId(5)).unwrap();
        let again = sliding_window_replan(&g, &p, &occ, &plan, SubAirspaceId(1), None).unwrap();
        assert_eq!(again, plan);
        // four cells left: plan kept even if occupancy changes
        let mut busy = occ.clone();
        busy.set(SubAirspaceId(3), 9);
        let kept = sliding_window_replan(&g, &p, &busy, &plan, SubAirspaceId(2), None).unwrap();
        assert_eq!(kept.cells, ids(&[2, 3, 4, 5]));
    }

    #[test]
    fn replan_routes_around_crowded_cell() {
        // 4x3 grid so the window guard does not hold at the start
        let g = flat(4, 3);
        let p = SspParams::default();
        let occ = OccupancyTable::empty(12);
        let plan = plan_coarse(&g, &p, &occ, SubAirspaceId(1), SubAirspaceId(12)).unwrap();
        assert_eq!(plan.cells, ids(&[1, 2, 3, 4, 8, 12]));
        let mut busy = occ.clone();
        busy.set(SubAirspaceId(2), 5);
        let re = sliding_window_replan(&g, &p, &busy, &plan, SubAirspaceId(1), None).unwrap();
        assert_eq!(re.cells, ids(&[1, 5, 6, 7, 8, 12]));
        assert!(re.total_cost < node_cost(&p, 0, 5));
        assert!(re.is_valid(&g));
    }

    #[test]
    fn committed_exit_pins_next_cell() {
        let g = flat(4, 3);
        let p = SspParams::default();
        let mut busy = OccupancyTable::empty(12);
        busy.set(SubAirspaceId(2), 5);
        let plan = plan_coarse(&g, &p, &OccupancyTable::empty(12), SubAirspaceId(1), SubAirspaceId(12)).unwrap();
        let exit = Point3::new(10.0, 5.0, 5.0);
        let re = sliding_window_replan(&g, &p, &busy, &plan, SubAirspaceId(1), Some(exit)).unwrap();
        assert_eq!(re.cells[..2], ids(&[1, 2])[..]);
        assert_eq!(re.exit_points[0], Some(exit));
        assert!(re.is_valid(&g));
    }

    fn five_cube_grid() -> AirspaceGrid {
        AirspaceGrid::new([1000.0, 1000.0, 250.0], [5, 5, 5], Vec::new()).unwrap()
    }

    #[test]
    fn attraction_quadrant_half_and_full() {
        let g = five_cube_grid();
        let face = g.shared_face(SubAirspaceId(1), SubAirspaceId(2)).unwrap();
        // +x exit, then +y, then +z
        let quad = attraction_region(&g, &ids(&[1, 2, 7, 32]), &face);
        assert_eq!((quad.u, quad.v), ((100.0, 200.0), (25.0, 50.0)));
        assert!((quad.area() - face.area() / 4.0).abs() < 1e-9);
        let half = attraction_region(&g, &ids(&[1, 2, 7, 8]), &face);
        assert_eq!((half.u, half.v), ((100.0, 200.0), (0.0, 50.0)));
        let full = attraction_region(&g, &ids(&[1, 2, 3, 4]), &face);
        assert_eq!(full, face);
        // -y turn picks the lower half
        let face = g.shared_face(SubAirspaceId(6), SubAirspaceId(7)).unwrap();
        let down = attraction_region(&g, &ids(&[6, 7, 2]), &face);
        assert_eq!(down.u, (200.0, 300.0));
    }

    #[test]
    fn exit_point_sampling() {
        let g = five_cube_grid();
        let face = g.shared_face(SubAirspaceId(1), SubAirspaceId(2)).unwrap();
        let quad = attraction_region(&g, &ids(&[1, 2, 7, 32]), &face);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let p = select_exit_point(&quad, &mut rng);
            assert!(quad.contains(&p, 0.0));
            assert!(face.contains(&p, 0.0));
            assert!(p.y >= 101.0 && p.y <= 199.0 && p.z >= 26.0 && p.z <= 49.0);
        }
        let a = select_exit_point(&quad, &mut ChaCha8Rng::seed_from_u64(7));
        let b = select_exit_point(&quad, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        let point = FaceRect { axis: Axis::X, coord: 3.0, u: (4.0, 4.0), v: (5.0, 5.0) };
        assert_eq!(select_exit_point(&point, &mut rng), Point3::new(3.0, 4.0, 5.0));
    }
}
