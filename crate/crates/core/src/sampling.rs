//! RRT and bidirectional RRT inside one sub-airspace, plus the
//! shortcut / moving-average / resample pipeline that turns a raw tree path
//! into a fixed-size waypoint list.

use crate::geometry::{segment_collides, Aabb, CuboidObstacle, Point3};
use crate::grid::SubAirspaceId;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("no path found after {0} iterations")]
    PlanningFailed(usize),
    #[error("endpoint {0} is outside the bounds or inside an obstacle")]
    InvalidEndpoint(Point3),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RrtParams {
    /// Maximum tree extension, meters.
    pub step_size: f64,
    pub max_iterations: usize,
    pub goal_bias: f64,
}

impl Default for RrtParams {
    fn default() -> Self {
        Self { step_size: 10.0, max_iterations: 5000, goal_bias: 0.05 }
    }
}

impl RrtParams {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(("rrt.step_size", "must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(("rrt.max_iterations", "must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err(("rrt.goal_bias", "must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Fixed-size waypoint list inside one sub-airspace. The first and last
/// points are boundary conditions and never move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypath {
    pub sub_airspace: SubAirspaceId,
    pub waypoints: Vec<Point3>,
}

impl Waypath {
    pub fn new(sub_airspace: SubAirspaceId, waypoints: Vec<Point3>) -> Self {
        Self { sub_airspace, waypoints }
    }

    /// `j` equally spaced points on the segment `start`-`goal`.
    pub fn straight(sub_airspace: SubAirspaceId, start: Point3, goal: Point3, j: usize) -> Self {
        Self::new(sub_airspace, resample_arc_length(&[start, goal], j))
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn start(&self) -> Point3 {
        self.waypoints[0]
    }

    pub fn end(&self) -> Point3 {
        *self.waypoints.last().unwrap()
    }

    pub fn length(&self) -> f64 {
        crate::geometry::polyline_length(&self.waypoints)
    }

    pub fn is_collision_free(&self, obstacles: &[CuboidObstacle]) -> bool {
        !crate::geometry::polyline_collides(&self.waypoints, obstacles)
    }
}

/// Bounded region and the obstacles a planner must avoid.
#[derive(Debug, Clone, Copy)]
pub struct FreeSpace<'a> {
    pub bounds: Aabb,
    pub obstacles: &'a [CuboidObstacle],
}

impl<'a> FreeSpace<'a> {
    pub fn new(bounds: Aabb, obstacles: &'a [CuboidObstacle]) -> Self {
        Self { bounds, obstacles }
    }

    pub fn segment_free(&self, a: Point3, b: Point3) -> bool {
        !segment_collides(a, b, self.obstacles)
    }

    pub fn point_free(&self, p: Point3) -> bool {
        self.bounds.contains_with_tolerance(&p, 1e-9)
            && !crate::geometry::point_collides(p, self.obstacles, 0.0)
    }

    pub fn polyline_free(&self, pts: &[Point3]) -> bool {
        pts.windows(2).all(|w| self.segment_free(w[0], w[1]))
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point3 {
        let (lo, hi) = (self.bounds.min, self.bounds.max);
        Point3::new(
            lo.x + (hi.x - lo.x) * rng.gen::<f64>(),
            lo.y + (hi.y - lo.y) * rng.gen::<f64>(),
            lo.z + (hi.z - lo.z) * rng.gen::<f64>(),
        )
    }
}

struct Tree {
    nodes: Vec<Point3>,
    parents: Vec<usize>,
}

impl Tree {
    fn new(root: Point3) -> Self {
        Self { nodes: vec![root], parents: vec![usize::MAX] }
    }

    fn nearest(&self, p: &Point3) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (n.x - p.x).powi(2) + (n.y - p.y).powi(2) + (n.z - p.z).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    fn push(&mut self, p: Point3, parent: usize) -> usize {
        self.nodes.push(p);
        self.parents.push(parent);
        self.nodes.len() - 1
    }

    /// Root-to-node path.
    fn path_to(&self, mut i: usize) -> Vec<Point3> {
        let mut out = Vec::new();
        while i != usize::MAX {
            out.push(self.nodes[i]);
            i = self.parents[i];
        }
        out.reverse();
        out
    }
}

fn steer(from: Point3, to: Point3, step: f64) -> Point3 {
    let d = from.distance(&to);
    if d <= step {
        to
    } else {
        from.lerp(&to, step / d)
    }
}

fn check_endpoints(space: &FreeSpace, start: Point3, goal: Point3) -> Result<(), PlanError> {
    for p in [start, goal] {
        if !space.point_free(p) {
            return Err(PlanError::InvalidEndpoint(p));
        }
    }
    Ok(())
}

/// Goal-biased RRT. Every edge is at most `step_size` long except the final
/// connection, which is also bounded by `step_size`.
pub fn rrt_plan<R: Rng + ?Sized>(
    space: &FreeSpace,
    start: Point3,
    goal: Point3,
    params: &RrtParams,
    rng: &mut R,
) -> Result<Vec<Point3>, PlanError> {
    check_endpoints(space, start, goal)?;
    if start == goal {
        return Ok(vec![start]);
    }
    let mut tree = Tree::new(start);
    if start.distance(&goal) <= params.step_size && space.segment_free(start, goal) {
        return Ok(vec![start, goal]);
    }
    for _ in 0..params.max_iterations {
        let target = if rng.gen::<f64>() < params.goal_bias { goal } else { space.sample(rng) };
        let near = tree.nearest(&target);
        let from = tree.nodes[near];
        let new = steer(from, target, params.step_size);
        if new == from || !space.segment_free(from, new) {
            continue;
        }
        let k = tree.push(new, near);
        if new == goal {
            return Ok(tree.path_to(k));
        }
        if new.distance(&goal) <= params.step_size && space.segment_free(new, goal) {
            let g = tree.push(goal, k);
            return Ok(tree.path_to(g));
        }
    }
    Err(PlanError::PlanningFailed(params.max_iterations))
}

enum Extend {
    Trapped,
    Advanced(usize),
    Reached(usize),
}

fn extend(tree: &mut Tree, space: &FreeSpace, target: Point3, step: f64) -> Extend {
    let near = tree.nearest(&target);
    let from = tree.nodes[near];
    let new = steer(from, target, step);
    if new == from {
        return Extend::Reached(near);
    }
    if !space.segment_free(from, new) {
        return Extend::Trapped;
    }
    let k = tree.push(new, near);
    if new == target {
        Extend::Reached(k)
    } else {
        Extend::Advanced(k)
    }
}

/// Bidirectional RRT: trees grow from both ends, and after every extension
/// the other tree greedily steps toward the new node until it connects or
/// is blocked.
pub fn birrt_plan<R: Rng + ?Sized>(
    space: &FreeSpace,
    start: Point3,
    goal: Point3,
    params: &RrtParams,
    rng: &mut R,
) -> Result<Vec<Point3>, PlanError> {
    check_endpoints(space, start, goal)?;
    if start == goal {
        return Ok(vec![start]);
    }
    let step = params.step_size;
    let mut from_start = Tree::new(start);
    let mut from_goal = Tree::new(goal);
    let mut forward = true;
    for _ in 0..params.max_iterations {
        let (a, b) = if forward {
            (&mut from_start, &mut from_goal)
        } else {
            (&mut from_goal, &mut from_start)
        };
        let target = if rng.gen::<f64>() < params.goal_bias { b.nodes[0] } else { space.sample(rng) };
        let new = match extend(a, space, target, step) {
            Extend::Trapped => None,
            Extend::Advanced(k) | Extend::Reached(k) => Some(k),
        };
        if let Some(ka) = new {
            let q = a.nodes[ka];
            loop {
                match extend(b, space, q, step) {
                    Extend::Trapped => break,
                    Extend::Advanced(_) => continue,
                    Extend::Reached(kb) => {
                        let (s_idx, g_idx) = if forward { (ka, kb) } else { (kb, ka) };
                        let mut path = from_start.path_to(s_idx);
                        let mut tail = from_goal.path_to(g_idx);
                        tail.reverse();
                        // both halves end at the meeting point
                        if path.last() == tail.first() {
                            tail.remove(0);
                        }
                        path.extend(tail);
                        return Ok(path);
                    }
                }
            }
        }
        forward = !forward;
    }
    Err(PlanError::PlanningFailed(params.max_iterations))
}

/// Greedy shortcut: from each kept point jump to the farthest later point
/// reachable by a collision-free straight segment.
pub fn shortcut(path: &[Point3], space: &FreeSpace) -> Vec<Point3> {
    if path.len() <= 2 {
        return path.to_vec();
    }
    let mut out = vec![path[0]];
    let mut i = 0;
    while i < path.len() - 1 {
        let mut next = i + 1;
        for k in (i + 2..path.len()).rev() {
            if space.segment_free(path[i], path[k]) {
                next = k;
                break;
            }
        }
        out.push(path[next]);
        i = next;
    }
    out
}

/// `n` points equally spaced by arc length along the polyline.
pub fn resample_arc_length(path: &[Point3], n: usize) -> Vec<Point3> {
    assert!(!path.is_empty());
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![path[0]];
    }
    let mut cum = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for w in path.windows(2) {
        acc += w[0].distance(&w[1]);
        cum.push(acc);
    }
    let total = acc;
    let mut out = Vec::with_capacity(n);
    out.push(path[0]);
    let mut seg = 0;
    for i in 1..n - 1 {
        let s = total * i as f64 / (n - 1) as f64;
        while seg + 1 < path.len() - 1 && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(path[seg].lerp(&path[seg + 1], t));
    }
    out.push(*path.last().unwrap());
    out
}

/// `n` points that keep every vertex of `path` and split each segment into
/// equal parts, longest parts first. Requires `n >= path.len()`.
fn resample_keep_vertices(path: &[Point3], n: usize) -> Vec<Point3> {
    debug_assert!(n >= path.len() && path.len() >= 2);
    let lens: Vec<f64> = path.windows(2).map(|w| w[0].distance(&w[1])).collect();
    let mut parts = vec![1usize; lens.len()];
    for _ in 0..n - path.len() {
        let (k, _) = lens
            .iter()
            .zip(&parts)
            .enumerate()
            .map(|(k, (l, p))| (k, l / *p as f64))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        parts[k] += 1;
    }
    let mut out = Vec::with_capacity(n);
    for (k, w) in path.windows(2).enumerate() {
        for i in 0..parts[k] {
            out.push(w[0].lerp(&w[1], i as f64 / parts[k] as f64));
        }
    }
    out.push(*path.last().unwrap());
    out
}

fn moving_average(path: &[Point3], window: usize, space: &FreeSpace) -> Vec<Point3> {
    let half = window / 2;
    let n = path.len();
    if half == 0 || n < 3 {
        return path.to_vec();
    }
    let mut out = path.to_vec();
    for i in 1..n - 1 {
        let h = half.min(i).min(n - 1 - i);
        let m = (2 * h + 1) as f64;
        let (sx, sy, sz) = path[i - h..=i + h]
            .iter()
            .fold((0.0, 0.0, 0.0), |(x, y, z), p| (x + p.x, y + p.y, z + p.z));
        let cand = Point3::new(sx / m, sy / m, sz / m);
        // skip averaged positions that would collide
        if space.segment_free(out[i - 1], cand) && space.segment_free(cand, path[i + 1]) {
            out[i] = cand;
        }
    }
    out
}

/// Shortcut, smooth and resample a collision-free raw path to exactly `j`
/// points. Endpoints are preserved exactly and the result is never longer
/// than the input.
pub fn smooth_and_resample(
    raw: &[Point3],
    space: &FreeSpace,
    j: usize,
    smooth_window: usize,
) -> Vec<Point3> {
    assert!(raw.len() >= 2 && j >= 2);
    let short = shortcut(raw, space);
    let short_len = crate::geometry::polyline_length(&short);
    let dense = resample_keep_vertices(&short, short.len().max(4 * (j - 1) + 1));
    let smoothed = moving_average(&dense, smooth_window, space);
    let base = if space.polyline_free(&smoothed)
        && crate::geometry::polyline_length(&smoothed) <= short_len
    {
        smoothed
    } else {
        dense
    };
    let out = resample_arc_length(&base, j);
    if space.polyline_free(&out) {
        return out;
    }
    if short.len() <= j {
        return resample_keep_vertices(&short, j);
    }
    resample_arc_length(&short, j)
}

/// Shortcut and smooth a raw path, keeping roughly `spacing` between
/// output points instead of a fixed count.
pub fn smooth_with_spacing(
    raw: &[Point3],
    space: &FreeSpace,
    spacing: f64,
    smooth_window: usize,
) -> Vec<Point3> {
    if raw.len() < 2 {
        return raw.to_vec();
    }
    let short = shortcut(raw, space);
    let len = crate::geometry::polyline_length(&short);
    let n = ((len / spacing.max(1e-6)).ceil() as usize + 1).max(short.len()).max(2);
    smooth_and_resample(raw, space, n, smooth_window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::polyline_length;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cell() -> Aabb {
        Aabb::new(Point3::ORIGIN, Point3::new(200.0, 200.0, 50.0))
    }

    fn three_buildings() -> Vec<CuboidObstacle> {
        vec![
            CuboidObstacle::building(1, Point3::new(40.0, 50.0, 0.0), [50.0, 50.0, 100.0]),
            CuboidObstacle::building(2, Point3::new(20.0, 120.0, 0.0), [30.0, 30.0, 100.0]),
            CuboidObstacle::building(3, Point3::new(150.0, 125.0, 0.0), [30.0, 30.0, 100.0]),
        ]
    }

    /// Box of walls 1 m thick around [90, 110]^2 x [20, 30].
    fn sealed() -> Vec<CuboidObstacle> {
        let (lo, hi, t) = (88.0, 112.0, 2.0);
        vec![
            CuboidObstacle::sudden(1, Point3::new(lo, lo, 18.0), [hi - lo, hi - lo, t]),
            CuboidObstacle::sudden(2, Point3::new(lo, lo, 30.0), [hi - lo, hi - lo, t]),
            CuboidObstacle::sudden(3, Point3::new(lo, lo, 18.0), [t, hi - lo, 14.0]),
            CuboidObstacle::sudden(4, Point3::new(hi - t, lo, 18.0), [t, hi - lo, 14.0]),
            CuboidObstacle::sudden(5, Point3::new(lo, lo, 18.0), [hi - lo, t, 14.0]),
            CuboidObstacle::sudden(6, Point3::new(lo, hi - t, 18.0), [hi - lo, t, 14.0]),
        ]
    }

    fn check_path(path: &[Point3], space: &FreeSpace, start: Point3, goal: Point3, step: f64) {
        assert_eq!(path[0], start);
        assert_eq!(*path.last().unwrap(), goal);
        for w in path.windows(2) {
            assert!(w[0].distance(&w[1]) <= step + 1e-9);
            assert!(space.segment_free(w[0], w[1]));
        }
    }

    #[test]
    fn both_planners_connect_in_open_space() {
        let space = FreeSpace::new(cell(), &[]);
        let (s, g) = (Point3::new(0.0, 10.0, 10.0), Point3::new(200.0, 180.0, 40.0));
        let p = RrtParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        check_path(&rrt_plan(&space, s, g, &p, &mut rng).unwrap(), &space, s, g, 10.0);
        check_path(&birrt_plan(&space, s, g, &p, &mut rng).unwrap(), &space, s, g, 10.0);
        assert_eq!(rrt_plan(&space, s, s, &p, &mut rng).unwrap(), vec![s]);
        assert_eq!(birrt_plan(&space, s, s, &p, &mut rng).unwrap(), vec![s]);
    }

    #[test]
    fn planners_avoid_the_buildings() {
        let obs = three_buildings();
        let space = FreeSpace::new(cell(), &obs);
        let (s, g) = (Point3::new(0.0, 75.0, 25.0), Point3::new(200.0, 140.0, 25.0));
        let p = RrtParams::default();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            check_path(&rrt_plan(&space, s, g, &p, &mut rng).unwrap(), &space, s, g, 10.0);
            check_path(&birrt_plan(&space, s, g, &p, &mut rng).unwrap(), &space, s, g, 10.0);
        }
    }

    #[test]
    fn sealed_start_fails() {
        let obs = sealed();
        let space = FreeSpace::new(cell(), &obs);
        let (s, g) = (Point3::new(100.0, 100.0, 25.0), Point3::new(190.0, 190.0, 25.0));
        let p = RrtParams { max_iterations: 800, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(rrt_plan(&space, s, g, &p, &mut rng), Err(PlanError::PlanningFailed(800)));
        assert_eq!(birrt_plan(&space, s, g, &p, &mut rng), Err(PlanError::PlanningFailed(800)));
    }

    #[test]
    fn endpoints_must_be_free() {
        let obs = three_buildings();
        let space = FreeSpace::new(cell(), &obs);
        let inside = Point3::new(60.0, 60.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            rrt_plan(&space, inside, Point3::ORIGIN, &RrtParams::default(), &mut rng),
            Err(PlanError::InvalidEndpoint(_))
        ));
    }

    #[test]
    fn planning_is_deterministic() {
        let obs = three_buildings();
        let space = FreeSpace::new(cell(), &obs);
        let (s, g) = (Point3::new(0.0, 75.0, 25.0), Point3::new(200.0, 140.0, 25.0));
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            birrt_plan(&space, s, g, &RrtParams::default(), &mut rng).unwrap()
        };
        assert_eq!(run(11), run(11));
    }

    #[test]
    fn birrt_not_longer_than_rrt_on_average() {
        let space = FreeSpace::new(cell(), &[]);
        let (s, g) = (Point3::new(0.0, 20.0, 10.0), Point3::new(200.0, 160.0, 40.0));
        let p = RrtParams::default();
        let (mut rrt_total, mut bi_total) = (0.0, 0.0);
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rrt_total += polyline_length(&rrt_plan(&space, s, g, &p, &mut rng).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            bi_total += polyline_length(&birrt_plan(&space, s, g, &p, &mut rng).unwrap());
        }
        assert!(bi_total <= rrt_total, "birrt {bi_total} rrt {rrt_total}");
    }

    #[test]
    fn straight_resample() {
        let space = FreeSpace::new(cell(), &[]);
        let (a, b) = (Point3::new(0.0, 0.0, 0.0), Point3::new(90.0, 0.0, 9.0));
        let out = smooth_and_resample(&[a, b], &space, 10, 5);
        assert_eq!(out.len(), 10);
        for (i, p) in out.iter().enumerate() {
            let expect = a.lerp(&b, i as f64 / 9.0);
            assert!(p.distance(&expect) < 1e-9);
        }
    }

    #[test]
    fn smoothing_contracts_on_rrt_output() {
        let obs = three_buildings();
        let space = FreeSpace::new(cell(), &obs);
        let (s, g) = (Point3::new(0.0, 75.0, 25.0), Point3::new(200.0, 140.0, 25.0));
        let p = RrtParams::default();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = rrt_plan(&space, s, g, &p, &mut rng).unwrap();
            let out = smooth_and_resample(&raw, &space, 10, 5);
            assert_eq!(out.len(), 10);
            assert_eq!(out[0], s);
            assert_eq!(out[9], g);
            assert!(space.polyline_free(&out));
            assert!(polyline_length(&out) <= polyline_length(&raw) + 1e-9);
        }
    }

    #[test]
    fn long_raw_path_resamples_to_count() {
        let space = FreeSpace::new(cell(), &[]);
        let raw: Vec<Point3> = (0..23)
            .map(|i| Point3::new(i as f64 * 8.0, if i % 2 == 0 { 10.0 } else { 14.0 }, 20.0))
            .collect();
        let out = smooth_and_resample(&raw, &space, 10, 5);
        assert_eq!(out.len(), 10);
        assert_eq!(out[0], raw[0]);
        assert_eq!(out[9], raw[22]);
    }

    #[test]
    fn keep_vertices_resample() {
        let pts = [Point3::ORIGIN, Point3::new(30.0, 0.0, 0.0), Point3::new(30.0, 10.0, 0.0)];
        let out = resample_keep_vertices(&pts, 5);
        assert_eq!(out.len(), 5);
        assert!(out.contains(&pts[1]));
        assert_eq!(out[4], pts[2]);
    }
}
