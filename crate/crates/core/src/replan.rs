//! Conflict detection against a newly broadcast sudden obstacle and local
//! repair of the committed waypoints.
//!
//! Conflicting ("red") waypoints are bracketed by the nearest clean
//! waypoints on either side. A Bi-RRT detour between the two bracket points
//! is smoothed and spliced in; everything outside the bracket is kept
//! untouched.

use crate::geometry::{point_collides, point_to_cuboid_distance, segment_intersects_cuboid, Aabb, CuboidObstacle, Point3};
use crate::sampling::{birrt_plan, smooth_with_spacing, FreeSpace, RrtParams, Waypath};
use rand::Rng;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RepairError {
    #[error("repair failed: {0}")]
    RepairFailed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Conflicts {
    /// Waypoints within the margin of the obstacle.
    pub waypoints: BTreeSet<usize>,
    /// Segments `j -> j + 1` that pass within the margin.
    pub segments: BTreeSet<usize>,
}

impl Conflicts {
    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty() && self.segments.is_empty()
    }

    /// Every flagged waypoint index, including both ends of bad segments.
    pub fn indices(&self) -> BTreeSet<usize> {
        let mut out = self.waypoints.clone();
        for &s in &self.segments {
            out.insert(s);
            out.insert(s + 1);
        }
        out
    }

    /// Last clean waypoint before and first clean waypoint after the
    /// conflict.
    pub fn bracket(&self) -> Option<(usize, usize)> {
        let before = self
            .waypoints
            .iter()
            .filter_map(|w| w.checked_sub(1))
            .chain(self.segments.iter().copied())
            .min();
        let after = self
            .waypoints
            .iter()
            .map(|w| w + 1)
            .chain(self.segments.iter().map(|s| s + 1))
            .max();
        match (before, after) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            // only the first waypoint conflicts
            (None, Some(hi)) if self.waypoints.contains(&0) => Some((0, hi)),
            _ => None,
        }
    }
}

pub fn detect_conflicts(path: &[Point3], ob: &CuboidObstacle, margin: f64) -> Conflicts {
    let mut c = Conflicts::default();
    for (j, p) in path.iter().enumerate() {
        if point_to_cuboid_distance(*p, ob) <= margin {
            c.waypoints.insert(j);
        }
    }
    for (j, w) in path.windows(2).enumerate() {
        if segment_intersects_cuboid(w[0], w[1], ob, margin) {
            c.segments.insert(j);
        }
    }
    c
}

/// Conflicts on the part of the path not yet flown. `next` is the index of
/// the waypoint the UAV is heading to; the segment it is on counts.
pub fn conflicts_ahead(path: &[Point3], next: usize, ob: &CuboidObstacle, margin: f64) -> Conflicts {
    let mut c = detect_conflicts(path, ob, margin);
    c.waypoints.retain(|&w| w >= next);
    c.segments.retain(|&s| s + 1 >= next);
    c
}

pub fn should_replan(path: &[Point3], next: usize, ob: &CuboidObstacle, margin: f64) -> bool {
    !conflicts_ahead(path, next, ob, margin).is_empty()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepairParams {
    pub rrt: RrtParams,
    pub smooth_points: usize,
    /// Conflict detection margin around the sudden obstacle, meters.
    pub margin: f64,
    pub attempts: usize,
}

impl Default for RepairParams {
    fn default() -> Self {
        Self { rrt: RrtParams::default(), smooth_points: 5, margin: 0.0, attempts: 3 }
    }
}

/// Replaces the conflicting stretch of `path` with a Bi-RRT detour.
///
/// `obstacles` are the obstacles already known in the sub-airspace;
/// `ob` is the new sudden obstacle. Waypoints outside the bracket are
/// copied unchanged, so the result may have a different point count.
pub fn repair<R: Rng + ?Sized>(
    path: &Waypath,
    ob: &CuboidObstacle,
    obstacles: &[CuboidObstacle],
    bounds: Aabb,
    params: &RepairParams,
    rng: &mut R,
) -> Result<Waypath, RepairError> {
    let conflicts = detect_conflicts(&path.waypoints, ob, params.margin);
    let Some((mut lo, mut hi)) = conflicts.bracket() else {
        if conflicts.is_empty() {
            return Ok(path.clone());
        }
        return Err(RepairError::RepairFailed("conflict at the path start".into()));
    };
    let pts = &path.waypoints;
    let last = pts.len() - 1;
    let near_ob = |p: Point3| point_to_cuboid_distance(p, ob) <= params.margin;
    while near_ob(pts[lo]) || point_collides(pts[lo], obstacles, 0.0) {
        if lo == 0 {
            return Err(RepairError::RepairFailed("start point is blocked".into()));
        }
        lo -= 1;
    }
    while hi <= last && (near_ob(pts[hi]) || point_collides(pts[hi], obstacles, 0.0)) {
        hi += 1;
    }
    if hi > last {
        return Err(RepairError::RepairFailed("end point is blocked".into()));
    }

    let mut all = obstacles.to_vec();
    all.push(*ob);
    let space = FreeSpace::new(bounds, &all);
    let spacing = path.length() / (pts.len().max(2) - 1) as f64;
    let mut last_err = String::from("no attempts");
    for _ in 0..params.attempts.max(1) {
        let raw = match birrt_plan(&space, pts[lo], pts[hi], &params.rrt, rng) {
            Ok(raw) => raw,
            Err(e) => {
                last_err = e.to_string();
                continue;
            }
        };
        let detour = if raw.len() >= 2 {
            smooth_with_spacing(&raw, &space, spacing, params.smooth_points)
        } else {
            raw
        };
        let mut out = Vec::with_capacity(lo + detour.len() + pts.len() - hi);
        out.extend_from_slice(&pts[..=lo]);
        out.extend_from_slice(&detour[1..detour.len().saturating_sub(1)]);
        out.extend_from_slice(&pts[hi..]);
        let clear = out.windows(2).all(|w| {
            space.segment_free(w[0], w[1]) && !segment_intersects_cuboid(w[0], w[1], ob, params.margin)
        });
        if clear {
            return Ok(Waypath::new(path.sub_airspace, out));
        }
        last_err = "spliced path still conflicts".into();
    }
    Err(RepairError::RepairFailed(last_err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SubAirspaceId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bounds() -> Aabb {
        Aabb::new(Point3::ORIGIN, Point3::new(200.0, 200.0, 50.0))
    }

    fn straight() -> Waypath {
        Waypath::straight(SubAirspaceId(1), Point3::new(0.0, 100.0, 25.0), Point3::new(180.0, 100.0, 25.0), 10)
    }

    /// Cube of side `s` centered on `p`.
    fn cube_at(p: Point3, s: f64) -> CuboidObstacle {
        CuboidObstacle::sudden(7, Point3::new(p.x - s / 2.0, p.y - s / 2.0, p.z - s / 2.0), [s, s, s])
    }

    fn dense_clear(pts: &[Point3], obs: &[CuboidObstacle]) -> bool {
        pts.windows(2).all(|w| {
            let n = (w[0].distance(&w[1]) / 0.1).ceil().max(1.0) as usize;
            (0..=n).all(|i| {
                let q = w[0].lerp(&w[1], i as f64 / n as f64);
                obs.iter().all(|o| point_to_cuboid_distance(q, o) > 0.0)
            })
        })
    }

    #[test]
    fn far_obstacle_has_no_conflict() {
        let ob = cube_at(Point3::new(100.0, 10.0, 10.0), 5.0);
        let c = detect_conflicts(&straight().waypoints, &ob, 0.0);
        assert!(c.is_empty());
        assert_eq!(c.bracket(), None);
    }

    #[test]
    fn waypoint_inside_brackets_neighbours() {
        let path = straight();
        let ob = cube_at(path.waypoints[5], 8.0);
        let c = detect_conflicts(&path.waypoints, &ob, 0.0);
        assert_eq!(c.waypoints.iter().copied().collect::<Vec<_>>(), vec![5]);
        assert_eq!(c.bracket(), Some((4, 6)));
    }

    #[test]
    fn segment_crossing_brackets_its_ends() {
        let path = straight();
        let mid = path.waypoints[3].lerp(&path.waypoints[4], 0.5);
        let ob = cube_at(mid, 6.0);
        let c = detect_conflicts(&path.waypoints, &ob, 0.0);
        assert!(c.waypoints.is_empty());
        assert_eq!(c.segments.iter().copied().collect::<Vec<_>>(), vec![3]);
        assert_eq!(c.bracket(), Some((3, 4)));
    }

    #[test]
    fn repair_splices_and_clears() {
        let path = straight();
        let ob = cube_at(path.waypoints[5], 8.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = repair(&path, &ob, &[], bounds(), &RepairParams::default(), &mut rng).unwrap();
        assert_eq!(out.waypoints[..=4], path.waypoints[..=4]);
        let tail = &out.waypoints[out.len() - 4..];
        assert_eq!(tail, &path.waypoints[6..]);
        assert!(dense_clear(&out.waypoints, &[ob]));
        assert!(detect_conflicts(&out.waypoints, &ob, 0.0).is_empty());
    }

    #[test]
    fn repair_with_static_obstacles() {
        let path = straight();
        let wall = CuboidObstacle::building(1, Point3::new(95.0, 110.0, 0.0), [10.0, 40.0, 100.0]);
        let ob = cube_at(path.waypoints[5], 8.0);
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = repair(&path, &ob, &[wall], bounds(), &RepairParams::default(), &mut rng).unwrap();
            assert!(dense_clear(&out.waypoints, &[ob, wall]));
        }
    }

    #[test]
    fn sealed_corridor_fails() {
        let path = straight();
        // slab across the full cross-section between waypoints 4 and 6
        let ob = CuboidObstacle::sudden(9, Point3::new(95.0, 0.0, 0.0), [10.0, 200.0, 50.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = RepairParams { rrt: RrtParams { max_iterations: 300, ..Default::default() }, ..Default::default() };
        assert!(matches!(
            repair(&path, &ob, &[], bounds(), &params, &mut rng),
            Err(RepairError::RepairFailed(_))
        ));
    }

    #[test]
    fn replan_only_for_conflicts_ahead() {
        let path = straight();
        let ob = cube_at(path.waypoints[2], 6.0);
        assert!(should_replan(&path.waypoints, 1, &ob, 0.0));
        assert!(!should_replan(&path.waypoints, 5, &ob, 0.0));
        let far = cube_at(Point3::new(10.0, 10.0, 10.0), 2.0);
        assert!(!should_replan(&path.waypoints, 0, &far, 0.0));
    }
}
