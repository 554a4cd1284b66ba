//! Equal-size division of the airspace into sub-airspaces.
//!
//! Cells are numbered from 1, x first, then y, then layer by layer in z:
//! `id = 1 + ix + iy * nx + iz * nx * ny`.

use crate::geometry::{Aabb, Axis, CuboidObstacle, Point3};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("point {0} lies outside the airspace")]
    OutOfAirspace(Point3),
    #[error("{0} and {1} are not face-adjacent")]
    NotAdjacent(SubAirspaceId, SubAirspaceId),
    #[error("no sub-airspace {0}")]
    InvalidCell(SubAirspaceId),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// 1-based sub-airspace number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubAirspaceId(pub u32);

impl fmt::Display for SubAirspaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SA_{}", self.0)
    }
}

/// Axis-aligned rectangle lying in the plane `axis = coord`. `u` and `v`
/// are the bounds along `axis.others()`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceRect {
    pub axis: Axis,
    pub coord: f64,
    pub u: (f64, f64),
    pub v: (f64, f64),
}

impl FaceRect {
    pub fn in_plane_axes(&self) -> [Axis; 2] {
        self.axis.others()
    }

    pub fn area(&self) -> f64 {
        (self.u.1 - self.u.0) * (self.v.1 - self.v.0)
    }

    pub fn point(&self, u: f64, v: f64) -> Point3 {
        let [ua, va] = self.in_plane_axes();
        Point3::ORIGIN.with(self.axis, self.coord).with(ua, u).with(va, v)
    }

    pub fn contains(&self, p: &Point3, tol: f64) -> bool {
        let [ua, va] = self.in_plane_axes();
        let (pu, pv) = (p.get(ua), p.get(va));
        (p.get(self.axis) - self.coord).abs() <= tol
            && pu >= self.u.0 - tol
            && pu <= self.u.1 + tol
            && pv >= self.v.0 - tol
            && pv <= self.v.1 + tol
    }

    pub fn contains_rect(&self, other: &FaceRect, tol: f64) -> bool {
        self.axis == other.axis
            && (self.coord - other.coord).abs() <= tol
            && other.u.0 >= self.u.0 - tol
            && other.u.1 <= self.u.1 + tol
            && other.v.0 >= self.v.0 - tol
            && other.v.1 <= self.v.1 + tol
    }
}

#[derive(Debug, Clone)]
pub struct AirspaceGrid {
    extent: [f64; 3],
    counts: [u32; 3],
    obstacles: Vec<CuboidObstacle>,
    // indices into `obstacles` touching each cell (closed overlap)
    near: Vec<Vec<usize>>,
    static_counts: Vec<u32>,
}

impl AirspaceGrid {
    pub fn new(
        extent: [f64; 3],
        counts: [u32; 3],
        obstacles: Vec<CuboidObstacle>,
    ) -> Result<Self, GridError> {
        for i in 0..3 {
            if !(extent[i].is_finite() && extent[i] > 0.0) {
                return Err(GridError::InvalidGrid(format!("extent[{i}] must be positive")));
            }
            if counts[i] == 0 {
                return Err(GridError::InvalidGrid(format!("counts[{i}] must be positive")));
            }
        }
        let mut grid = Self {
            extent,
            counts,
            obstacles,
            near: Vec::new(),
            static_counts: Vec::new(),
        };
        let n = grid.len();
        grid.near = vec![Vec::new(); n];
        grid.static_counts = vec![0; n];
        for (k, ob) in grid.obstacles.iter().enumerate() {
            let bx = ob.aabb();
            for idx in 0..n {
                let cell = grid.cell_box(SubAirspaceId(idx as u32 + 1));
                if cell.overlaps_closed(&bx) {
                    grid.near[idx].push(k);
                }
                if ob.is_static() && cell.overlaps_open(&bx) {
                    grid.static_counts[idx] += 1;
                }
            }
        }
        Ok(grid)
    }

    pub fn extent(&self) -> [f64; 3] {
        self.extent
    }

    pub fn counts(&self) -> [u32; 3] {
        self.counts
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::new(Point3::ORIGIN, Point3::from(self.extent))
    }

    pub fn obstacles(&self) -> &[CuboidObstacle] {
        &self.obstacles
    }

    /// Total number of sub-airspaces.
    pub fn len(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_size(&self) -> [f64; 3] {
        [
            self.extent[0] / self.counts[0] as f64,
            self.extent[1] / self.counts[1] as f64,
            self.extent[2] / self.counts[2] as f64,
        ]
    }

    pub fn ids(&self) -> impl Iterator<Item = SubAirspaceId> {
        (1..=self.len() as u32).map(SubAirspaceId)
    }

    pub fn is_valid(&self, id: SubAirspaceId) -> bool {
        id.0 >= 1 && id.0 as usize <= self.len()
    }

    fn check(&self, id: SubAirspaceId) -> Result<(), GridError> {
        if self.is_valid(id) {
            Ok(())
        } else {
            Err(GridError::InvalidCell(id))
        }
    }

    pub fn id_of(&self, ix: u32, iy: u32, iz: u32) -> SubAirspaceId {
        let [nx, ny, _] = self.counts;
        SubAirspaceId(1 + ix + iy * nx + iz * nx * ny)
    }

    /// Zero-based cell coordinates.
    pub fn coords(&self, id: SubAirspaceId) -> [u32; 3] {
        let [nx, ny, _] = self.counts;
        let k = id.0 - 1;
        [k % nx, (k / nx) % ny, k / (nx * ny)]
    }

    pub fn cell_box(&self, id: SubAirspaceId) -> Aabb {
        let c = self.coords(id);
        let s = self.cell_size();
        let min = Point3::new(c[0] as f64 * s[0], c[1] as f64 * s[1], c[2] as f64 * s[2]);
        let max = Point3::new(
            (c[0] + 1) as f64 * s[0],
            (c[1] + 1) as f64 * s[1],
            (c[2] + 1) as f64 * s[2],
        );
        Aabb::new(min, max)
    }

    pub fn locate(&self, p: Point3) -> Result<SubAirspaceId, GridError> {
        if !p.is_finite() || !self.bounds().contains(&p) {
            return Err(GridError::OutOfAirspace(p));
        }
        let s = self.cell_size();
        let mut c = [0u32; 3];
        for axis in Axis::ALL {
            let i = axis.index();
            let k = (p.get(axis) / s[i]).floor() as i64;
            c[i] = k.clamp(0, self.counts[i] as i64 - 1) as u32;
        }
        Ok(self.id_of(c[0], c[1], c[2]))
    }

    /// Face-adjacent cells, ascending by id.
    pub fn neighbors(&self, id: SubAirspaceId) -> Vec<SubAirspaceId> {
        if !self.is_valid(id) {
            return Vec::new();
        }
        let c = self.coords(id);
        let mut out = Vec::with_capacity(6);
        for i in 0..3 {
            for delta in [-1i64, 1] {
                let k = c[i] as i64 + delta;
                if k >= 0 && k < self.counts[i] as i64 {
                    let mut n = c;
                    n[i] = k as u32;
                    out.push(self.id_of(n[0], n[1], n[2]));
                }
            }
        }
        out.sort();
        out
    }

    /// Axis and sign of the step from `a` to a face-adjacent `b`.
    pub fn direction(&self, a: SubAirspaceId, b: SubAirspaceId) -> Option<(Axis, i8)> {
        if !self.is_valid(a) || !self.is_valid(b) {
            return None;
        }
        let (ca, cb) = (self.coords(a), self.coords(b));
        let mut found = None;
        for axis in Axis::ALL {
            let d = cb[axis.index()] as i64 - ca[axis.index()] as i64;
            match d {
                0 => {}
                1 | -1 if found.is_none() => found = Some((axis, d as i8)),
                _ => return None,
            }
        }
        found
    }

    pub fn are_adjacent(&self, a: SubAirspaceId, b: SubAirspaceId) -> bool {
        self.direction(a, b).is_some()
    }

    pub fn shared_face(&self, a: SubAirspaceId, b: SubAirspaceId) -> Result<FaceRect, GridError> {
        self.check(a)?;
        self.check(b)?;
        let (axis, sign) = self.direction(a, b).ok_or(GridError::NotAdjacent(a, b))?;
        let bx = self.cell_box(a);
        let coord = if sign > 0 { bx.max.get(axis) } else { bx.min.get(axis) };
        let [u, v] = axis.others();
        Ok(FaceRect {
            axis,
            coord,
            u: (bx.min.get(u), bx.max.get(u)),
            v: (bx.min.get(v), bx.max.get(v)),
        })
    }

    /// Static obstacles whose volume overlaps the cell interior.
    pub fn static_obstacle_count(&self, id: SubAirspaceId) -> u32 {
        if self.is_valid(id) {
            self.static_counts[id.0 as usize - 1]
        } else {
            0
        }
    }

    /// Static obstacles touching the closed cell box.
    pub fn obstacles_near(&self, id: SubAirspaceId) -> Vec<CuboidObstacle> {
        if !self.is_valid(id) {
            return Vec::new();
        }
        self.near[id.0 as usize - 1].iter().map(|&k| self.obstacles[k]).collect()
    }

    /// Whether `p` is strictly clear of every static obstacle by more than
    /// `clearance`.
    pub fn is_clear(&self, p: Point3, clearance: f64) -> bool {
        !crate::geometry::point_collides(p, &self.obstacles, clearance)
    }

    /// Manhattan distance in cells.
    pub fn cell_distance(&self, a: SubAirspaceId, b: SubAirspaceId) -> u32 {
        let (ca, cb) = (self.coords(a), self.coords(b));
        (0..3).map(|i| ca[i].abs_diff(cb[i])).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn five_cube_grid() -> AirspaceGrid {
        AirspaceGrid::new([1000.0, 1000.0, 250.0], [5, 5, 5], Vec::new()).unwrap()
    }

    #[test]
    fn locate_examples() {
        let g = five_cube_grid();
        assert_eq!(g.locate(Point3::ORIGIN).unwrap(), SubAirspaceId(1));
        assert_eq!(g.locate(Point3::new(750.0, 900.0, 80.0)).unwrap(), SubAirspaceId(49));
        assert_eq!(g.locate(Point3::new(199.9, 0.0, 0.0)).unwrap(), SubAirspaceId(1));
        assert_eq!(g.locate(Point3::new(200.0, 0.0, 0.0)).unwrap(), SubAirspaceId(2));
        assert_eq!(g.locate(Point3::new(1000.0, 1000.0, 250.0)).unwrap(), SubAirspaceId(125));
        assert!(matches!(
            g.locate(Point3::new(-0.1, 0.0, 0.0)),
            Err(GridError::OutOfAirspace(_))
        ));
    }

    #[test]
    fn example_coarse_route_is_face_connected() {
        let g = five_cube_grid();
        let cs = [1, 2, 27, 32, 33, 34, 39, 44, 49].map(SubAirspaceId);
        for w in cs.windows(2) {
            assert!(g.are_adjacent(w[0], w[1]), "{} {}", w[0], w[1]);
        }
    }

    #[test]
    fn neighbor_examples() {
        let g = five_cube_grid();
        assert_eq!(g.neighbors(SubAirspaceId(1)), [2, 6, 26].map(SubAirspaceId).to_vec());
        assert_eq!(g.coords(SubAirspaceId(63)), [2, 2, 2]);
        assert_eq!(g.neighbors(SubAirspaceId(63)).len(), 6);
        let one = AirspaceGrid::new([10.0, 10.0, 10.0], [1, 1, 1], Vec::new()).unwrap();
        assert!(one.neighbors(SubAirspaceId(1)).is_empty());
    }

    #[test]
    fn shared_faces() {
        let g = five_cube_grid();
        let f = g.shared_face(SubAirspaceId(1), SubAirspaceId(2)).unwrap();
        assert_eq!((f.axis, f.coord, f.u, f.v), (Axis::X, 200.0, (0.0, 200.0), (0.0, 50.0)));
        let f = g.shared_face(SubAirspaceId(1), SubAirspaceId(26)).unwrap();
        assert_eq!((f.axis, f.coord, f.u, f.v), (Axis::Z, 50.0, (0.0, 200.0), (0.0, 200.0)));
        let f = g.shared_face(SubAirspaceId(2), SubAirspaceId(1)).unwrap();
        assert_eq!((f.axis, f.coord), (Axis::X, 200.0));
        assert!(matches!(
            g.shared_face(SubAirspaceId(1), SubAirspaceId(3)),
            Err(GridError::NotAdjacent(..))
        ));
    }

    #[test]
    fn static_counts() {
        let g = five_cube_grid();
        assert!(g.ids().all(|id| g.static_obstacle_count(id) == 0));

        let inside = CuboidObstacle::building(0, Point3::new(20.0, 20.0, 0.0), [10.0, 10.0, 10.0]);
        let g = AirspaceGrid::new([1000.0, 1000.0, 250.0], [5, 5, 5], vec![inside]).unwrap();
        for id in g.ids() {
            assert_eq!(g.static_obstacle_count(id), u32::from(id == SubAirspaceId(1)));
        }

        let spanning = CuboidObstacle::building(0, Point3::new(190.0, 20.0, 0.0), [20.0, 10.0, 10.0]);
        let g = AirspaceGrid::new([1000.0, 1000.0, 250.0], [5, 5, 5], vec![spanning]).unwrap();
        assert_eq!(g.static_obstacle_count(SubAirspaceId(1)), 1);
        assert_eq!(g.static_obstacle_count(SubAirspaceId(2)), 1);
        assert_eq!(g.ids().map(|id| g.static_obstacle_count(id)).sum::<u32>(), 2);

        // touching a face without entering does not count
        let touching = CuboidObstacle::building(0, Point3::new(200.0, 20.0, 0.0), [20.0, 10.0, 10.0]);
        let g = AirspaceGrid::new([1000.0, 1000.0, 250.0], [5, 5, 5], vec![touching]).unwrap();
        assert_eq!(g.static_obstacle_count(SubAirspaceId(1)), 0);
        assert_eq!(g.obstacles_near(SubAirspaceId(1)).len(), 1);
    }

    proptest! {
        #[test]
        fn locate_consistent_with_index(
            x in 0.0..=1000.0f64, y in 0.0..=1000.0f64, z in 0.0..=250.0f64,
        ) {
            let g = five_cube_grid();
            let p = Point3::new(x, y, z);
            let id = g.locate(p).unwrap();
            prop_assert!(g.cell_box(id).contains(&p));
            let c = g.coords(id);
            prop_assert_eq!(g.id_of(c[0], c[1], c[2]), id);
        }

        #[test]
        fn neighbors_symmetric(nx in 1u32..5, ny in 1u32..5, nz in 1u32..5, pick in 0u32..1000) {
            let g = AirspaceGrid::new([10.0, 10.0, 10.0], [nx, ny, nz], Vec::new()).unwrap();
            let a = SubAirspaceId(1 + pick % g.len() as u32);
            for b in g.neighbors(a) {
                prop_assert!(g.neighbors(b).contains(&a));
                prop_assert!(g.shared_face(a, b).is_ok());
            }
        }

        #[test]
        fn counts_cover_every_obstacle(
            obs in proptest::collection::vec(
                (0.0..950.0f64, 0.0..950.0f64, 1.0..50.0f64, 1.0..50.0f64, 1.0..240.0f64), 0..20)
        ) {
            let obs: Vec<_> = obs.into_iter().enumerate()
                .map(|(i, (x, y, lx, ly, h))| CuboidObstacle::building(i as u32, Point3::new(x, y, 0.0), [lx, ly, h]))
                .collect();
            let n = obs.len() as u32;
            let g = AirspaceGrid::new([1000.0, 1000.0, 250.0], [5, 5, 5], obs).unwrap();
            prop_assert!(g.ids().map(|id| g.static_obstacle_count(id)).sum::<u32>() >= n);
        }
    }
}
