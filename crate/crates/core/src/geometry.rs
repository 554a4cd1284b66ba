//! Points, axis-aligned boxes and the distance, angle and collision
//! predicates shared by every planner.
//!
//! Angles are reported in degrees.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Mul, Sub};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    /// A segment whose length (or horizontal projection) is zero where a
    /// direction is required.
    #[error("degenerate segment")]
    DegenerateSegment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// The two remaining axes, in x-y-z order.
    pub fn others(self) -> [Axis; 2] {
        match self {
            Axis::X => [Axis::Y, Axis::Z],
            Axis::Y => [Axis::X, Axis::Z],
            Axis::Z => [Axis::X, Axis::Y],
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// A position in airspace-local coordinates, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn get(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }

    pub fn set(&mut self, axis: Axis, value: f64) {
        match axis {
            Axis::X => self.x = value,
            Axis::Y => self.y = value,
            Axis::Z => self.z = value,
        }
    }

    pub fn with(mut self, axis: Axis, value: f64) -> Self {
        self.set(axis, value);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        segment_length(segment_delta(*self, *other))
    }

    /// Linear interpolation; `t = 0` gives `self`, `t = 1` gives `other`.
    pub fn lerp(&self, other: &Point3, t: f64) -> Point3 {
        Point3::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
            self.z + (other.z - self.z) * t,
        )
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        p.to_array()
    }
}

impl Add<SegmentDelta> for Point3 {
    type Output = Point3;

    fn add(self, d: SegmentDelta) -> Point3 {
        Point3::new(self.x + d.qx, self.y + d.qy, self.z + d.qz)
    }
}

impl Sub for Point3 {
    type Output = SegmentDelta;

    fn sub(self, rhs: Point3) -> SegmentDelta {
        segment_delta(rhs, self)
    }
}

impl fmt::Display for Point3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Componentwise difference between consecutive waypoints.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SegmentDelta {
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
}

impl SegmentDelta {
    pub const fn new(qx: f64, qy: f64, qz: f64) -> Self {
        Self { qx, qy, qz }
    }

    pub fn length(&self) -> f64 {
        segment_length(*self)
    }

    pub fn horizontal_length(&self) -> f64 {
        self.qx.hypot(self.qy)
    }
}

impl Mul<f64> for SegmentDelta {
    type Output = SegmentDelta;

    fn mul(self, s: f64) -> SegmentDelta {
        SegmentDelta::new(self.qx * s, self.qy * s, self.qz * s)
    }
}

pub fn segment_delta(a: Point3, b: Point3) -> SegmentDelta {
    SegmentDelta::new(b.x - a.x, b.y - a.y, b.z - a.z)
}

pub fn segment_length(d: SegmentDelta) -> f64 {
    (d.qx * d.qx + d.qy * d.qy + d.qz * d.qz).sqrt()
}

/// Angle between the horizontal projections of two consecutive segments,
/// in `[0, 180]` degrees.
pub fn turn_angle(prev: SegmentDelta, next: SegmentDelta) -> Result<f64, GeometryError> {
    let np = prev.horizontal_length();
    let nn = next.horizontal_length();
    if np == 0.0 || nn == 0.0 {
        return Err(GeometryError::DegenerateSegment);
    }
    let cos = (prev.qx * next.qx + prev.qy * next.qy) / (np * nn);
    Ok(cos.clamp(-1.0, 1.0).acos().to_degrees())
}

/// Climb angle of a segment relative to the horizontal plane, in
/// `[-90, 90]` degrees.
pub fn pitch_angle(d: SegmentDelta) -> Result<f64, GeometryError> {
    let len = d.length();
    if len == 0.0 {
        return Err(GeometryError::DegenerateSegment);
    }
    Ok((d.qz / len).clamp(-1.0, 1.0).asin().to_degrees())
}

/// Closed axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Self {
        Self { min, max }
    }

    pub fn extent(&self, axis: Axis) -> f64 {
        self.max.get(axis) - self.min.get(axis)
    }

    pub fn center(&self) -> Point3 {
        self.min.lerp(&self.max, 0.5)
    }

    pub fn contains(&self, p: &Point3) -> bool {
        self.contains_with_tolerance(p, 0.0)
    }

    pub fn contains_with_tolerance(&self, p: &Point3, tol: f64) -> bool {
        Axis::ALL.iter().all(|&a| {
            p.get(a) >= self.min.get(a) - tol && p.get(a) <= self.max.get(a) + tol
        })
    }

    pub fn inflate(&self, margin: f64) -> Aabb {
        let d = SegmentDelta::new(margin, margin, margin);
        Aabb::new(self.min + d * -1.0, self.max + d)
    }

    pub fn clamp(&self, p: Point3) -> Point3 {
        Point3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    /// True when the open interiors overlap on all three axes.
    pub fn overlaps_open(&self, other: &Aabb) -> bool {
        Axis::ALL.iter().all(|&a| {
            self.min.get(a) < other.max.get(a) && other.min.get(a) < self.max.get(a)
        })
    }

    /// True when the closed boxes share at least one point.
    pub fn overlaps_closed(&self, other: &Aabb) -> bool {
        Axis::ALL.iter().all(|&a| {
            self.min.get(a) <= other.max.get(a) && other.min.get(a) <= self.max.get(a)
        })
    }

    pub fn distance_to(&self, p: &Point3) -> f64 {
        p.distance(&self.clamp(*p))
    }

    /// Slab test: does the closed segment `a`-`b` touch this closed box?
    pub fn intersects_segment(&self, a: &Point3, b: &Point3) -> bool {
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for axis in Axis::ALL {
            let origin = a.get(axis);
            let dir = b.get(axis) - origin;
            let lo = self.min.get(axis);
            let hi = self.max.get(axis);
            if dir == 0.0 {
                if origin < lo || origin > hi {
                    return false;
                }
                continue;
            }
            let mut tn = (lo - origin) / dir;
            let mut tf = (hi - origin) / dir;
            if tn > tf {
                std::mem::swap(&mut tn, &mut tf);
            }
            t0 = t0.max(tn);
            t1 = t1.min(tf);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObstacleKind {
    /// Grounded building.
    Static,
    /// Hazard broadcast during flight; may float above the ground.
    Sudden,
}

/// Axis-aligned cuboid given by its corner nearest the airspace origin and
/// its three edge lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuboidObstacle {
    pub id: u32,
    pub kind: ObstacleKind,
    pub anchor: Point3,
    pub len_x: f64,
    pub len_y: f64,
    pub len_z: f64,
}

impl CuboidObstacle {
    pub fn new(id: u32, kind: ObstacleKind, anchor: Point3, lens: [f64; 3]) -> Self {
        Self { id, kind, anchor, len_x: lens[0], len_y: lens[1], len_z: lens[2] }
    }

    pub fn building(id: u32, anchor: Point3, lens: [f64; 3]) -> Self {
        Self::new(id, ObstacleKind::Static, anchor, lens)
    }

    pub fn sudden(id: u32, anchor: Point3, lens: [f64; 3]) -> Self {
        Self::new(id, ObstacleKind::Sudden, anchor, lens)
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::new(self.anchor, self.anchor + SegmentDelta::new(self.len_x, self.len_y, self.len_z))
    }

    pub fn center(&self) -> Point3 {
        self.aabb().center()
    }

    pub fn is_static(&self) -> bool {
        self.kind == ObstacleKind::Static
    }

    /// Checks the edge-length and grounding rules; returns the name of the
    /// offending field.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if !self.anchor.is_finite() {
            return Err(("anchor", "coordinates must be finite".into()));
        }
        for (name, v) in [("len_x", self.len_x), ("len_y", self.len_y), ("len_z", self.len_z)] {
            if !(v.is_finite() && v > 0.0) {
                return Err((name, format!("must be positive, got {v}")));
            }
        }
        match self.kind {
            ObstacleKind::Static if self.anchor.z != 0.0 => {
                Err(("anchor", format!("static obstacle must stand on the ground, z = {}", self.anchor.z)))
            }
            ObstacleKind::Sudden if self.anchor.z < 0.0 => {
                Err(("anchor", format!("z must be non-negative, got {}", self.anchor.z)))
            }
            _ => Ok(()),
        }
    }
}

/// Distance from `p` to the nearest point of the obstacle; zero inside or
/// on the surface.
pub fn point_to_cuboid_distance(p: Point3, ob: &CuboidObstacle) -> f64 {
    ob.aabb().distance_to(&p)
}

/// True iff the segment `a`-`b` comes within `margin` of the obstacle.
pub fn segment_intersects_cuboid(a: Point3, b: Point3, ob: &CuboidObstacle, margin: f64) -> bool {
    ob.aabb().inflate(margin).intersects_segment(&a, &b)
}

pub fn segment_collides(a: Point3, b: Point3, obstacles: &[CuboidObstacle]) -> bool {
    obstacles.iter().any(|ob| segment_intersects_cuboid(a, b, ob, 0.0))
}

pub fn point_collides(p: Point3, obstacles: &[CuboidObstacle], margin: f64) -> bool {
    obstacles.iter().any(|ob| point_to_cuboid_distance(p, ob) <= margin)
}

pub fn polyline_length(points: &[Point3]) -> f64 {
    points.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

pub fn polyline_collides(points: &[Point3], obstacles: &[CuboidObstacle]) -> bool {
    if points.len() == 1 {
        return point_collides(points[0], obstacles, 0.0);
    }
    points.windows(2).any(|w| segment_collides(w[0], w[1], obstacles))
}
