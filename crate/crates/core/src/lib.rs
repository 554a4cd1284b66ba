//! Trajectory planning for UAVs in a grid-divided low-altitude airspace.
//!
//! The airspace is cut into equal sub-airspaces. A coarse router picks the
//! sequence of cells from current UAV occupancy (fed by a simulated ADS-B
//! bus) and refreshes it as the UAV moves; inside each cell an RRT-seeded
//! particle swarm places the waypoints. Sudden obstacles are handled by
//! splicing a Bi-RRT detour into the committed path.

pub mod adsb;
pub mod cli;
pub mod coarse;
pub mod geometry;
pub mod grid;
pub mod output;
pub mod pso;
pub mod replan;
pub mod sampling;
pub mod scenario;
pub mod sim;

pub use geometry::{Aabb, Axis, CuboidObstacle, ObstacleKind, Point3, SegmentDelta};
pub use grid::{AirspaceGrid, FaceRect, SubAirspaceId};
pub use sim::{Mode, SimResult, World};
