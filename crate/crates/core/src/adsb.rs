//! Simulated ADS-B broadcast plane.
//!
//! Every UAV reports its position once per tick; a ground station keeps the
//! latest report per UAV, turns them into per-cell occupancy counts and
//! relays sudden-obstacle alerts. Delivery is lossless unless a loss rate
//! is configured, in which case each (message, subscriber) pair is dropped
//! independently with that probability.

use crate::geometry::{CuboidObstacle, Point3};
use crate::grid::{AirspaceGrid, SubAirspaceId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sender {
    Uav(u32),
    GroundStation,
}

impl fmt::Display for Sender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sender::Uav(id) => write!(f, "uav-{id}"),
            Sender::GroundStation => f.write_str("ground"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    PositionReport { uav_id: u32, position: Point3 },
    /// UAV count per sub-airspace, index `id - 1`.
    OccupancyReport { counts: Vec<u32> },
    SuddenObstacleAlert { obstacle: CuboidObstacle, sub_airspace: SubAirspaceId },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::PositionReport { .. } => "position",
            Payload::OccupancyReport { .. } => "occupancy",
            Payload::SuddenObstacleAlert { .. } => "sudden_obstacle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdsbMessage {
    pub sender: Sender,
    pub tick: u64,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OccupancyTable {
    counts: Vec<u32>,
}

impl OccupancyTable {
    pub fn empty(cells: usize) -> Self {
        Self { counts: vec![0; cells] }
    }

    pub fn from_counts(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    pub fn get(&self, id: SubAirspaceId) -> u32 {
        self.counts.get(id.0 as usize - 1).copied().unwrap_or(0)
    }

    pub fn set(&mut self, id: SubAirspaceId, count: u32) {
        self.counts[id.0 as usize - 1] = count;
    }

    pub fn increment(&mut self, id: SubAirspaceId) {
        self.counts[id.0 as usize - 1] += 1;
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }
}

/// Counts UAVs per cell from the latest position reports.
pub fn aggregate_occupancy<'a>(
    reports: impl IntoIterator<Item = &'a Point3>,
    grid: &AirspaceGrid,
) -> OccupancyTable {
    let mut table = OccupancyTable::empty(grid.len());
    for p in reports {
        // reports outside the airspace are ignored
        if let Ok(id) = grid.locate(*p) {
            table.increment(id);
        }
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubscriberId(usize);

#[derive(Debug, Clone)]
pub struct AdsbBus {
    queues: Vec<VecDeque<AdsbMessage>>,
    loss_rate: f64,
    rng: ChaCha8Rng,
    log: Option<Vec<AdsbMessage>>,
}

impl AdsbBus {
    pub fn lossless() -> Self {
        Self::with_loss(0.0, 0)
    }

    pub fn with_loss(loss_rate: f64, seed: u64) -> Self {
        Self {
            queues: Vec::new(),
            loss_rate: loss_rate.clamp(0.0, 1.0),
            rng: ChaCha8Rng::seed_from_u64(seed),
            log: None,
        }
    }

    /// Keep a copy of every published message.
    pub fn record(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn subscribe(&mut self) -> SubscriberId {
        self.queues.push(VecDeque::new());
        SubscriberId(self.queues.len() - 1)
    }

    pub fn publish(&mut self, msg: AdsbMessage) {
        for q in &mut self.queues {
            if self.loss_rate > 0.0 && self.rng.gen::<f64>() < self.loss_rate {
                continue;
            }
            q.push_back(msg.clone());
        }
        if let Some(log) = &mut self.log {
            log.push(msg);
        }
    }

    /// Takes every message delivered to `sub` so far, oldest first.
    pub fn drain(&mut self, sub: SubscriberId) -> Vec<AdsbMessage> {
        self.queues[sub.0].drain(..).collect()
    }

    pub fn log(&self) -> &[AdsbMessage] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn take_log(&mut self) -> Vec<AdsbMessage> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }
}

/// Ground surveillance station: keeps the latest position per UAV and
/// relays sudden-obstacle sightings.
#[derive(Debug, Clone, Default)]
pub struct GroundStation {
    latest: BTreeMap<u32, (u64, Point3)>,
    max_report_age: u64,
}

impl GroundStation {
    /// Reports older than `max_report_age` ticks are dropped from the
    /// occupancy aggregate; with 0 only the current tick counts.
    pub fn new(max_report_age: u64) -> Self {
        Self { latest: BTreeMap::new(), max_report_age }
    }

    pub fn ingest(&mut self, msg: &AdsbMessage) {
        if let Payload::PositionReport { uav_id, position } = msg.payload {
            let entry = self.latest.entry(uav_id).or_insert((msg.tick, position));
            if msg.tick >= entry.0 {
                *entry = (msg.tick, position);
            }
        }
    }

    pub fn latest_positions(&self, now: u64) -> impl Iterator<Item = &Point3> {
        let age = self.max_report_age;
        self.latest
            .values()
            .filter(move |(t, _)| now.saturating_sub(*t) <= age)
            .map(|(_, p)| p)
    }

    pub fn occupancy(&self, grid: &AirspaceGrid, now: u64) -> OccupancyTable {
        aggregate_occupancy(self.latest_positions(now), grid)
    }

    pub fn occupancy_report(&self, grid: &AirspaceGrid, now: u64) -> AdsbMessage {
        AdsbMessage {
            sender: Sender::GroundStation,
            tick: now,
            payload: Payload::OccupancyReport { counts: self.occupancy(grid, now).counts },
        }
    }

    /// Alert tagged with the sub-airspace holding the obstacle's center.
    pub fn broadcast_sudden_obstacle(
        &self,
        ob: &CuboidObstacle,
        grid: &AirspaceGrid,
        tick: u64,
    ) -> AdsbMessage {
        let center = grid.bounds().clamp(ob.center());
        let sub_airspace = grid.locate(center).expect("clamped into the airspace");
        AdsbMessage {
            sender: Sender::GroundStation,
            tick,
            payload: Payload::SuddenObstacleAlert { obstacle: *ob, sub_airspace },
        }
    }
}
