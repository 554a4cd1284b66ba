//! Result tables written as CSV or JSON lines.
//!
//! | file | columns |
//! |------|---------|
//! | `waypoints` | `uav_id, seq, x, y, z, cell_id` |
//! | `occupancy` | `cell_id, max_uavs` |
//! | `convergence` | `run_id, iteration, cost` |
//! | `lengths` | `run_id, mode, uav_id, length` |
//! | `adsb` | `tick, sender, kind, payload` (payload is JSON) |
//! | `events` | `tick, uav_id, kind, detail` (detail is JSON) |
//! | `compare` | `seed` then `<mode>_max_occupancy, <mode>_total_length, <mode>_arrived` per mode |
//!
//! Non-finite numbers are written as an empty CSV field or JSON `null`.

use crate::adsb::{AdsbMessage, Payload};
use crate::sim::{Event, EventKind, Mode, SimMetrics, SimResult, UavTrajectory};
use serde_json::Value;
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    JsonLines,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::JsonLines => "jsonl",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "json-lines" | "jsonlines" => Ok(Format::JsonLines),
            _ => Err(format!("unknown format '{s}', expected csv or jsonl")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Int(i64),
    Float(f64),
    Text(String),
    /// Pre-encoded JSON; written verbatim as a CSV string.
    Json(Value),
}

impl Field {
    fn csv(&self) -> String {
        match self {
            Field::Int(v) => v.to_string(),
            Field::Float(v) if v.is_finite() => v.to_string(),
            Field::Float(_) => String::new(),
            Field::Text(s) => s.clone(),
            Field::Json(v) => v.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Field::Int(v) => Value::from(*v),
            Field::Float(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Field::Text(s) => Value::from(s.as_str()),
            Field::Json(v) => v.clone(),
        }
    }
}

impl From<u32> for Field {
    fn from(v: u32) -> Self {
        Field::Int(v as i64)
    }
}

impl From<u64> for Field {
    fn from(v: u64) -> Self {
        Field::Int(v as i64)
    }
}

impl From<usize> for Field {
    fn from(v: usize) -> Self {
        Field::Int(v as i64)
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Float(v)
    }
}

impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Text(v.to_string())
    }
}

impl From<String> for Field {
    fn from(v: String) -> Self {
        Field::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Field>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, out: W, format: Format) -> io::Result<()> {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(&self.columns)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Field::csv))?;
                }
                w.flush()
            }
            Format::JsonLines => {
                let mut out = BufWriter::new(out);
                for row in &self.rows {
                    // hand-built so columns keep their order
                    out.write_all(b"{")?;
                    for (k, (col, v)) in self.columns.iter().zip(row).enumerate() {
                        if k > 0 {
                            out.write_all(b",")?;
                        }
                        write!(out, "{}:{}", Value::from(col.as_str()), v.json())?;
                    }
                    out.write_all(b"}\n")?;
                }
                out.flush()
            }
        }
    }

    pub fn to_string(&self, format: Format) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf, format).expect("writing to memory");
        String::from_utf8(buf).expect("tables are UTF-8")
    }

    /// Writes `<dir>/<name>.<ext>` and returns the path.
    pub fn write_to_dir(&self, dir: &Path, format: Format) -> io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.{}", self.name, format.extension()));
        self.write(File::create(&path)?, format)?;
        Ok(path)
    }
}

pub fn waypoint_table(trajectories: &[UavTrajectory]) -> Table {
    let mut t = Table::new("waypoints", &["uav_id", "seq", "x", "y", "z", "cell_id"]);
    for traj in trajectories {
        for (seq, (p, cell)) in traj.points().into_iter().enumerate() {
            t.push(vec![traj.uav_id.into(), seq.into(), p.x.into(), p.y.into(), p.z.into(), cell.0.into()]);
        }
    }
    t
}

pub fn occupancy_table(metrics: &SimMetrics) -> Table {
    let mut t = Table::new("occupancy", &["cell_id", "max_uavs"]);
    for (i, n) in metrics.max_occupancy.iter().enumerate() {
        t.push(vec![(i + 1).into(), (*n).into()]);
    }
    t
}

pub fn convergence_table<'a>(runs: impl IntoIterator<Item = (String, &'a [f64])>) -> Table {
    let mut t = Table::new("convergence", &["run_id", "iteration", "cost"]);
    for (run_id, history) in runs {
        for (k, c) in history.iter().enumerate() {
            t.push(vec![run_id.clone().into(), k.into(), (*c).into()]);
        }
    }
    t
}

/// PSO histories of one simulation, one run per planned cell.
pub fn sim_convergence_table(metrics: &SimMetrics) -> Table {
    convergence_table(
        metrics
            .cells
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.history.is_empty())
            .map(|(k, r)| (format!("uav{}-{}-{}", r.uav, r.cell, k), r.history.as_slice())),
    )
}

pub fn length_table(t: &mut Table, run_id: &str, mode: Mode, lengths: &[f64]) {
    for (i, l) in lengths.iter().enumerate() {
        t.push(vec![run_id.into(), mode.name().into(), (i + 1).into(), (*l).into()]);
    }
}

pub fn new_length_table() -> Table {
    Table::new("lengths", &["run_id", "mode", "uav_id", "length"])
}

pub fn adsb_table(log: &[AdsbMessage]) -> Table {
    let mut t = Table::new("adsb", &["tick", "sender", "kind", "payload"]);
    for m in log {
        let payload = match &m.payload {
            Payload::PositionReport { uav_id, position } => {
                serde_json::json!({ "uav_id": uav_id, "position": position })
            }
            Payload::OccupancyReport { counts } => serde_json::json!({ "counts": counts }),
            Payload::SuddenObstacleAlert { obstacle, sub_airspace } => {
                serde_json::json!({ "obstacle": obstacle, "sub_airspace": sub_airspace.0 })
            }
        };
        t.push(vec![m.tick.into(), m.sender.to_string().into(), m.payload.kind().into(), Field::Json(payload)]);
    }
    t
}

fn event_name(kind: &EventKind) -> &'static str {
    match kind {
        EventKind::Takeoff { .. } => "takeoff",
        EventKind::CellEntry { .. } => "cell_entry",
        EventKind::CoarseReplan { .. } => "coarse_replan",
        EventKind::Reroute { .. } => "reroute",
        EventKind::WaypathPlanned { .. } => "waypath_planned",
        EventKind::SuddenObstacle { .. } => "sudden_obstacle",
        EventKind::Repair { .. } => "repair",
        EventKind::RepairFailed { .. } => "repair_failed",
        EventKind::Arrived => "arrived",
        EventKind::Failed { .. } => "failed",
    }
}

pub fn event_table(events: &[Event]) -> Table {
    let mut t = Table::new("events", &["tick", "uav_id", "kind", "detail"]);
    for e in events {
        let mut detail = serde_json::to_value(&e.kind).expect("events serialize");
        if let Value::Object(map) = &mut detail {
            map.remove("kind");
        }
        let uav = e.uav.map_or(Field::Text(String::new()), Field::from);
        t.push(vec![e.tick.into(), uav, event_name(&e.kind).into(), Field::Json(detail)]);
    }
    t
}

/// One row per seed with each mode's headline numbers side by side.
pub fn compare_table(modes: &[Mode], rows: &[(u64, Vec<SimResult>)]) -> Table {
    let mut cols = vec!["seed".to_string()];
    for m in modes {
        for suffix in ["max_occupancy", "total_length", "arrived"] {
            cols.push(format!("{}_{suffix}", m.name()));
        }
    }
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new("compare", &col_refs);
    for (seed, results) in rows {
        let mut row = vec![Field::from(*seed)];
        for r in results {
            row.push(r.metrics.airspace_max_occupancy().into());
            row.push(r.metrics.total_length().into());
            row.push(r.arrived().into());
        }
        t.push(row);
    }
    t
}

/// Writes every table of a simulation run into `dir`.
pub fn emit_results(result: &SimResult, run_id: &str, dir: &Path, format: Format) -> io::Result<Vec<PathBuf>> {
    let mut lengths = new_length_table();
    length_table(&mut lengths, run_id, result.mode, &result.metrics.lengths);
    [
        waypoint_table(&result.trajectories),
        occupancy_table(&result.metrics),
        sim_convergence_table(&result.metrics),
        lengths,
        adsb_table(&result.adsb_log),
        event_table(&result.metrics.events),
    ]
    .iter()
    .map(|t| t.write_to_dir(dir, format))
    .collect()
}
