//! C ABI over the airgrid planner and simulator.
//!
//! Scenarios and simulation results are opaque heap handles created and
//! released through this API. Every fallible call returns an
//! [`AirgridStatus`]; on failure a message is available from
//! [`airgrid_last_error`] until the next failing call on the same thread.

use airgrid::output::{emit_results, Format};
use airgrid::pso::plan_sub_airspace;
use airgrid::scenario::{parse_scenario, Scenario, ScenarioError};
use airgrid::sim::{run_world, Mode, Phase, SimResult};
use airgrid::SubAirspaceId;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AirgridStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    ValidationError = 4,
    PlanningFailed = 5,
    IoError = 6,
    IndexOutOfRange = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AirgridMode {
    Ssp = 0,
    NoSlidingWindow = 1,
    NoAttraction = 2,
    RrtOnly = 3,
    BirrtOnly = 4,
}

impl From<AirgridMode> for Mode {
    fn from(m: AirgridMode) -> Self {
        match m {
            AirgridMode::Ssp => Mode::Ssp,
            AirgridMode::NoSlidingWindow => Mode::NoSlidingWindow,
            AirgridMode::NoAttraction => Mode::NoAttraction,
            AirgridMode::RrtOnly => Mode::RrtOnly,
            AirgridMode::BirrtOnly => Mode::BirrtOnly,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AirgridFormat {
    Csv = 0,
    JsonLines = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AirgridPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Opaque scenario handle.
pub struct AirgridScenario {
    inner: Scenario,
}

/// Opaque simulation result handle.
pub struct AirgridResult {
    inner: SimResult,
    /// Flattened waypoints per UAV.
    points: Vec<Vec<AirgridPoint>>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: AirgridStatus, msg: impl Into<String>) -> AirgridStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> AirgridStatus) -> AirgridStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(AirgridStatus::Panic, "internal panic"))
}

fn scenario_status(e: &ScenarioError) -> AirgridStatus {
    match e {
        ScenarioError::Parse { .. } => AirgridStatus::ParseError,
        ScenarioError::Validation { .. } => AirgridStatus::ValidationError,
        ScenarioError::Io { .. } => AirgridStatus::IoError,
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn airgrid_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates a scenario with every parameter at its default.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn airgrid_scenario_default(out: *mut *mut AirgridScenario) -> AirgridStatus {
    guard(|| {
        if out.is_null() {
            return fail(AirgridStatus::NullPointer, "out is null");
        }
        *out = Box::into_raw(Box::new(AirgridScenario { inner: Scenario::default() }));
        AirgridStatus::Ok
    })
}

/// Parses a TOML scenario.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn airgrid_scenario_from_toml(
    text: *const c_char,
    out: *mut *mut AirgridScenario,
) -> AirgridStatus {
    guard(|| {
        if text.is_null() || out.is_null() {
            return fail(AirgridStatus::NullPointer, "text or out is null");
        }
        let Ok(text) = CStr::from_ptr(text).to_str() else {
            return fail(AirgridStatus::InvalidArgument, "scenario text is not UTF-8");
        };
        match parse_scenario(text) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(AirgridScenario { inner: s }));
                AirgridStatus::Ok
            }
            Err(e) => fail(scenario_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn airgrid_scenario_free(scenario: *mut AirgridScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn airgrid_scenario_set_seed(scenario: *mut AirgridScenario, seed: u64) -> AirgridStatus {
    match scenario.as_mut() {
        Some(s) => {
            s.inner.seed = seed;
            AirgridStatus::Ok
        }
        None => fail(AirgridStatus::NullPointer, "scenario is null"),
    }
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn airgrid_scenario_set_mode(scenario: *mut AirgridScenario, mode: AirgridMode) -> AirgridStatus {
    match scenario.as_mut() {
        Some(s) => {
            s.inner.mode = mode.into();
            AirgridStatus::Ok
        }
        None => fail(AirgridStatus::NullPointer, "scenario is null"),
    }
}

/// Replaces the listed UAVs with `count` randomly placed ones.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn airgrid_scenario_set_random_uavs(scenario: *mut AirgridScenario, count: u32) -> AirgridStatus {
    match scenario.as_mut() {
        Some(s) => {
            s.inner.uavs.clear();
            s.inner.random_uavs.count = count as usize;
            AirgridStatus::Ok
        }
        None => fail(AirgridStatus::NullPointer, "scenario is null"),
    }
}

/// Plans the scenario's single sub-airspace. Writes up to `capacity`
/// waypoints to `points`, the full count to `written` and the trajectory
/// cost to `cost`. Returns `IndexOutOfRange` when `capacity` is too small.
///
/// # Safety
/// `points` must hold `capacity` elements (may be NULL when 0); `written`
/// and `cost` must be writable.
#[no_mangle]
pub unsafe extern "C" fn airgrid_plan_sub_airspace(
    scenario: *const AirgridScenario,
    points: *mut AirgridPoint,
    capacity: usize,
    written: *mut usize,
    cost: *mut f64,
) -> AirgridStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(AirgridStatus::NullPointer, "scenario is null");
        };
        if written.is_null() || cost.is_null() {
            return fail(AirgridStatus::NullPointer, "written or cost is null");
        }
        let s = &s.inner;
        let sub = &s.sub_airspace;
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let plan = match plan_sub_airspace(
            s.mode.planner(),
            SubAirspaceId(1),
            sub.bounds(),
            &sub.obstacle_list(),
            sub.start,
            sub.goal,
            &s.fine_params(),
            &mut rng,
        ) {
            Ok(p) => p,
            Err(e) => return fail(AirgridStatus::PlanningFailed, e.to_string()),
        };
        let pts = &plan.waypath.waypoints;
        *written = pts.len();
        *cost = plan.cost;
        if pts.len() > capacity {
            return fail(AirgridStatus::IndexOutOfRange, format!("need room for {} points", pts.len()));
        }
        for (k, p) in pts.iter().enumerate() {
            *points.add(k) = AirgridPoint { x: p.x, y: p.y, z: p.z };
        }
        if !plan.is_feasible() {
            return fail(AirgridStatus::PlanningFailed, "trajectory violates flight constraints");
        }
        AirgridStatus::Ok
    })
}

/// Runs the multi-UAV simulation to completion.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn airgrid_simulate(
    scenario: *const AirgridScenario,
    out: *mut *mut AirgridResult,
) -> AirgridStatus {
    guard(|| {
        let (Some(s), false) = (scenario.as_ref(), out.is_null()) else {
            return fail(AirgridStatus::NullPointer, "scenario or out is null");
        };
        let world = match s.inner.build_world() {
            Ok(w) => w,
            Err(e) => return fail(scenario_status(&e), e.to_string()),
        };
        let inner = run_world(world, s.inner.mode);
        let points = inner
            .trajectories
            .iter()
            .map(|t| t.points().into_iter().map(|(p, _)| AirgridPoint { x: p.x, y: p.y, z: p.z }).collect())
            .collect();
        *out = Box::into_raw(Box::new(AirgridResult { inner, points }));
        AirgridStatus::Ok
    })
}

/// # Safety
/// `result` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn airgrid_result_free(result: *mut AirgridResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Number of UAVs in the run; 0 for NULL.
///
/// # Safety
/// `result` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn airgrid_result_uav_count(result: *const AirgridResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.trajectories.len())
}

/// Number of UAVs that reached their goal; 0 for NULL.
///
/// # Safety
/// `result` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn airgrid_result_arrived_count(result: *const AirgridResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.arrived())
}

/// Highest simultaneous UAV count in any sub-airspace; 0 for NULL.
///
/// # Safety
/// `result` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn airgrid_result_max_occupancy(result: *const AirgridResult) -> u32 {
    result.as_ref().map_or(0, |r| r.inner.metrics.airspace_max_occupancy())
}

/// Sum of flown lengths in meters; NaN for NULL.
///
/// # Safety
/// `result` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn airgrid_result_total_length(result: *const AirgridResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.metrics.total_length())
}

/// Whether UAV `index` (0-based) arrived.
///
/// # Safety
/// `result` must be a live handle; `arrived` must be writable.
#[no_mangle]
pub unsafe extern "C" fn airgrid_result_uav_arrived(
    result: *const AirgridResult,
    index: usize,
    arrived: *mut bool,
) -> AirgridStatus {
    let (Some(r), false) = (result.as_ref(), arrived.is_null()) else {
        return fail(AirgridStatus::NullPointer, "result or arrived is null");
    };
    match r.inner.trajectories.get(index) {
        Some(t) => {
            *arrived = t.phase == Phase::Arrived;
            AirgridStatus::Ok
        }
        None => fail(AirgridStatus::IndexOutOfRange, format!("no UAV at index {index}")),
    }
}

/// Borrowed view of the waypoints of UAV `index` (0-based). The pointer
/// lives as long as the result handle.
///
/// # Safety
/// `result` must be a live handle; `points` and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn airgrid_result_waypoints(
    result: *const AirgridResult,
    index: usize,
    points: *mut *const AirgridPoint,
    len: *mut usize,
) -> AirgridStatus {
    let Some(r) = result.as_ref() else {
        return fail(AirgridStatus::NullPointer, "result is null");
    };
    if points.is_null() || len.is_null() {
        return fail(AirgridStatus::NullPointer, "points or len is null");
    }
    match r.points.get(index) {
        Some(p) => {
            *points = p.as_ptr();
            *len = p.len();
            AirgridStatus::Ok
        }
        None => fail(AirgridStatus::IndexOutOfRange, format!("no UAV at index {index}")),
    }
}

/// Writes the result tables into directory `dir`.
///
/// # Safety
/// `result` must be a live handle; `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn airgrid_result_write(
    result: *const AirgridResult,
    dir: *const c_char,
    format: AirgridFormat,
) -> AirgridStatus {
    guard(|| {
        let (Some(r), false) = (result.as_ref(), dir.is_null()) else {
            return fail(AirgridStatus::NullPointer, "result or dir is null");
        };
        let Ok(dir) = CStr::from_ptr(dir).to_str() else {
            return fail(AirgridStatus::InvalidArgument, "dir is not UTF-8");
        };
        let format = match format {
            AirgridFormat::Csv => Format::Csv,
            AirgridFormat::JsonLines => Format::JsonLines,
        };
        match emit_results(&r.inner, &format!("seed{}", r.inner.seed), Path::new(dir), format) {
            Ok(_) => AirgridStatus::Ok,
            Err(e) => fail(AirgridStatus::IoError, e.to_string()),
        }
    })
}
