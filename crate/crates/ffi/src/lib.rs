//! C interface to the motion planner simulator.
//!
//! Scenarios and simulation results are opaque handles created and destroyed
//! through this API. Every function returns an [`MpStatus`]; on failure a
//! description is available from [`mp_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::fs::File;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use motion_planner::config::PlannerConfig;
use motion_planner::decision::Mode;
use motion_planner::sim::{self, builtin, RunStatus, ScenarioFile, SimRun};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidScenario = 3,
    InvalidArgument = 4,
    SimulationError = 5,
    IoError = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Driving mode of a logged tick.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpMode {
    Ltm = 0,
    LaneChange = 1,
    Emergency = 2,
}

impl From<Mode> for MpMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Ltm => MpMode::Ltm,
            Mode::LaneChange => MpMode::LaneChange,
            Mode::Emergency => MpMode::Emergency,
        }
    }
}

/// Ego state of one simulation tick.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub a_lon: f64,
    pub a_lat: f64,
    pub steer: f64,
    /// Smallest footprint gap to another vehicle; infinite without traffic.
    pub min_gap: f64,
    pub mode: MpMode,
}

/// A validated scenario ready to run.
pub struct MpScenario {
    file: ScenarioFile,
    overrides: Option<serde_json::Value>,
}

/// The outcome of one simulation.
pub struct MpRun {
    run: SimRun,
    metrics_json: Vec<u8>,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.as_bytes().to_vec());
}

fn fail(status: MpStatus, msg: impl AsRef<str>) -> MpStatus {
    set_error(msg.as_ref());
    status
}

/// Runs `f`, turning panics into [`MpStatus::Panic`].
fn guard(f: impl FnOnce() -> MpStatus) -> MpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == MpStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(MpStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, MpStatus> {
    if p.is_null() {
        return Err(fail(MpStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(MpStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// Copies `bytes` plus a terminating NUL into `buf` when it fits; the
/// required size including the NUL is stored in `needed` when non-null.
unsafe fn copy_out(bytes: &[u8], buf: *mut c_char, cap: usize, needed: *mut usize) -> MpStatus {
    if !needed.is_null() {
        *needed = bytes.len() + 1;
    }
    if buf.is_null() || cap < bytes.len() + 1 {
        return if buf.is_null() && cap == 0 {
            MpStatus::Ok
        } else {
            fail(MpStatus::BufferTooSmall, "buffer too small")
        };
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), bytes.len());
    *buf.add(bytes.len()) = 0;
    MpStatus::Ok
}

fn check(file: ScenarioFile, overrides: Option<serde_json::Value>, out: *mut *mut MpScenario) -> MpStatus {
    let problems = file.problems();
    if !problems.is_empty() {
        return fail(MpStatus::InvalidScenario, problems.join("; "));
    }
    if let Err(e) = file.build(&PlannerConfig::default(), overrides.as_ref()) {
        return fail(MpStatus::InvalidScenario, e.to_string());
    }
    // SAFETY: the caller checked `out` for null
    unsafe { *out = Box::into_raw(Box::new(MpScenario { file, overrides })) };
    MpStatus::Ok
}

/// Parses a scenario from JSON text. `config_json` may be null; otherwise it
/// holds planner configuration overrides.
///
/// # Safety
/// `json` and `config_json` must be null or NUL-terminated strings; `out`
/// must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn mp_scenario_from_json(json: *const c_char, config_json: *const c_char, out: *mut *mut MpScenario) -> MpStatus {
    guard(|| {
        if out.is_null() {
            return fail(MpStatus::NullPointer, "out is null");
        }
        let text = match str_arg(json, "json") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let overrides = if config_json.is_null() {
            None
        } else {
            let c = match str_arg(config_json, "config_json") {
                Ok(t) => t,
                Err(s) => return s,
            };
            match serde_json::from_str(c) {
                Ok(v) => Some(v),
                Err(e) => return fail(MpStatus::InvalidArgument, format!("config_json: {e}")),
            }
        };
        match ScenarioFile::from_json(text) {
            Ok(file) => check(file, overrides, out),
            Err(e) => fail(MpStatus::InvalidScenario, e.to_string()),
        }
    })
}

/// Loads a built-in scenario: `lane_change`, `roundabout`, `left_turn` or
/// `emergency`.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be valid for a pointer
/// write.
#[no_mangle]
pub unsafe extern "C" fn mp_scenario_builtin(name: *const c_char, out: *mut *mut MpScenario) -> MpStatus {
    guard(|| {
        if out.is_null() {
            return fail(MpStatus::NullPointer, "out is null");
        }
        let name = match str_arg(name, "name") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match builtin::by_name(name) {
            Some(file) => check(file, None, out),
            None => fail(MpStatus::InvalidArgument, format!("unknown builtin `{name}`")),
        }
    })
}

/// Replaces the scenario's random seed.
///
/// # Safety
/// `scenario` must be null or a handle from this API.
#[no_mangle]
pub unsafe extern "C" fn mp_scenario_set_seed(scenario: *mut MpScenario, seed: u64) -> MpStatus {
    guard(|| match scenario.as_mut() {
        Some(s) => {
            s.file.sim.seed = seed;
            MpStatus::Ok
        }
        None => fail(MpStatus::NullPointer, "scenario is null"),
    })
}

/// Releases a scenario; null is ignored.
///
/// # Safety
/// `scenario` must be null or a handle from this API not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mp_scenario_free(scenario: *mut MpScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Simulates the scenario to completion.
///
/// # Safety
/// `scenario` must be a handle from this API; `out` must be valid for a
/// pointer write.
#[no_mangle]
pub unsafe extern "C" fn mp_run(scenario: *const MpScenario, out: *mut *mut MpRun) -> MpStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(MpStatus::NullPointer, "scenario is null");
        };
        if out.is_null() {
            return fail(MpStatus::NullPointer, "out is null");
        }
        let built = match s.file.build(&PlannerConfig::default(), s.overrides.as_ref()) {
            Ok(b) => b,
            Err(e) => return fail(MpStatus::InvalidScenario, e.to_string()),
        };
        let run = match sim::run(&built) {
            Ok(r) => r,
            Err(e) => return fail(MpStatus::SimulationError, e.to_string()),
        };
        let metrics_json = match serde_json::to_vec(&sim::metrics(&run.log)) {
            Ok(m) => m,
            Err(e) => return fail(MpStatus::SimulationError, e.to_string()),
        };
        *out = Box::into_raw(Box::new(MpRun { run, metrics_json }));
        MpStatus::Ok
    })
}

/// Whether the planner reported failure during the run.
///
/// # Safety
/// `run` must be a handle from this API; `failed` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn mp_run_failed(run: *const MpRun, failed: *mut bool) -> MpStatus {
    guard(|| match (run.as_ref(), failed.is_null()) {
        (Some(r), false) => {
            *failed = r.run.log.status == RunStatus::Failed;
            MpStatus::Ok
        }
        _ => fail(MpStatus::NullPointer, "null argument"),
    })
}

/// Number of logged ticks.
///
/// # Safety
/// `run` must be a handle from this API; `count` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn mp_run_tick_count(run: *const MpRun, count: *mut usize) -> MpStatus {
    guard(|| match (run.as_ref(), count.is_null()) {
        (Some(r), false) => {
            *count = r.run.log.rows.len();
            MpStatus::Ok
        }
        _ => fail(MpStatus::NullPointer, "null argument"),
    })
}

/// Ego sample of tick `index`.
///
/// # Safety
/// `run` must be a handle from this API; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn mp_run_sample(run: *const MpRun, index: usize, out: *mut MpSample) -> MpStatus {
    guard(|| {
        let (Some(r), false) = (run.as_ref(), out.is_null()) else {
            return fail(MpStatus::NullPointer, "null argument");
        };
        let Some(row) = r.run.log.rows.get(index) else {
            return fail(MpStatus::InvalidArgument, format!("tick {index} out of range"));
        };
        *out = MpSample {
            t: row.t,
            x: row.x,
            y: row.y,
            heading: row.heading,
            v: row.v,
            a_lon: row.a_lon,
            a_lat: row.a_lat,
            steer: row.steer,
            min_gap: row.min_gap,
            mode: row.mode.into(),
        };
        MpStatus::Ok
    })
}

/// Run metrics as JSON. Pass a null buffer with `cap == 0` to query the
/// required size, which includes the terminating NUL.
///
/// # Safety
/// `run` must be a handle from this API; `buf` must be null or valid for
/// `cap` bytes; `needed` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn mp_run_metrics_json(run: *const MpRun, buf: *mut c_char, cap: usize, needed: *mut usize) -> MpStatus {
    guard(|| match run.as_ref() {
        Some(r) => copy_out(&r.metrics_json, buf, cap, needed),
        None => fail(MpStatus::NullPointer, "run is null"),
    })
}

/// Writes the full log as CSV.
///
/// # Safety
/// `run` must be a handle from this API; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mp_run_write_csv(run: *const MpRun, path: *const c_char) -> MpStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            return fail(MpStatus::NullPointer, "run is null");
        };
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let file = match File::create(path) {
            Ok(f) => f,
            Err(e) => return fail(MpStatus::IoError, format!("{path}: {e}")),
        };
        match r.run.log.write_csv(file) {
            Ok(()) => MpStatus::Ok,
            Err(e) => fail(MpStatus::IoError, e.to_string()),
        }
    })
}

/// Releases a run; null is ignored.
///
/// # Safety
/// `run` must be null or a handle from this API not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mp_run_free(run: *mut MpRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Message of the last failed call on this thread, empty after a success.
/// Same size protocol as [`mp_run_metrics_json`].
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes; `needed` must be null or
/// valid for a write.
#[no_mangle]
pub unsafe extern "C" fn mp_last_error(buf: *mut c_char, cap: usize, needed: *mut usize) -> MpStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    if !needed.is_null() {
        *needed = msg.len() + 1;
    }
    if buf.is_null() || cap < msg.len() + 1 {
        return if buf.is_null() && cap == 0 { MpStatus::Ok } else { MpStatus::BufferTooSmall };
    }
    ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), msg.len());
    *buf.add(msg.len()) = 0;
    MpStatus::Ok
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
