//! C interface to the bubble simulator.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Every fallible call returns a [`BdStatus`];
//! on failure a description is available from [`bd_last_error`] on the same
//! thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use bubbledyn::cli::{preflight, Prepared, Scenario};
use bubbledyn::dynamics::{integrate, TerminationReason, Trajectory};
use bubbledyn::potential::added_mass;
use bubbledyn::BubbleError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    Constraint = 5,
    Solver = 6,
    Io = 7,
    OutOfRange = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BdTermination {
    Completed = 0,
    Collision = 1,
    DegenerateShape = 2,
    SolverFailure = 3,
}

/// A validated scenario ready to integrate.
pub struct BdScenario {
    prepared: Prepared,
}

/// The samples of a finished integration.
pub struct BdTrajectory {
    traj: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: BdStatus, msg: impl Into<String>) -> BdStatus {
    set_error(msg);
    status
}

fn status_of(e: &BubbleError) -> BdStatus {
    match e {
        BubbleError::Parse(_) => BdStatus::Parse,
        BubbleError::Validation { .. }
        | BubbleError::Domain(_)
        | BubbleError::DegenerateShape(_)
        | BubbleError::Inadmissible(_)
        | BubbleError::Unsupported(_) => BdStatus::Validation,
        BubbleError::Constraint(_) => BdStatus::Constraint,
        BubbleError::Io(_) => BdStatus::Io,
        _ => BdStatus::Solver,
    }
}

fn from_error(e: BubbleError) -> BdStatus {
    fail(status_of(&e), e.to_string())
}

/// Runs `f`, turning panics into [`BdStatus::Panic`].
fn guard(f: impl FnOnce() -> BdStatus) -> BdStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(BdStatus::Panic, "internal panic"))
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, BdStatus> {
    if p.is_null() {
        return Err(fail(BdStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(BdStatus::InvalidUtf8, "string argument is not UTF-8"))
}

fn build(scenario: Scenario, base: &Path, out: *mut *mut BdScenario) -> BdStatus {
    match scenario
        .prepare(base)
        .and_then(|p| preflight(&p).map(|_| p))
    {
        Ok(prepared) => {
            let handle = Box::new(BdScenario { prepared });
            unsafe { *out = Box::into_raw(handle) };
            BdStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a scenario document. Relative mesh paths resolve against the
/// current directory.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bd_scenario_from_json(
    json: *const c_char,
    out: *mut *mut BdScenario,
) -> BdStatus {
    guard(|| {
        if out.is_null() {
            return fail(BdStatus::NullPointer, "null output handle");
        }
        let text = match str_arg(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match Scenario::parse(text) {
            Ok(s) => build(s, Path::new("."), out),
            Err(e) => from_error(e),
        }
    })
}

/// Reads and parses a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bd_scenario_from_file(
    path: *const c_char,
    out: *mut *mut BdScenario,
) -> BdStatus {
    guard(|| {
        if out.is_null() {
            return fail(BdStatus::NullPointer, "null output handle");
        }
        let path = match str_arg(path) {
            Ok(t) => PathBuf::from(t),
            Err(s) => return s,
        };
        match Scenario::from_file(&path) {
            Ok((s, base)) => build(s, &base, out),
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `scenario` must be NULL or a handle from `bd_scenario_from_*` that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn bd_scenario_free(scenario: *mut BdScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of bubbles and total number of shape coordinates.
///
/// # Safety
/// `scenario` must be a live handle; the outputs may be NULL.
#[no_mangle]
pub unsafe extern "C" fn bd_scenario_dimensions(
    scenario: *const BdScenario,
    bubbles: *mut usize,
    coordinates: *mut usize,
) -> BdStatus {
    let Some(s) = scenario.as_ref() else {
        return fail(BdStatus::NullPointer, "null scenario");
    };
    let config = &s.prepared.initial.config;
    if !bubbles.is_null() {
        *bubbles = config.bubbles.len();
    }
    if !coordinates.is_null() {
        *coordinates = config.dim();
    }
    BdStatus::Ok
}

/// Overrides the mesh level used by `bd_integrate` and `bd_scenario_added_mass`.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bd_scenario_set_mesh_level(
    scenario: *mut BdScenario,
    level: usize,
) -> BdStatus {
    let Some(s) = scenario.as_mut() else {
        return fail(BdStatus::NullPointer, "null scenario");
    };
    if level > 5 {
        return fail(
            BdStatus::OutOfRange,
            format!("mesh level {level} exceeds 5"),
        );
    }
    s.prepared.model.mesh_level = level;
    BdStatus::Ok
}

/// Writes the added-mass matrix of the initial configuration, row-major,
/// into `out` (`len` doubles, at least the square of the coordinate count).
///
/// # Safety
/// `scenario` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bd_scenario_added_mass(
    scenario: *const BdScenario,
    out: *mut f64,
    len: usize,
) -> BdStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(BdStatus::NullPointer, "null scenario");
        };
        if out.is_null() {
            return fail(BdStatus::NullPointer, "null output buffer");
        }
        let p = &s.prepared;
        let n = p.initial.config.dim();
        if len < n * n {
            return fail(
                BdStatus::BufferTooSmall,
                format!("need {} doubles, got {len}", n * n),
            );
        }
        match added_mass(&p.initial.config, p.model.mesh_level, p.model.density) {
            Ok(a) => {
                let buf = std::slice::from_raw_parts_mut(out, n * n);
                for i in 0..n {
                    for j in 0..n {
                        buf[i * n + j] = a.full[(i, j)];
                    }
                }
                BdStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Integrates the scenario. Early stops (collision, degenerate shape, solver
/// failure) still produce a trajectory; see `bd_trajectory_termination`.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bd_integrate(
    scenario: *const BdScenario,
    out: *mut *mut BdTrajectory,
) -> BdStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(BdStatus::NullPointer, "null scenario");
        };
        if out.is_null() {
            return fail(BdStatus::NullPointer, "null output handle");
        }
        let p = &s.prepared;
        match integrate(&p.model, &p.initial, &p.settings) {
            Ok(traj) => {
                if let Some(m) = &traj.message {
                    set_error(m.clone());
                }
                *out = Box::into_raw(Box::new(BdTrajectory { traj }));
                BdStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `trajectory` must be NULL or a handle from `bd_integrate` that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn bd_trajectory_free(trajectory: *mut BdTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Number of samples and of coordinates per sample.
///
/// # Safety
/// `trajectory` must be a live handle; the outputs may be NULL.
#[no_mangle]
pub unsafe extern "C" fn bd_trajectory_dimensions(
    trajectory: *const BdTrajectory,
    samples: *mut usize,
    coordinates: *mut usize,
) -> BdStatus {
    let Some(t) = trajectory.as_ref() else {
        return fail(BdStatus::NullPointer, "null trajectory");
    };
    if !samples.is_null() {
        *samples = t.traj.samples.len();
    }
    if !coordinates.is_null() {
        *coordinates = t.traj.template.dim();
    }
    BdStatus::Ok
}

/// # Safety
/// `trajectory` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bd_trajectory_termination(
    trajectory: *const BdTrajectory,
    out: *mut BdTermination,
) -> BdStatus {
    let Some(t) = trajectory.as_ref() else {
        return fail(BdStatus::NullPointer, "null trajectory");
    };
    if out.is_null() {
        return fail(BdStatus::NullPointer, "null output");
    }
    *out = match t.traj.termination {
        TerminationReason::Completed => BdTermination::Completed,
        TerminationReason::Collision => BdTermination::Collision,
        TerminationReason::DegenerateShape => BdTermination::DegenerateShape,
        TerminationReason::SolverFailure => BdTermination::SolverFailure,
    };
    BdStatus::Ok
}

/// One sample: its time, coordinates and velocities (each `len` doubles,
/// at least the coordinate count; either may be NULL), and energies.
///
/// # Safety
/// `trajectory` must be a live handle; non-NULL buffers must hold `len`
/// doubles and non-NULL scalars must be writable.
#[no_mangle]
pub unsafe extern "C" fn bd_trajectory_sample(
    trajectory: *const BdTrajectory,
    index: usize,
    time: *mut f64,
    coords: *mut f64,
    velocity: *mut f64,
    len: usize,
    kinetic: *mut f64,
    potential: *mut f64,
) -> BdStatus {
    let Some(t) = trajectory.as_ref() else {
        return fail(BdStatus::NullPointer, "null trajectory");
    };
    let Some(s) = t.traj.samples.get(index) else {
        return fail(
            BdStatus::OutOfRange,
            format!("sample {index} of {}", t.traj.samples.len()),
        );
    };
    let n = s.coords.len();
    if (!coords.is_null() || !velocity.is_null()) && len < n {
        return fail(
            BdStatus::BufferTooSmall,
            format!("need {n} doubles, got {len}"),
        );
    }
    if !coords.is_null() {
        ptr::copy_nonoverlapping(s.coords.as_ptr(), coords, n);
    }
    if !velocity.is_null() {
        ptr::copy_nonoverlapping(s.velocity.as_ptr(), velocity, n);
    }
    for (dst, v) in [
        (time, s.time),
        (kinetic, s.kinetic),
        (potential, s.potential),
    ] {
        if !dst.is_null() {
            *dst = v;
        }
    }
    BdStatus::Ok
}
