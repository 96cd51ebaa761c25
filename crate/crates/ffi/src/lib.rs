//! C ABI over the habitgrowth library.
//!
//! Every fallible call returns an [`HgStatus`] and writes its result through an out pointer.
//! On failure the message is kept per thread and read back with [`hg_last_error`].
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use habitgrowth::hjb::{value_function, StateSample};
use habitgrowth::simulate::{simulate_integral_form, simulate_lambda_form, Trajectory};
use habitgrowth::{Error, HistoryGrid, InitialState, ModelParams, Scenario};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HgStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Regime = 3,
    Infeasible = 4,
    Numerical = 5,
    Parse = 6,
    Io = 7,
    OutOfRange = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HgMethod {
    IntegralForm = 0,
    LambdaForm = 1,
}

/// Derived constants of a validated parameter set.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HgDerived {
    pub r: f64,
    pub alpha: f64,
    pub growth: f64,
    pub nu: f64,
    pub kappa0: f64,
    pub lambda0: f64,
}

/// One trajectory node.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HgRow {
    pub t: f64,
    pub k: f64,
    pub c: f64,
    pub h: f64,
    pub g: f64,
    pub lambda_check: f64,
    pub external_residual: f64,
}

pub struct HgParams(ModelParams);
pub struct HgHistory(HistoryGrid);
pub struct HgTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> HgStatus {
    match err {
        Error::Domain(_) => HgStatus::Domain,
        Error::Regime { .. } => HgStatus::Regime,
        Error::Infeasible { .. } => HgStatus::Infeasible,
        Error::Parse(_) => HgStatus::Parse,
        Error::Io(_) => HgStatus::Io,
        _ => HgStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (HgStatus, String)>) -> HgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            HgStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HgStatus::Panic
        }
    }
}

fn lift<T>(r: habitgrowth::Result<T>) -> Result<T, (HgStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null() -> (HgStatus, String) {
    (HgStatus::NullPointer, "null pointer argument".into())
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, (HgStatus, String)> {
    p.as_ref().ok_or_else(null)
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), (HgStatus, String)> {
    if out.is_null() {
        return Err(null());
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn hg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hg_params_new(
    eps: f64,
    eta: f64,
    tau: f64,
    a: f64,
    delta: f64,
    rho: f64,
    gamma: f64,
    out: *mut *mut HgParams,
) -> HgStatus {
    guard(|| {
        let p = ModelParams::new(eps, eta, tau, a, delta, rho, gamma);
        lift(p.check_domain())?;
        write_out(out, Box::into_raw(Box::new(HgParams(p))))
    })
}

#[no_mangle]
pub extern "C" fn hg_params_baseline() -> *mut HgParams {
    Box::into_raw(Box::new(HgParams(ModelParams::baseline())))
}

/// # Safety
/// `p` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hg_params_free(p: *mut HgParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Checks the standing assumptions and fills in the derived constants, including `lambda0`.
///
/// # Safety
/// `p` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hg_params_validate(p: *const HgParams, out: *mut HgDerived) -> HgStatus {
    guard(|| {
        let p = &deref(p)?.0;
        let d = lift(habitgrowth::validate(p))?;
        let lambda0 = lift(habitgrowth::spectral::real_root(p))?;
        write_out(
            out,
            HgDerived {
                r: d.r,
                alpha: d.alpha,
                growth: d.growth,
                nu: d.nu,
                kappa0: d.kappa0,
                lambda0,
            },
        )
    })
}

/// Real root of the characteristic function. Works outside the growth regime too.
///
/// # Safety
/// `p` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hg_real_root(p: *const HgParams, out: *mut f64) -> HgStatus {
    guard(|| {
        let l = lift(habitgrowth::spectral::real_root(&deref(p)?.0))?;
        write_out(out, l)
    })
}

/// Constant history on `n` intervals of `[-tau, 0]`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hg_history_constant(
    tau: f64,
    n: usize,
    level: f64,
    out: *mut *mut HgHistory,
) -> HgStatus {
    guard(|| {
        let h = lift(HistoryGrid::constant(tau, n, level))?;
        write_out(out, Box::into_raw(Box::new(HgHistory(h))))
    })
}

/// History from `len >= 2` samples, uniform on `[-tau, 0]`, oldest first.
///
/// # Safety
/// `samples` must point to `len` readable doubles and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hg_history_from_samples(
    tau: f64,
    samples: *const f64,
    len: usize,
    out: *mut *mut HgHistory,
) -> HgStatus {
    guard(|| {
        if samples.is_null() {
            return Err(null());
        }
        let values = std::slice::from_raw_parts(samples, len).to_vec();
        let h = lift(HistoryGrid::new(tau, values))?;
        write_out(out, Box::into_raw(Box::new(HgHistory(h))))
    })
}

/// # Safety
/// `h` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hg_history_free(h: *mut HgHistory) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Feasibility of `(k0, history)` over `horizon`. Writes the capital threshold and whether
/// `k0` clears it.
///
/// # Safety
/// Handles must be live; out pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hg_feasibility(
    p: *const HgParams,
    k0: f64,
    history: *const HgHistory,
    horizon: f64,
    threshold: *mut f64,
    feasible: *mut bool,
) -> HgStatus {
    guard(|| {
        let init = lift(InitialState::new(k0, deref(history)?.0.clone()))?;
        let rep = lift(habitgrowth::dde::check_feasibility(&deref(p)?.0, &init, horizon))?;
        write_out(threshold, rep.threshold())?;
        write_out(feasible, rep.is_feasible())
    })
}

/// Value function at `(k, past consumption)`.
///
/// # Safety
/// Handles must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hg_value_function(
    p: *const HgParams,
    k: f64,
    past: *const HgHistory,
    out: *mut f64,
) -> HgStatus {
    guard(|| {
        let state = lift(StateSample::new(k, deref(past)?.0.clone()))?;
        let v = lift(value_function(&state, &deref(p)?.0))?;
        write_out(out, v)
    })
}

/// Closed-loop optimal path on `n` intervals per memory length up to `horizon`.
///
/// # Safety
/// Handles must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hg_simulate(
    p: *const HgParams,
    k0: f64,
    history: *const HgHistory,
    horizon: f64,
    n: usize,
    method: HgMethod,
    out: *mut *mut HgTrajectory,
) -> HgStatus {
    guard(|| {
        let p = &deref(p)?.0;
        let init = lift(InitialState::new(k0, deref(history)?.0.clone()))?;
        let traj = lift(match method {
            HgMethod::IntegralForm => simulate_integral_form(p, &init, horizon, n),
            HgMethod::LambdaForm => simulate_lambda_form(p, &init, horizon, n),
        })?;
        write_out(out, Box::into_raw(Box::new(HgTrajectory(traj))))
    })
}

/// Number of nodes; 0 for a null handle.
///
/// # Safety
/// `t` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hg_trajectory_len(t: *const HgTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.0.rows.len())
}

/// # Safety
/// `t` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hg_trajectory_row(
    t: *const HgTrajectory,
    i: usize,
    out: *mut HgRow,
) -> HgStatus {
    guard(|| {
        let rows = &deref(t)?.0.rows;
        let r = rows.get(i).ok_or_else(|| {
            (
                HgStatus::OutOfRange,
                format!("row {i} out of range for {} rows", rows.len()),
            )
        })?;
        write_out(
            out,
            HgRow {
                t: r.t,
                k: r.k,
                c: r.c,
                h: r.h,
                g: r.g,
                lambda_check: r.lambda_check,
                external_residual: r.external_residual,
            },
        )
    })
}

/// `Lambda`, the level of surplus consumption `c - h = Lambda e^{Gamma t}`.
///
/// # Safety
/// `t` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hg_trajectory_lambda(t: *const HgTrajectory, out: *mut f64) -> HgStatus {
    guard(|| write_out(out, deref(t)?.0.meta.lambda))
}

/// # Safety
/// `t` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hg_trajectory_free(t: *mut HgTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Runs the full pipeline on a TOML scenario. Writes the CLI exit code and the JSON report,
/// which must be released with [`hg_string_free`]. Parse errors return `Parse` with no report.
///
/// # Safety
/// `toml` must be a NUL-terminated string; out pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hg_run_scenario(
    toml: *const c_char,
    exit_code: *mut i32,
    report_json: *mut *mut c_char,
) -> HgStatus {
    guard(|| {
        if toml.is_null() || exit_code.is_null() || report_json.is_null() {
            return Err(null());
        }
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|e| (HgStatus::Parse, e.to_string()))?;
        let sc = lift(Scenario::from_toml(text))?;
        let report = habitgrowth::run_scenario(&sc).report;
        let json = CString::new(report.to_json()).map_err(|e| (HgStatus::Numerical, e.to_string()))?;
        write_out(exit_code, report.exit_code)?;
        write_out(report_json, json.into_raw())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
