//! C ABI over the planner. Every function returns an [`AghfStatus`]; on
//! failure the message is available from [`aghf_last_error`] until the next
//! call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use aghf::cli::{self, Problem, RunSummary};
use aghf::extraction::PlanResult;

/// Status codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AghfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Solve = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque validated problem.
pub struct AghfProblem {
    inner: Problem,
}

/// Opaque planning result.
pub struct AghfResult {
    plan: PlanResult,
    summary: RunSummary,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let mut bytes = message.into().into_bytes();
    bytes.retain(|&b| b != 0);
    let msg = CString::new(bytes).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &aghf::Error) -> AghfStatus {
    match err {
        aghf::Error::Config { .. } | aghf::Error::Expr(_) | aghf::Error::InvalidSystem(_) | aghf::Error::Json(_) => {
            AghfStatus::Config
        }
        aghf::Error::Io(_) | aghf::Error::Csv(_) => AghfStatus::Io,
        _ => AghfStatus::Solve,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (AghfStatus, String)>) -> AghfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AghfStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AghfStatus::Panic
        }
    }
}

fn fail(err: aghf::Error) -> (AghfStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (AghfStatus, String) {
    (AghfStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (AghfStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| (AghfStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (AghfStatus, String)> {
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn result_arg<'a>(r: *const AghfResult) -> Result<&'a AghfResult, (AghfStatus, String)> {
    unsafe { r.as_ref() }.ok_or_else(|| null("result"))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn aghf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aghf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a JSON problem configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aghf_problem_from_json(json: *const c_char, out: *mut *mut AghfProblem) -> AghfStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        *out = ptr::null_mut();
        let text = unsafe { str_arg(json, "json") }?;
        let inner = cli::parse_config(text).map_err(fail)?;
        *out = Box::into_raw(Box::new(AghfProblem { inner }));
        Ok(())
    })
}

/// Loads and validates a JSON problem configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aghf_problem_from_file(path: *const c_char, out: *mut *mut AghfProblem) -> AghfStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        *out = ptr::null_mut();
        let path = unsafe { str_arg(path, "path") }?;
        let inner = cli::load_config(Path::new(path)).map_err(fail)?;
        *out = Box::into_raw(Box::new(AghfProblem { inner }));
        Ok(())
    })
}

/// Number of state components of a problem.
///
/// # Safety
/// `problem` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aghf_problem_state_dim(problem: *const AghfProblem, out: *mut usize) -> AghfStatus {
    guard(|| {
        let p = unsafe { problem.as_ref() }.ok_or_else(|| null("problem"))?;
        *unsafe { out_arg(out, "out") }? = p.inner.system.state_dim();
        Ok(())
    })
}

/// # Safety
/// `problem` must come from this library or be null; it must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn aghf_problem_free(problem: *mut AghfProblem) {
    if !problem.is_null() {
        drop(unsafe { Box::from_raw(problem) });
    }
}

/// Runs the full planning pipeline.
///
/// # Safety
/// `problem` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aghf_plan(problem: *const AghfProblem, out: *mut *mut AghfResult) -> AghfStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        *out = ptr::null_mut();
        let p = unsafe { problem.as_ref() }.ok_or_else(|| null("problem"))?;
        let (plan, summary) = cli::run(&p.inner).map_err(fail)?;
        *out = Box::into_raw(Box::new(AghfResult { plan, summary }));
        Ok(())
    })
}

/// # Safety
/// `result` must come from this library or be null; it must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn aghf_result_free(result: *mut AghfResult) {
    if !result.is_null() {
        drop(unsafe { Box::from_raw(result) });
    }
}

unsafe fn get<T>(result: *const AghfResult, out: *mut T, f: impl FnOnce(&AghfResult) -> T) -> AghfStatus {
    guard(|| {
        let r = unsafe { result_arg(result) }?;
        *unsafe { out_arg(out, "out") }? = f(r);
        Ok(())
    })
}

/// Terminal time T.
///
/// # Safety
/// `result` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aghf_result_terminal_time(result: *const AghfResult, out: *mut f64) -> AghfStatus {
    unsafe { get(result, out, |r| r.summary.t) }
}

/// Control energy E.
///
/// # Safety
/// `result` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aghf_result_energy(result: *const AghfResult, out: *mut f64) -> AghfStatus {
    unsafe { get(result, out, |r| r.summary.e) }
}

/// Largest endpoint error over fixed end components.
///
/// # Safety
/// `result` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aghf_result_max_endpoint_error(result: *const AghfResult, out: *mut f64) -> AghfStatus {
    unsafe { get(result, out, |r| r.summary.max_endpoint_error()) }
}

/// Flow time reached.
///
/// # Safety
/// `result` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aghf_result_s_final(result: *const AghfResult, out: *mut f64) -> AghfStatus {
    unsafe { get(result, out, |r| r.summary.s_final) }
}

/// 1 if the flow reached its steady-state tolerance, else 0.
///
/// # Safety
/// `result` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aghf_result_converged(result: *const AghfResult, out: *mut c_int) -> AghfStatus {
    unsafe { get(result, out, |r| c_int::from(r.summary.converged)) }
}

/// Number of control samples.
///
/// # Safety
/// `result` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aghf_result_control_samples(result: *const AghfResult, out: *mut usize) -> AghfStatus {
    unsafe { get(result, out, |r| r.plan.control.samples()) }
}

/// Number of samples of the integrated path.
///
/// # Safety
/// `result` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aghf_result_path_samples(result: *const AghfResult, out: *mut usize) -> AghfStatus {
    unsafe { get(result, out, |r| r.plan.path.len()) }
}

/// Number of inputs m.
///
/// # Safety
/// `result` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aghf_result_input_dim(result: *const AghfResult, out: *mut usize) -> AghfStatus {
    unsafe { get(result, out, |r| r.plan.control.dim()) }
}

/// Number of states n.
///
/// # Safety
/// `result` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aghf_result_state_dim(result: *const AghfResult, out: *mut usize) -> AghfStatus {
    unsafe { get(result, out, |r| r.plan.path.dim()) }
}

/// Copies the control samples: `times[samples]` and row-major
/// `values[samples * m]`. `times` may be null.
///
/// # Safety
/// `result` must come from this library; the buffers must hold `capacity`
/// times and `capacity * m` values.
#[no_mangle]
pub unsafe extern "C" fn aghf_result_control(
    result: *const AghfResult,
    times: *mut f64,
    values: *mut f64,
    capacity: usize,
) -> AghfStatus {
    guard(|| {
        let r = unsafe { result_arg(result) }?;
        let c = &r.plan.control;
        let samples = c.samples();
        if capacity < samples {
            return Err((
                AghfStatus::BufferTooSmall,
                format!("capacity {capacity} below {samples} samples"),
            ));
        }
        if values.is_null() {
            return Err(null("values"));
        }
        let vals = unsafe { std::slice::from_raw_parts_mut(values, samples * c.dim()) };
        vals.copy_from_slice(c.values());
        if !times.is_null() {
            let ts = unsafe { std::slice::from_raw_parts_mut(times, samples) };
            for (k, t) in ts.iter_mut().enumerate() {
                *t = c.time(k);
            }
        }
        Ok(())
    })
}

/// Copies the integrated path: `times[samples]` and row-major
/// `states[samples * n]`. `times` may be null.
///
/// # Safety
/// `result` must come from this library; the buffers must hold `capacity`
/// times and `capacity * n` states.
#[no_mangle]
pub unsafe extern "C" fn aghf_result_path(
    result: *const AghfResult,
    times: *mut f64,
    states: *mut f64,
    capacity: usize,
) -> AghfStatus {
    guard(|| {
        let r = unsafe { result_arg(result) }?;
        let p = &r.plan.path;
        if capacity < p.len() {
            return Err((
                AghfStatus::BufferTooSmall,
                format!("capacity {capacity} below {} samples", p.len()),
            ));
        }
        if states.is_null() {
            return Err(null("states"));
        }
        let out = unsafe { std::slice::from_raw_parts_mut(states, p.len() * p.dim()) };
        for k in 0..p.len() {
            out[k * p.dim()..(k + 1) * p.dim()].copy_from_slice(p.state(k));
        }
        if !times.is_null() {
            unsafe { std::slice::from_raw_parts_mut(times, p.len()) }.copy_from_slice(&p.times);
        }
        Ok(())
    })
}

/// Summary as a JSON string; release it with [`aghf_string_free`].
///
/// # Safety
/// `result` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aghf_result_summary_json(result: *const AghfResult, out: *mut *mut c_char) -> AghfStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        *out = ptr::null_mut();
        let r = unsafe { result_arg(result) }?;
        let json = serde_json::to_string(&r.summary).map_err(|e| fail(e.into()))?;
        *out = CString::new(json).map_err(|e| (AghfStatus::Io, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn aghf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}
