//! C ABI over `mgf-netcalc`.
//!
//! Every fallible function returns one of the `MNC_*` codes. On failure a
//! message is stored per thread and can be read with
//! [`mnc_last_error_message`]. Scenarios are opaque handles created by
//! [`mnc_scenario_from_json`] and released with [`mnc_scenario_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mgf_netcalc::bounds::{self, BoundResult, BoundStatus, DeconvProblem, SearchOptions};
use mgf_netcalc::closed_form;
use mgf_netcalc::scenario::ScenarioFile;
use mgf_netcalc::service::TandemScenario;
use mgf_netcalc::traffic;
use mgf_netcalc::Error;

pub const MNC_OK: i32 = 0;
pub const MNC_ERR_NULL_POINTER: i32 = 1;
pub const MNC_ERR_UTF8: i32 = 2;
pub const MNC_ERR_INVALID_SCENARIO: i32 = 3;
pub const MNC_ERR_INVALID_PARAMETER: i32 = 4;
pub const MNC_ERR_UNSTABLE: i32 = 5;
pub const MNC_ERR_NUMERIC: i32 = 6;
pub const MNC_ERR_PANIC: i32 = 7;

pub const MNC_STATUS_BOUNDED: i32 = 0;
pub const MNC_STATUS_UNSTABLE: i32 = 1;
pub const MNC_STATUS_NOT_CERTIFIED: i32 = 2;

/// A validated tandem scenario in internal units.
pub struct MncScenario {
    inner: TandemScenario,
}

/// Result of a probabilistic bound.
///
/// `value` is in ms for delays, bits for backlogs and a probability for
/// violation queries. `theta_star` is NaN when no θ was found.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MncBound {
    pub value: f64,
    pub theta_star: f64,
    pub tail_error: f64,
    pub status: i32,
}

/// Worst-case bounds. Rates are in bits per ms, times in ms.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MncDeterministic {
    pub delay_ms: f64,
    pub backlog_bits: f64,
    pub rate_bits_per_ms: f64,
    pub latency_ms: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn code_for(e: &Error) -> i32 {
    match e {
        Error::InvalidScenario(_) | Error::Json(_) => MNC_ERR_INVALID_SCENARIO,
        Error::InvalidParameter(_) => MNC_ERR_INVALID_PARAMETER,
        Error::Unstable { .. } | Error::NoStableTheta => MNC_ERR_UNSTABLE,
        _ => MNC_ERR_NUMERIC,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (i32, String)>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MNC_OK
        }
        Ok(Err((code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            MNC_ERR_PANIC
        }
    }
}

fn lib_err(e: Error) -> (i32, String) {
    (code_for(&e), e.to_string())
}

fn null(name: &str) -> (i32, String) {
    (MNC_ERR_NULL_POINTER, format!("{name} is null"))
}

fn status_code(s: BoundStatus) -> i32 {
    match s {
        BoundStatus::Bounded => MNC_STATUS_BOUNDED,
        BoundStatus::Unstable => MNC_STATUS_UNSTABLE,
        BoundStatus::NotCertified => MNC_STATUS_NOT_CERTIFIED,
    }
}

fn to_c(r: &BoundResult, scale: f64) -> MncBound {
    MncBound {
        value: r.value * scale,
        theta_star: r.theta_star.unwrap_or(f64::NAN),
        tail_error: r.tail_error,
        status: status_code(r.status),
    }
}

unsafe fn scenario_ref<'a>(s: *const MncScenario) -> Result<&'a TandemScenario, (i32, String)> {
    s.as_ref().map(|s| &s.inner).ok_or_else(|| null("scenario"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), (i32, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    out.write(value);
    Ok(())
}

fn epsilon_ok(eps: f64) -> Result<(), (i32, String)> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err((
            MNC_ERR_INVALID_PARAMETER,
            format!("epsilon must be in (0, 1), got {eps}"),
        ))
    }
}

/// Parses a JSON scenario and stores a new handle in `*out`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mnc_scenario_from_json(
    json: *const c_char,
    out: *mut *mut MncScenario,
) -> i32 {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        out.write(ptr::null_mut());
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| (MNC_ERR_UTF8, e.to_string()))?;
        let inner = ScenarioFile::from_json(text)
            .and_then(|f| f.to_tandem())
            .map_err(lib_err)?;
        out.write(Box::into_raw(Box::new(MncScenario { inner })));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `scenario` must come from [`mnc_scenario_from_json`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn mnc_scenario_free(scenario: *mut MncScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of servers in the tandem.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mnc_scenario_hops(scenario: *const MncScenario, out: *mut u32) -> i32 {
    guard(|| {
        let s = scenario_ref(scenario)?;
        write_out(out, s.servers.len() as u32)
    })
}

/// End-to-end delay bound in ms at violation probability `epsilon`.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mnc_delay_bound(
    scenario: *const MncScenario,
    epsilon: f64,
    out: *mut MncBound,
) -> i32 {
    guard(|| {
        let s = scenario_ref(scenario)?;
        epsilon_ok(epsilon)?;
        let problem = DeconvProblem::for_scenario(s);
        let r = bounds::delay_bound(&problem, epsilon, &s.theta_grid, &SearchOptions::default())
            .map_err(lib_err)?;
        write_out(out, to_c(&r, s.slot_ms))
    })
}

/// Backlog bound in bits at violation probability `epsilon`.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mnc_backlog_bound(
    scenario: *const MncScenario,
    epsilon: f64,
    out: *mut MncBound,
) -> i32 {
    guard(|| {
        let s = scenario_ref(scenario)?;
        epsilon_ok(epsilon)?;
        let problem = DeconvProblem::for_scenario(s);
        let r = bounds::backlog_bound(&problem, epsilon, &s.theta_grid, &SearchOptions::default())
            .map_err(lib_err)?;
        write_out(out, to_c(&r, 1.0))
    })
}

/// Bound on the probability that the delay exceeds `delay_ms`.
///
/// The delay is rounded down to whole slots.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mnc_violation_probability(
    scenario: *const MncScenario,
    delay_ms: f64,
    out: *mut MncBound,
) -> i32 {
    guard(|| {
        let s = scenario_ref(scenario)?;
        if !(delay_ms >= 0.0 && delay_ms.is_finite()) {
            return Err((MNC_ERR_INVALID_PARAMETER, format!("bad delay {delay_ms}")));
        }
        let slots = (delay_ms / s.slot_ms + 1e-9).floor() as u64;
        let problem = DeconvProblem::for_scenario(s);
        let r = bounds::violation_probability(
            &problem,
            slots,
            &s.theta_grid,
            &SearchOptions::default(),
        )
        .map_err(lib_err)?;
        write_out(out, to_c(&r, 1.0))
    })
}

/// Worst-case delay and backlog from leaky-bucket envelopes.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mnc_deterministic_bounds(
    scenario: *const MncScenario,
    out: *mut MncDeterministic,
) -> i32 {
    guard(|| {
        let s = scenario_ref(scenario)?;
        let d = bounds::deterministic_bounds(s);
        write_out(
            out,
            MncDeterministic {
                delay_ms: d.delay * s.slot_ms,
                backlog_bits: d.backlog,
                rate_bits_per_ms: d.rate / s.slot_ms,
                latency_ms: d.latency * s.slot_ms,
            },
        )
    })
}

/// `ln E[e^{θ A(δ)}]` of a single leaky-bucket source with burst `burst`
/// (bits) and rate `rate` (bits per slot).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mnc_leaky_bucket_log_mgf(
    burst: f64,
    rate: f64,
    theta: f64,
    delta: u64,
    out: *mut f64,
) -> i32 {
    guard(|| {
        if !(burst >= 0.0 && rate >= 0.0 && theta > 0.0 && (burst + rate + theta).is_finite()) {
            return Err((
                MNC_ERR_INVALID_PARAMETER,
                format!("need burst, rate >= 0 and theta > 0, got {burst}, {rate}, {theta}"),
            ));
        }
        write_out(
            out,
            traffic::leaky_bucket_log_mgf(burst, rate, theta, delta),
        )
    })
}

/// `Σ_{τ>=d} C(τ+n-1, n-1) q^τ`, summed until the remainder is negligible.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mnc_negbin_tail(n: u32, q: f64, d: u64, out: *mut f64) -> i32 {
    guard(|| {
        let tau_max = closed_form::default_tau_max(n, q, d);
        let v = closed_form::negbin_tail_oracle(n, q, d, tau_max).map_err(lib_err)?;
        write_out(out, v)
    })
}

/// Message for the last failed call on this thread, or an empty string.
///
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mnc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mnc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
