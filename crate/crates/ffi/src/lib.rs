//! C ABI over the simulator. Scenarios and reports are opaque handles owned
//! by the caller and released with their `_free` function. Every call returns
//! an [`ErsStatus`]; on failure `ers_last_error` describes the cause.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use erudite_sim::analytic::TransferScenario;
use erudite_sim::harness::{self, HarnessError, SweepParam};
use erudite_sim::metrics::MetricsReport;
use erudite_sim::run::{run_path, SimOptions};
use erudite_sim::scenario::{PathKind, Scenario};
use erudite_sim::units::{Bandwidth, Bytes, Nanos};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Scenario text or a parameter failed validation.
    Config = 3,
    /// The simulation tripped an internal invariant.
    Invariant = 4,
    /// Unknown metric, preset or parameter name.
    NotFound = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErsPath {
    Baseline = 0,
    Erudite = 1,
}

/// Opaque scenario handle.
pub struct ErsScenario(Scenario);

/// Opaque report handle.
pub struct ErsReport(MetricsReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: ErsStatus, msg: impl Into<String>) -> ErsStatus {
    set_error(msg);
    status
}

fn from_harness(e: HarnessError) -> ErsStatus {
    let status = match e {
        HarnessError::Invariant(_) => ErsStatus::Invariant,
        _ => ErsStatus::Config,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> ErsStatus) -> ErsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(ErsStatus::Panic, msg)
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, ErsStatus> {
    if p.is_null() {
        return Err(fail(ErsStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(ErsStatus::InvalidUtf8, "argument is not UTF-8"))
}

unsafe fn emit_scenario(s: Scenario, out: *mut *mut ErsScenario) -> ErsStatus {
    *out = Box::into_raw(Box::new(ErsScenario(s)));
    ErsStatus::Ok
}

/// Last error message on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn ers_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses and validates TOML scenario text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ers_scenario_parse(toml: *const c_char, out: *mut *mut ErsScenario) -> ErsStatus {
    guard(|| {
        if out.is_null() {
            return fail(ErsStatus::NullArgument, "out is null");
        }
        let t = match text(toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match harness::parse_scenario(t, "scenario") {
            Ok(s) => emit_scenario(s, out),
            Err(e) => from_harness(e),
        }
    })
}

/// Loads a built-in preset by name.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ers_scenario_preset(name: *const c_char, out: *mut *mut ErsScenario) -> ErsStatus {
    guard(|| {
        if out.is_null() {
            return fail(ErsStatus::NullArgument, "out is null");
        }
        let n = match text(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        if !harness::PRESETS.iter().any(|(p, _)| *p == n) {
            return fail(ErsStatus::NotFound, format!("unknown preset {n:?}"));
        }
        match harness::preset(n) {
            Ok(s) => emit_scenario(s, out),
            Err(e) => from_harness(e),
        }
    })
}

/// Sets a sweepable parameter (`granularity`, `threads`, `initiation_rate`,
/// `header_bytes`, `ssd_count`) and revalidates.
///
/// # Safety
/// `scenario` must come from this library; `param` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ers_scenario_set(scenario: *mut ErsScenario, param: *const c_char, value: u64) -> ErsStatus {
    guard(|| {
        let Some(sc) = scenario.as_mut() else {
            return fail(ErsStatus::NullArgument, "scenario is null");
        };
        let p = match text(param) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let Ok(param) = p.parse::<SweepParam>() else {
            return fail(ErsStatus::NotFound, format!("unknown parameter {p:?}"));
        };
        let mut next = sc.0.clone();
        param.apply(&mut next, value);
        if let Err(e) = next.validate() {
            return fail(ErsStatus::Config, e.to_string());
        }
        sc.0 = next;
        ErsStatus::Ok
    })
}

/// # Safety
/// `scenario` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ers_scenario_free(scenario: *mut ErsScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs one path to the scenario horizon.
///
/// # Safety
/// `scenario` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ers_simulate(scenario: *const ErsScenario, path: ErsPath, out: *mut *mut ErsReport) -> ErsStatus {
    guard(|| {
        let Some(sc) = scenario.as_ref() else {
            return fail(ErsStatus::NullArgument, "scenario is null");
        };
        if out.is_null() {
            return fail(ErsStatus::NullArgument, "out is null");
        }
        let p = match path {
            ErsPath::Baseline => PathKind::Baseline,
            ErsPath::Erudite => PathKind::Erudite,
        };
        match run_path(&sc.0, p, SimOptions::default()) {
            Ok(o) => {
                *out = Box::into_raw(Box::new(ErsReport(o.report)));
                ErsStatus::Ok
            }
            Err(e) => from_harness(e.into()),
        }
    })
}

/// Reads a scalar metric by column name, e.g. `useful_bandwidth`.
///
/// # Safety
/// `report` must come from this library; `metric` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ers_report_get(report: *const ErsReport, metric: *const c_char, out: *mut f64) -> ErsStatus {
    guard(|| {
        let Some(r) = report.as_ref() else {
            return fail(ErsStatus::NullArgument, "report is null");
        };
        if out.is_null() {
            return fail(ErsStatus::NullArgument, "out is null");
        }
        let m = match text(metric) {
            Ok(m) => m,
            Err(s) => return s,
        };
        match r.0.get(m) {
            Some(v) => {
                *out = v;
                ErsStatus::Ok
            }
            None => fail(ErsStatus::NotFound, format!("unknown metric {m:?}")),
        }
    })
}

/// # Safety
/// `report` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ers_report_free(report: *mut ErsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Requests in flight needed to saturate a link of `bandwidth` bytes/s at
/// `latency_ns` with `granularity`-byte payloads and `header` bytes each.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ers_required_inflight(
    bandwidth: u64,
    latency_ns: u64,
    granularity: u64,
    header: u64,
    out: *mut u64,
) -> ErsStatus {
    guard(|| {
        if out.is_null() {
            return fail(ErsStatus::NullArgument, "out is null");
        }
        let t = TransferScenario::new(Bandwidth(bandwidth), Nanos(latency_ns), Bytes(granularity), Bytes(header));
        match t.and_then(|t| t.required_inflight()) {
            Ok(n) => {
                *out = n;
                ErsStatus::Ok
            }
            Err(e) => fail(ErsStatus::Config, e.to_string()),
        }
    })
}
