//! C ABI for the p2dfit library: opaque handles, integer status codes, and
//! flat buffer accessors so other languages can drive the cell models and
//! the identification pipeline.
//!
//! Conventions:
//! * functions return [`P2dfitStatus`]; outputs go through out-pointers;
//! * every `*_new`/`*_load` handle must be released with the matching
//!   `*_free`;
//! * strings returned by the library are UTF-8, NUL-terminated, and must be
//!   released with [`p2dfit_string_free`];
//! * the last error message is kept per thread and read with
//!   [`p2dfit_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use p2dfit::config::{ModelKind, RunConfig};
use p2dfit::error::Error;
use p2dfit::fit::{self, DataSet, PipelineConfig, ScenarioKind};
use p2dfit::params::group;
use p2dfit::protocol::Trace;

/// Status codes mirroring the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum P2dfitStatus {
    Ok = 0,
    /// Null pointer, malformed input, or unreadable file.
    InvalidInput = 2,
    /// A fitting stage failed.
    PipelineFailure = 3,
    /// The solver failed beyond recovery.
    NumericalFailure = 4,
    /// A panic crossed the boundary; state is still consistent.
    Internal = 70,
}

/// Forward model selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum P2dfitModel {
    SpmEq = 0,
    Spm = 1,
    P2d = 2,
    P2dt = 3,
}

impl From<P2dfitModel> for ModelKind {
    fn from(m: P2dfitModel) -> ModelKind {
        match m {
            P2dfitModel::SpmEq => ModelKind::SpmEq,
            P2dfitModel::Spm => ModelKind::Spm,
            P2dfitModel::P2d => ModelKind::P2d,
            P2dfitModel::P2dt => ModelKind::P2dt,
        }
    }
}

/// Trace column selector for [`p2dfit_trace_copy`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum P2dfitTraceColumn {
    TimeS = 0,
    CurrentA = 1,
    VoltageV = 2,
    TemperatureK = 3,
}

/// Opaque configuration handle.
pub struct P2dfitConfig {
    inner: RunConfig,
}

/// Opaque simulation trace handle.
pub struct P2dfitTrace {
    inner: Trace,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(cleaned).unwrap());
}

fn status_of(err: &Error) -> P2dfitStatus {
    match err.exit_code() {
        2 => P2dfitStatus::InvalidInput,
        3 => P2dfitStatus::PipelineFailure,
        _ => P2dfitStatus::NumericalFailure,
    }
}

fn guard<F: FnOnce() -> P2dfitStatus>(f: F) -> P2dfitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            P2dfitStatus::Internal
        }
    }
}

/// Last error message for this thread; valid until the next failing call.
#[no_mangle]
pub extern "C" fn p2dfit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Release a string returned by the library.
///
/// # Safety
/// `s` must be a pointer previously returned by a p2dfit function that
/// transfers string ownership, and not freed before.
#[no_mangle]
pub unsafe extern "C" fn p2dfit_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Compiled-in default configuration.
#[no_mangle]
pub extern "C" fn p2dfit_config_default() -> *mut P2dfitConfig {
    Box::into_raw(Box::new(P2dfitConfig { inner: RunConfig::default() }))
}

/// Load a TOML configuration file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn p2dfit_config_load(path: *const c_char, out: *mut *mut P2dfitConfig) -> P2dfitStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            set_error("null pointer argument");
            return P2dfitStatus::InvalidInput;
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            set_error("path is not valid UTF-8");
            return P2dfitStatus::InvalidInput;
        };
        match RunConfig::load(Path::new(path)) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(P2dfitConfig { inner: cfg }));
                P2dfitStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Release a configuration handle.
///
/// # Safety
/// `cfg` must come from `p2dfit_config_default`/`p2dfit_config_load` and
/// not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn p2dfit_config_free(cfg: *mut P2dfitConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Grouped parameters of the configured cell as a JSON object string
/// (caller frees with [`p2dfit_string_free`]).
///
/// # Safety
/// `cfg` must be a live configuration handle; `out` a valid out-pointer.
#[no_mangle]
pub unsafe extern "C" fn p2dfit_grouped_json(cfg: *const P2dfitConfig, out: *mut *mut c_char) -> P2dfitStatus {
    guard(|| {
        let (Some(cfg), false) = (cfg.as_ref(), out.is_null()) else {
            set_error("null pointer argument");
            return P2dfitStatus::InvalidInput;
        };
        match group(&cfg.inner.cell) {
            Ok(g) => {
                let mut map = serde_json::Map::new();
                for (k, v) in g.main_entries() {
                    map.insert(k, serde_json::json!(v));
                }
                map.insert("beta_inv".into(), serde_json::json!(g.beta_inv));
                let s = serde_json::Value::Object(map).to_string();
                *out = CString::new(s).unwrap().into_raw();
                P2dfitStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Run the configured protocol on the chosen model; returns a trace handle.
///
/// # Safety
/// `cfg` must be a live configuration handle; `out` a valid out-pointer.
#[no_mangle]
pub unsafe extern "C" fn p2dfit_simulate(
    cfg: *const P2dfitConfig,
    model: P2dfitModel,
    out: *mut *mut P2dfitTrace,
) -> P2dfitStatus {
    guard(|| {
        let (Some(cfg), false) = (cfg.as_ref(), out.is_null()) else {
            set_error("null pointer argument");
            return P2dfitStatus::InvalidInput;
        };
        let run = || -> Result<Trace, Error> {
            let grouped = group(&cfg.inner.cell)?;
            fit::simulate_configured_protocol(&cfg.inner, &grouped, model.into())
        };
        match run() {
            Ok(trace) => {
                *out = Box::into_raw(Box::new(P2dfitTrace { inner: trace }));
                P2dfitStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Number of records in a trace.
///
/// # Safety
/// `trace` must be a live trace handle (null yields 0).
#[no_mangle]
pub unsafe extern "C" fn p2dfit_trace_len(trace: *const P2dfitTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.len())
}

/// Copy one trace column into a caller buffer of at least
/// `p2dfit_trace_len` elements.
///
/// # Safety
/// `trace` must be a live trace handle and `buf` must point to at least
/// `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn p2dfit_trace_copy(
    trace: *const P2dfitTrace,
    column: P2dfitTraceColumn,
    buf: *mut f64,
    len: usize,
) -> P2dfitStatus {
    guard(|| {
        let Some(trace) = trace.as_ref() else {
            set_error("null trace handle");
            return P2dfitStatus::InvalidInput;
        };
        if buf.is_null() || len < trace.inner.len() {
            set_error("output buffer too small");
            return P2dfitStatus::InvalidInput;
        }
        let out = std::slice::from_raw_parts_mut(buf, trace.inner.len());
        for (slot, r) in out.iter_mut().zip(&trace.inner.records) {
            *slot = match column {
                P2dfitTraceColumn::TimeS => r.t,
                P2dfitTraceColumn::CurrentA => r.current_a,
                P2dfitTraceColumn::VoltageV => r.voltage_v,
                P2dfitTraceColumn::TemperatureK => r.temp_k,
            };
        }
        P2dfitStatus::Ok
    })
}

/// Release a trace handle.
///
/// # Safety
/// `trace` must come from `p2dfit_simulate` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn p2dfit_trace_free(trace: *mut P2dfitTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Generate the configured synthetic data set and write it as CSV.
///
/// # Safety
/// `cfg` must be a live configuration handle; `path` a valid NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn p2dfit_synth_to_file(cfg: *const P2dfitConfig, path: *const c_char) -> P2dfitStatus {
    guard(|| {
        let (Some(cfg), false) = (cfg.as_ref(), path.is_null()) else {
            set_error("null pointer argument");
            return P2dfitStatus::InvalidInput;
        };
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            set_error("path is not valid UTF-8");
            return P2dfitStatus::InvalidInput;
        };
        let run = || -> Result<(), Error> {
            let grouped = group(&cfg.inner.cell)?;
            let (data, comments) = fit::generate_synthetic(&cfg.inner, &grouped)?;
            let mut buf = Vec::new();
            data.write_csv(&mut buf, &comments)?;
            std::fs::write(path, buf)?;
            Ok(())
        };
        match run() {
            Ok(()) => P2dfitStatus::Ok,
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Run the staged identification pipeline on a data CSV; returns the
/// pipeline report as a JSON string (caller frees with
/// [`p2dfit_string_free`]).
///
/// # Safety
/// `cfg` must be a live configuration handle; `data_path` a valid
/// NUL-terminated string; `out_json` a valid out-pointer.
#[no_mangle]
pub unsafe extern "C" fn p2dfit_identify_file(
    cfg: *const P2dfitConfig,
    data_path: *const c_char,
    perturb_start: bool,
    out_json: *mut *mut c_char,
) -> P2dfitStatus {
    guard(|| {
        let (Some(cfg), false, false) = (cfg.as_ref(), data_path.is_null(), out_json.is_null()) else {
            set_error("null pointer argument");
            return P2dfitStatus::InvalidInput;
        };
        let Ok(path) = CStr::from_ptr(data_path).to_str() else {
            set_error("data path is not valid UTF-8");
            return P2dfitStatus::InvalidInput;
        };
        let run = || -> Result<String, Error> {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::config(format!("cannot read data file `{path}`: {e}")))?;
            let data = DataSet::from_csv(&text, cfg.inner.cell.i_ref)?;
            let nominal = group(&cfg.inner.cell)?;
            let start = if perturb_start {
                perturbed(&nominal, cfg.inner.fit.perturbation)
            } else {
                nominal
            };
            let report = fit::staged_pipeline(&data, &start, &cfg.inner, &PipelineConfig::default());
            if let Some(failure) = &report.failure {
                return Err(Error::Pipeline { stage: "pipeline".into(), reason: failure.clone() });
            }
            Ok(serde_json::to_string(&report).expect("report serializes"))
        };
        match run() {
            Ok(json) => {
                *out_json = CString::new(json).unwrap().into_raw();
                P2dfitStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

fn perturbed(nominal: &p2dfit::params::GroupedParameterSet, factor: f64) -> p2dfit::params::GroupedParameterSet {
    let mut start = *nominal;
    let mut up = true;
    for sc in ScenarioKind::STAGES {
        for p in fit::stage_subset(sc) {
            let v = p.extract(nominal);
            let f = if up { 1.0 + factor } else { 1.0 - factor };
            p.apply(v * f, &mut start, nominal);
            up = !up;
        }
    }
    start
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn default_config_round_trip() {
        let cfg = p2dfit_config_default();
        assert!(!cfg.is_null());
        unsafe { p2dfit_config_free(cfg) };
    }

    #[test]
    fn load_missing_config_reports_invalid_input() {
        let path = CString::new("/definitely/missing.toml").unwrap();
        let mut out: *mut P2dfitConfig = ptr::null_mut();
        let status = unsafe { p2dfit_config_load(path.as_ptr(), &mut out) };
        assert_eq!(status, P2dfitStatus::InvalidInput);
        let msg = unsafe { CStr::from_ptr(p2dfit_last_error()) }.to_str().unwrap();
        assert!(msg.contains("missing.toml"), "{msg}");
    }

    #[test]
    fn grouped_json_contains_main_parameters() {
        let cfg = p2dfit_config_default();
        let mut out: *mut c_char = ptr::null_mut();
        let status = unsafe { p2dfit_grouped_json(cfg, &mut out) };
        assert_eq!(status, P2dfitStatus::Ok);
        let json = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_string();
        unsafe { p2dfit_string_free(out) };
        unsafe { p2dfit_config_free(cfg) };
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["tau_d_s_neg", "tau_c_s_pos", "kappa_sep", "r_f", "gamma", "k_gamma_f", "beta_inv"] {
            assert!(v.get(key).is_some(), "missing {key} in {json}");
        }
    }

    #[test]
    fn simulate_and_copy_trace_through_the_abi() {
        // A short rest keeps the smoke test fast.
        let mut cfg = RunConfig::default();
        cfg.protocol.steps = vec![p2dfit::config::StepConfig::Rest { time_limit_s: 60.0 }];
        let handle = Box::into_raw(Box::new(P2dfitConfig { inner: cfg }));
        let mut trace: *mut P2dfitTrace = ptr::null_mut();
        let status = unsafe { p2dfit_simulate(handle, P2dfitModel::Spm, &mut trace) };
        assert_eq!(status, P2dfitStatus::Ok);
        let n = unsafe { p2dfit_trace_len(trace) };
        assert!(n >= 6, "expected several records, got {n}");
        let mut volts = vec![0.0; n];
        let status = unsafe { p2dfit_trace_copy(trace, P2dfitTraceColumn::VoltageV, volts.as_mut_ptr(), n) };
        assert_eq!(status, P2dfitStatus::Ok);
        assert!(volts.iter().all(|v| v.is_finite() && *v > 3.0 && *v < 4.4));
        // Undersized buffer is rejected.
        let status = unsafe { p2dfit_trace_copy(trace, P2dfitTraceColumn::TimeS, volts.as_mut_ptr(), n - 1) };
        assert_eq!(status, P2dfitStatus::InvalidInput);
        unsafe { p2dfit_trace_free(trace) };
        unsafe { p2dfit_config_free(handle) };
    }

    #[test]
    fn null_arguments_are_rejected_not_crashing() {
        let mut out: *mut P2dfitTrace = ptr::null_mut();
        let status = unsafe { p2dfit_simulate(ptr::null(), P2dfitModel::Spm, &mut out) };
        assert_eq!(status, P2dfitStatus::InvalidInput);
        assert_eq!(unsafe { p2dfit_trace_len(ptr::null()) }, 0);
    }
}
