//! C ABI for the qdlearn simulator.
//!
//! Conventions: objects cross the boundary as opaque handles created and
//! destroyed here; every fallible call returns a [`qdl_status_t`] and writes
//! results through out-pointers; strings are NUL-terminated UTF-8 owned by
//! this library and released with [`qdl_string_free`]; the most recent
//! failure message is available per thread via [`qdl_last_error_message`].
//! Structured data (validation reports, run summaries, oracle solutions)
//! crosses as JSON text.

#![allow(non_camel_case_types, clippy::not_unsafe_ptr_arg_deref)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use qdlearn::config::ExperimentConfigFile;
use qdlearn::error::Error;
use qdlearn::harness::{export_csv, run_experiment, RunRecord};
use qdlearn::oracle::solve_q_star;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum qdl_status_t {
    QDL_OK = 0,
    /// A required pointer argument was NULL.
    QDL_NULL_POINTER = 1,
    /// A string argument was not valid UTF-8.
    QDL_INVALID_UTF8 = 2,
    /// Malformed JSON or an unknown preset name.
    QDL_PARSE_ERROR = 3,
    /// The configuration is well-formed but fails a pre-run check.
    QDL_VALIDATION_ERROR = 4,
    QDL_IO_ERROR = 5,
    /// An internal panic was caught at the boundary.
    QDL_PANIC = 6,
}

use qdl_status_t::*;

/// Opaque experiment configuration handle.
pub struct qdl_config_t {
    file: ExperimentConfigFile,
}

/// Opaque finished-run handle.
pub struct qdl_run_t {
    record: RunRecord,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: qdl_status_t, message: &str) -> qdl_status_t {
    set_last_error(message);
    status
}

fn fail_with(e: &Error) -> qdl_status_t {
    let status = match e {
        Error::Json { .. } | Error::Malformed { .. } => QDL_PARSE_ERROR,
        Error::Config(_) | Error::Validation(_) => QDL_VALIDATION_ERROR,
        Error::Io { .. } => QDL_IO_ERROR,
    };
    fail(status, &e.to_string())
}

fn guarded(body: impl FnOnce() -> qdl_status_t) -> qdl_status_t {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(QDL_PANIC, &format!("internal panic: {message}"))
        }
    }
}

// Pointer arguments must be either NULL (reported as QDL_NULL_POINTER) or
// valid for their advertised type; handles must come from this library and
// must not be used after their *_free call.
unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, qdl_status_t> {
    if ptr.is_null() {
        return Err(QDL_NULL_POINTER);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| QDL_INVALID_UTF8)
}

fn write_string(out: *mut *mut c_char, text: String) -> qdl_status_t {
    if out.is_null() {
        return fail(QDL_NULL_POINTER, "output pointer is NULL");
    }
    let sanitized = text.replace('\0', " ");
    match CString::new(sanitized) {
        Ok(cstring) => {
            unsafe { *out = cstring.into_raw() };
            QDL_OK
        }
        Err(_) => fail(QDL_PANIC, "string conversion failed"),
    }
}

/// Parses a JSON experiment document into a new config handle.
#[no_mangle]
pub extern "C" fn qdl_config_from_json(
    json: *const c_char,
    out: *mut *mut qdl_config_t,
) -> qdl_status_t {
    guarded(|| {
        if out.is_null() {
            return fail(QDL_NULL_POINTER, "output pointer is NULL");
        }
        let text = match unsafe { read_str(json) } {
            Ok(text) => text,
            Err(status) => return fail(status, "config JSON pointer invalid"),
        };
        match serde_json::from_str::<ExperimentConfigFile>(text) {
            Ok(file) => {
                unsafe { *out = Box::into_raw(Box::new(qdl_config_t { file })) };
                QDL_OK
            }
            Err(e) => fail(QDL_PARSE_ERROR, &format!("parsing config JSON: {e}")),
        }
    })
}

/// Loads one of the presets embedded in the library.
#[no_mangle]
pub extern "C" fn qdl_config_from_preset(
    name: *const c_char,
    out: *mut *mut qdl_config_t,
) -> qdl_status_t {
    guarded(|| {
        if out.is_null() {
            return fail(QDL_NULL_POINTER, "output pointer is NULL");
        }
        let name = match unsafe { read_str(name) } {
            Ok(name) => name,
            Err(status) => return fail(status, "preset name pointer invalid"),
        };
        match ExperimentConfigFile::from_preset(name) {
            Ok(file) => {
                unsafe { *out = Box::into_raw(Box::new(qdl_config_t { file })) };
                QDL_OK
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Serializes the (possibly overridden) config back to JSON.
#[no_mangle]
pub extern "C" fn qdl_config_to_json(
    config: *const qdl_config_t,
    out: *mut *mut c_char,
) -> qdl_status_t {
    guarded(|| {
        let Some(config) = (unsafe { config.as_ref() }) else {
            return fail(QDL_NULL_POINTER, "config handle is NULL");
        };
        match serde_json::to_string_pretty(&config.file) {
            Ok(text) => write_string(out, text),
            Err(e) => fail(QDL_PANIC, &format!("serializing config: {e}")),
        }
    })
}

#[no_mangle]
pub extern "C" fn qdl_config_set_seed(config: *mut qdl_config_t, seed: u64) -> qdl_status_t {
    guarded(|| {
        let Some(config) = (unsafe { config.as_mut() }) else {
            return fail(QDL_NULL_POINTER, "config handle is NULL");
        };
        config.file.master_seed = seed;
        QDL_OK
    })
}

#[no_mangle]
pub extern "C" fn qdl_config_set_steps(config: *mut qdl_config_t, steps: u64) -> qdl_status_t {
    guarded(|| {
        let Some(config) = (unsafe { config.as_mut() }) else {
            return fail(QDL_NULL_POINTER, "config handle is NULL");
        };
        config.file.total_steps = steps;
        QDL_OK
    })
}

/// Runs every pre-run check. Returns `QDL_OK` when all checks pass or are
/// waived, `QDL_VALIDATION_ERROR` otherwise. When `report_json` is non-NULL
/// it receives the full check list either way.
#[no_mangle]
pub extern "C" fn qdl_config_validate(
    config: *const qdl_config_t,
    report_json: *mut *mut c_char,
) -> qdl_status_t {
    guarded(|| {
        let Some(config) = (unsafe { config.as_ref() }) else {
            return fail(QDL_NULL_POINTER, "config handle is NULL");
        };
        let report = config.file.validate();
        if !report_json.is_null() {
            let text = serde_json::to_string_pretty(&report).unwrap_or_default();
            let status = write_string(report_json, text);
            if status != QDL_OK {
                return status;
            }
        }
        if report.passed() {
            QDL_OK
        } else {
            fail(
                QDL_VALIDATION_ERROR,
                &format!("validation failed: {}", report.one_line()),
            )
        }
    })
}

/// Runs the experiment and hands back the finished record.
#[no_mangle]
pub extern "C" fn qdl_run_experiment(
    config: *const qdl_config_t,
    out: *mut *mut qdl_run_t,
) -> qdl_status_t {
    guarded(|| {
        if out.is_null() {
            return fail(QDL_NULL_POINTER, "output pointer is NULL");
        }
        let Some(config) = (unsafe { config.as_ref() }) else {
            return fail(QDL_NULL_POINTER, "config handle is NULL");
        };
        let run_config = match config.file.to_run_config() {
            Ok(run_config) => run_config,
            Err(e) => return fail_with(&e),
        };
        match run_experiment(&run_config) {
            Ok(record) => {
                unsafe { *out = Box::into_raw(Box::new(qdl_run_t { record })) };
                QDL_OK
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// The run's summary (final metrics, oracle residual, waivers) as JSON.
#[no_mangle]
pub extern "C" fn qdl_run_summary_json(
    run: *const qdl_run_t,
    out: *mut *mut c_char,
) -> qdl_status_t {
    guarded(|| {
        let Some(run) = (unsafe { run.as_ref() }) else {
            return fail(QDL_NULL_POINTER, "run handle is NULL");
        };
        match serde_json::to_string_pretty(&run.record.summary()) {
            Ok(text) => write_string(out, text),
            Err(e) => fail(QDL_PANIC, &format!("serializing summary: {e}")),
        }
    })
}

/// Writes the run's snapshot series as CSV to `path`.
#[no_mangle]
pub extern "C" fn qdl_run_write_csv(run: *const qdl_run_t, path: *const c_char) -> qdl_status_t {
    guarded(|| {
        let Some(run) = (unsafe { run.as_ref() }) else {
            return fail(QDL_NULL_POINTER, "run handle is NULL");
        };
        let path = match unsafe { read_str(path) } {
            Ok(path) => path,
            Err(status) => return fail(status, "path pointer invalid"),
        };
        match export_csv(&run.record, Path::new(path)) {
            Ok(()) => QDL_OK,
            Err(e) => fail_with(&e),
        }
    })
}

/// Worst final per-agent distance to the exact fixed point.
#[no_mangle]
pub extern "C" fn qdl_run_final_max_error(run: *const qdl_run_t, out: *mut f64) -> qdl_status_t {
    guarded(|| {
        let Some(run) = (unsafe { run.as_ref() }) else {
            return fail(QDL_NULL_POINTER, "run handle is NULL");
        };
        if out.is_null() {
            return fail(QDL_NULL_POINTER, "output pointer is NULL");
        }
        unsafe { *out = run.record.final_oracle_error_max() };
        QDL_OK
    })
}

/// Final worst per-agent distance from the agent-average table.
#[no_mangle]
pub extern "C" fn qdl_run_final_consensus_distance(
    run: *const qdl_run_t,
    out: *mut f64,
) -> qdl_status_t {
    guarded(|| {
        let Some(run) = (unsafe { run.as_ref() }) else {
            return fail(QDL_NULL_POINTER, "run handle is NULL");
        };
        if out.is_null() {
            return fail(QDL_NULL_POINTER, "output pointer is NULL");
        }
        unsafe { *out = run.record.final_consensus_distance() };
        QDL_OK
    })
}

/// Solves the exact fixed point of the config's model and returns it as
/// JSON (`q_star`, `v_star`, `policy`, `residual`, `iterations`).
#[no_mangle]
pub extern "C" fn qdl_solve_oracle_json(
    config: *const qdl_config_t,
    out: *mut *mut c_char,
) -> qdl_status_t {
    guarded(|| {
        let Some(config) = (unsafe { config.as_ref() }) else {
            return fail(QDL_NULL_POINTER, "config handle is NULL");
        };
        let model = match config.file.build_model() {
            Ok(model) => model,
            Err(e) => return fail_with(&e),
        };
        let violations = model.validate_for_solve();
        if !violations.is_empty() {
            return fail(
                QDL_VALIDATION_ERROR,
                &format!("model rejected: {}", violations.join("; ")),
            );
        }
        match solve_q_star(&model, config.file.oracle_tolerance) {
            Ok(solution) => match serde_json::to_string_pretty(&solution) {
                Ok(text) => write_string(out, text),
                Err(e) => fail(QDL_PANIC, &format!("serializing oracle: {e}")),
            },
            Err(e) => fail_with(&e),
        }
    })
}

/// The most recent failure message on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qdl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Releases a string returned by this library. NULL is ignored.
#[no_mangle]
pub extern "C" fn qdl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Releases a config handle. NULL is ignored.
#[no_mangle]
pub extern "C" fn qdl_config_free(config: *mut qdl_config_t) {
    if !config.is_null() {
        drop(unsafe { Box::from_raw(config) });
    }
}

/// Releases a run handle. NULL is ignored.
#[no_mangle]
pub extern "C" fn qdl_run_free(run: *mut qdl_run_t) {
    if !run.is_null() {
        drop(unsafe { Box::from_raw(run) });
    }
}
