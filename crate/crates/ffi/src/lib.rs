//! C ABI for the pricing engine. All entry points are panic-safe and report
//! failures through integer status codes; string results live inside an
//! opaque context handle and stay valid until the next call on that handle.

use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use robusthedge::cli::{result_record, run, ExperimentConfig};
use robusthedge::EngineError;

/// Success.
pub const RH_OK: i32 = 0;
/// Null pointer or malformed UTF-8 argument.
pub const RH_ERR_ARGUMENT: i32 = 1;
/// Configuration or validation error.
pub const RH_ERR_CONFIG: i32 = 2;
/// Capacity refusal (problem too large for the requested method).
pub const RH_ERR_CAPACITY: i32 = 3;
/// Numerical-contract breach; signals a bug, not user error.
pub const RH_ERR_CONTRACT: i32 = 4;
/// Internal panic caught at the boundary.
pub const RH_ERR_PANIC: i32 = 5;

/// Opaque experiment context. Create with `rh_context_new`, destroy with
/// `rh_context_free`; not thread-safe, use one handle per thread.
pub struct RhContext {
    last_error: CString,
    result: CString,
}

fn status_of(err: &EngineError) -> i32 {
    match err {
        EngineError::Capacity(_) => RH_ERR_CAPACITY,
        EngineError::Contract(_) | EngineError::Internal(_) => RH_ERR_CONTRACT,
        _ => RH_ERR_CONFIG,
    }
}

fn c_string(text: &str) -> CString {
    CString::new(text.replace('\0', " ")).expect("interior NULs stripped")
}

/// Allocates a fresh context. Returns NULL only on allocation failure.
#[no_mangle]
pub extern "C" fn rh_context_new() -> *mut RhContext {
    Box::into_raw(Box::new(RhContext {
        last_error: c_string(""),
        result: c_string(""),
    }))
}

/// Destroys a context created by `rh_context_new`. NULL is a no-op.
///
/// # Safety
/// `ctx` must be a pointer returned by `rh_context_new` that has not been
/// freed already.
#[no_mangle]
pub unsafe extern "C" fn rh_context_free(ctx: *mut RhContext) {
    if !ctx.is_null() {
        drop(Box::from_raw(ctx));
    }
}

/// Message of the most recent failure on this handle (empty if none). The
/// pointer is owned by the context and is invalidated by the next call.
///
/// # Safety
/// `ctx` must be a live context pointer.
#[no_mangle]
pub unsafe extern "C" fn rh_last_error(ctx: *const RhContext) -> *const c_char {
    if ctx.is_null() {
        return std::ptr::null();
    }
    (*ctx).last_error.as_ptr()
}

/// JSON result record of the most recent successful `rh_run` (empty string
/// before the first success). Owned by the context; invalidated by the
/// next call.
///
/// # Safety
/// `ctx` must be a live context pointer.
#[no_mangle]
pub unsafe extern "C" fn rh_result(ctx: *const RhContext) -> *const c_char {
    if ctx.is_null() {
        return std::ptr::null();
    }
    (*ctx).result.as_ptr()
}

/// Runs one experiment from a JSON config (same schema as the command-line
/// tool) and stores the JSON result record in the context.
///
/// # Safety
/// `ctx` must be a live context pointer and `config_json` a NUL-terminated
/// UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn rh_run(ctx: *mut RhContext, config_json: *const c_char) -> i32 {
    if ctx.is_null() || config_json.is_null() {
        return RH_ERR_ARGUMENT;
    }
    let ctx = &mut *ctx;
    let text = match CStr::from_ptr(config_json).to_str() {
        Ok(t) => t.to_owned(),
        Err(_) => {
            ctx.last_error = c_string("config is not valid UTF-8");
            return RH_ERR_ARGUMENT;
        }
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<CString, EngineError> {
        let config = ExperimentConfig::parse(&text)?;
        let started = Instant::now();
        let run_outcome = run(&config)?;
        let record = result_record(&config, &run_outcome, started.elapsed().as_millis());
        Ok(c_string(&serde_json::to_string(&record).expect("record serializes")))
    }));
    match outcome {
        Ok(Ok(record)) => {
            ctx.result = record;
            ctx.last_error = c_string("");
            RH_OK
        }
        Ok(Err(err)) => {
            ctx.last_error = c_string(&err.to_string());
            status_of(&err)
        }
        Err(_) => {
            ctx.last_error = c_string("internal panic");
            RH_ERR_PANIC
        }
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_config(text: &str) -> (i32, String, String) {
        let ctx = rh_context_new();
        let c = CString::new(text).unwrap();
        unsafe {
            let status = rh_run(ctx, c.as_ptr());
            let result = CStr::from_ptr(rh_result(ctx)).to_string_lossy().into_owned();
            let error = CStr::from_ptr(rh_last_error(ctx)).to_string_lossy().into_owned();
            rh_context_free(ctx);
            (status, result, error)
        }
    }

    #[test]
    fn prices_through_the_c_boundary() {
        let (status, result, error) = run_config(
            r#"{
              "schema_version": 1,
              "mode": "price",
              "seed": 1,
              "model": {"s0": 1.0, "periods": 1, "sigma_low": 0.6931471805599453,
                        "sigma_high": 0.6931471805599453, "refinement": 1},
              "cost": {"kind": "zero"},
              "payoff": {"kind": "call", "strike": 1.0}
            }"#,
        );
        assert_eq!(status, RH_OK, "error: {error}");
        let record: serde_json::Value = serde_json::from_str(&result).unwrap();
        let v = record["result"]["value"].as_f64().unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-6, "value {v}");
    }

    #[test]
    fn config_errors_surface_with_code_and_message() {
        let (status, _, error) = run_config("{\"schema_version\": 9}");
        assert_eq!(status, RH_ERR_CONFIG);
        assert!(!error.is_empty());
    }

    #[test]
    fn null_arguments_are_rejected() {
        unsafe {
            assert_eq!(rh_run(std::ptr::null_mut(), std::ptr::null()), RH_ERR_ARGUMENT);
            assert!(rh_last_error(std::ptr::null()).is_null());
            rh_context_free(std::ptr::null_mut());
        }
    }

    #[test]
    fn version_is_a_c_string() {
        let v = unsafe { CStr::from_ptr(rh_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
