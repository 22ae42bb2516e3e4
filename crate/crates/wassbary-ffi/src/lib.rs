//! C ABI: opaque measure handles, JSON in/out, status codes. The header
//! lives in include/wassbary.h.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

use wassbary::barycenter::{barycenter, DescentConfig};
use wassbary::measures::Measure;
use wassbary::measures::wasserstein2_sq;
use wassbary::serialize::{measure_from_json, measure_to_json};

pub const WB_OK: i32 = 0;
pub const WB_ERR_NULL: i32 = 1;
pub const WB_ERR_PARSE: i32 = 2;
pub const WB_ERR_NUMERICAL: i32 = 3;
pub const WB_ERR_UTF8: i32 = 4;

/// Opaque handle over a probability measure.
pub struct WbMeasure(Measure);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).expect("no interior NUL"));
}

fn fail(code: i32, msg: &str) -> i32 {
    set_error(msg);
    code
}

/// Returns the message for the most recent error on this thread. The pointer
/// is valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a measure from JSON. On success writes a new handle to `out`;
/// release it with `wb_measure_free`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wb_measure_from_json(
    json: *const c_char,
    out: *mut *mut WbMeasure,
) -> i32 {
    if json.is_null() || out.is_null() {
        return fail(WB_ERR_NULL, "null argument");
    }
    let s = match CStr::from_ptr(json).to_str() {
        Ok(s) => s,
        Err(e) => return fail(WB_ERR_UTF8, &e.to_string()),
    };
    match measure_from_json(s) {
        Ok(m) => {
            *out = Box::into_raw(Box::new(WbMeasure(m)));
            WB_OK
        }
        Err(e) => fail(WB_ERR_PARSE, &e.to_string()),
    }
}

/// Serializes a measure to JSON. Release the returned string with
/// `wb_string_free`; returns NULL on a null handle.
///
/// # Safety
/// `m` must be a handle returned by this library (or NULL).
#[no_mangle]
pub unsafe extern "C" fn wb_measure_to_json(m: *const WbMeasure) -> *mut c_char {
    if m.is_null() {
        set_error("null measure handle");
        return std::ptr::null_mut();
    }
    let json = measure_to_json(&(*m).0);
    CString::new(json).expect("JSON has no NUL").into_raw()
}

/// # Safety
/// `m` must be a handle returned by this library (or NULL) and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wb_measure_free(m: *mut WbMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `s` must come from `wb_measure_to_json` (or be NULL) and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// 2-Wasserstein distance between two measures of the same family.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wb_wasserstein2(
    a: *const WbMeasure,
    b: *const WbMeasure,
    out: *mut f64,
) -> i32 {
    if a.is_null() || b.is_null() || out.is_null() {
        return fail(WB_ERR_NULL, "null argument");
    }
    match wasserstein2_sq(&(*a).0, &(*b).0) {
        Ok(d2) => {
            *out = d2.max(0.0).sqrt();
            WB_OK
        }
        Err(e) => fail(WB_ERR_NUMERICAL, &e.to_string()),
    }
}

/// Barycenter of `n` measures. Writes a new handle to `out` on success.
/// Pass `tolerance <= 0`, `max_iters == 0`, or `tau < 0` to use the defaults.
///
/// # Safety
/// `inputs` must point to `n` live handles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wb_barycenter(
    inputs: *const *const WbMeasure,
    n: usize,
    tolerance: f64,
    max_iters: usize,
    tau: f64,
    out: *mut *mut WbMeasure,
) -> i32 {
    if inputs.is_null() || out.is_null() || n == 0 {
        return fail(WB_ERR_NULL, "null or empty input list");
    }
    let handles = std::slice::from_raw_parts(inputs, n);
    if handles.iter().any(|h| h.is_null()) {
        return fail(WB_ERR_NULL, "null measure handle in input list");
    }
    let measures: Vec<Measure> = handles.iter().map(|h| (**h).0.clone()).collect();
    let defaults = DescentConfig::default();
    let cfg = DescentConfig {
        tolerance: if tolerance > 0.0 { tolerance } else { defaults.tolerance },
        max_iterations: if max_iters > 0 { max_iters } else { defaults.max_iterations },
        tau: if tau >= 0.0 { tau } else { defaults.tau },
        initial: None,
    };
    if let Err(e) = cfg.validate() {
        return fail(WB_ERR_PARSE, &e.to_string());
    }
    match barycenter(&measures, &cfg) {
        Ok(res) => {
            *out = Box::into_raw(Box::new(WbMeasure(res.measure)));
            WB_OK
        }
        Err(e) => fail(WB_ERR_NUMERICAL, &e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use std::ptr;

    unsafe fn parse(json: &str) -> *mut WbMeasure {
        let c = CString::new(json).unwrap();
        let mut h: *mut WbMeasure = ptr::null_mut();
        assert_eq!(wb_measure_from_json(c.as_ptr(), &mut h), WB_OK);
        assert!(!h.is_null());
        h
    }

    #[test]
    fn round_trip_and_distance() {
        unsafe {
            let a = parse(r#"{"type":"quantile1d","values":[0.0,1.0,2.0]}"#);
            let b = parse(r#"{"type":"quantile1d","values":[1.0,2.0,3.0]}"#);

            let s = wb_measure_to_json(a);
            assert!(!s.is_null());
            let back = CStr::from_ptr(s).to_str().unwrap();
            assert!(back.contains("quantile1d"));
            wb_string_free(s);

            let mut d = f64::NAN;
            assert_eq!(wb_wasserstein2(a, b, &mut d), WB_OK);
            assert!((d - 1.0).abs() < 1e-12, "unit shift has distance 1, got {d}");

            wb_measure_free(a);
            wb_measure_free(b);
        }
    }

    #[test]
    fn barycenter_through_the_abi() {
        unsafe {
            let a = parse(r#"{"type":"quantile1d","values":[0.0,2.0]}"#);
            let b = parse(r#"{"type":"quantile1d","values":[2.0,4.0]}"#);
            let inputs = [a as *const WbMeasure, b as *const WbMeasure];
            let mut out: *mut WbMeasure = ptr::null_mut();
            let rc = wb_barycenter(inputs.as_ptr(), 2, 0.0, 0, -1.0, &mut out);
            assert_eq!(rc, WB_OK);
            let s = wb_measure_to_json(out);
            let json = CStr::from_ptr(s).to_str().unwrap().to_string();
            wb_string_free(s);
            let m = measure_from_json(&json).unwrap();
            match m {
                Measure::One(q) => assert_eq!(q.values(), &[1.0, 3.0]),
                other => panic!("expected 1D measure, got {}", other.family_name()),
            }
            wb_measure_free(out);
            wb_measure_free(a);
            wb_measure_free(b);
        }
    }

    #[test]
    fn errors_set_a_message() {
        unsafe {
            let c = CString::new("not json").unwrap();
            let mut h: *mut WbMeasure = ptr::null_mut();
            assert_eq!(wb_measure_from_json(c.as_ptr(), &mut h), WB_ERR_PARSE);
            let msg = CStr::from_ptr(wb_last_error_message()).to_str().unwrap();
            assert!(!msg.is_empty());

            assert_eq!(
                wb_measure_from_json(ptr::null(), &mut h),
                WB_ERR_NULL
            );
        }
    }
}
