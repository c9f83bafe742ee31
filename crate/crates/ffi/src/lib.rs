//! C ABI over `wpsd-core`.
//!
//! Kernels and decompositions are passed as opaque handles. Every fallible call
//! returns a [`WpsdStatus`]; on `WPSD_STATUS_INPUT_ERROR` and the other error
//! codes, [`wpsd_last_error_message`] describes the failure. Strings returned
//! through out-parameters are owned by the caller and freed with
//! [`wpsd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use wpsd_core::dilation::{build_kolmogorov, verify_linearisation, KolmogorovDecomposition, KolmogorovOptions};
use wpsd_core::kernels::{strong_positivity, weak_positivity, Kernel, PositivityStatus, WeakPositivityOptions};
use wpsd_core::problem::{run_problem_json, Command, Overrides};

/// Result codes; 0 to 3 coincide with the `wpsd` exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WpsdStatus {
    Ok = 0,
    Violated = 1,
    Undetermined = 2,
    InputError = 3,
    NullPointer = 4,
    InvalidUtf8 = 5,
    Panic = 6,
}

/// Opaque kernel handle.
pub struct WpsdKernel {
    inner: Kernel,
}

/// Opaque Kolmogorov decomposition handle.
pub struct WpsdDecomposition {
    inner: KolmogorovDecomposition,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: WpsdStatus, msg: impl Into<String>) -> WpsdStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning panics into `WpsdStatus::Panic`.
fn guard(f: impl FnOnce() -> WpsdStatus) -> WpsdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(WpsdStatus::Panic, "internal panic"),
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, WpsdStatus> {
    if p.is_null() {
        return Err(fail(WpsdStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(WpsdStatus::InvalidUtf8, "argument is not valid UTF-8"))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> WpsdStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            WpsdStatus::Ok
        }
        Err(_) => fail(WpsdStatus::Panic, "output contains a NUL byte"),
    }
}

fn status_of(p: PositivityStatus) -> WpsdStatus {
    match p {
        PositivityStatus::CertifiedPositive => WpsdStatus::Ok,
        PositivityStatus::CertifiedNotPositive => WpsdStatus::Violated,
        PositivityStatus::Undetermined => WpsdStatus::Undetermined,
    }
}

/// Message for the last failed call on this thread; empty if none. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn wpsd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Frees a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn wpsd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs a problem file given as JSON text. `command` is one of `validate`,
/// `check-positivity`, `decompose`, `represent`, `bounds`, `lift`, `factorize`,
/// `all`. On statuses 0 to 2 `*out_report` receives the report JSON; on
/// `WPSD_STATUS_INPUT_ERROR` nothing is written.
///
/// # Safety
/// `problem_json` and `command` must be NUL-terminated; `out_report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wpsd_run_problem(
    problem_json: *const c_char,
    command: *const c_char,
    with_timestamp: bool,
    out_report: *mut *mut c_char,
) -> WpsdStatus {
    guard(|| {
        if out_report.is_null() {
            return fail(WpsdStatus::NullPointer, "out_report is null");
        }
        let (text, cmd) = match (read_str(problem_json), read_str(command)) {
            (Ok(t), Ok(c)) => (t, c),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let Some(cmd) = Command::parse(cmd) else {
            return fail(WpsdStatus::InputError, format!("unknown command {cmd:?}"));
        };
        let overrides = Overrides { timestamp: with_timestamp, ..Default::default() };
        match run_problem_json(text, cmd, &overrides) {
            Ok(report) => {
                let code = match report.exit_code {
                    0 => WpsdStatus::Ok,
                    1 => WpsdStatus::Violated,
                    _ => WpsdStatus::Undetermined,
                };
                match write_string(out_report, report.to_json()) {
                    WpsdStatus::Ok => code,
                    err => err,
                }
            }
            Err(e) => fail(WpsdStatus::InputError, e.to_string()),
        }
    })
}

/// Parses a kernel from JSON (`{"space": ..., "table": [[...]]}`).
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wpsd_kernel_from_json(json: *const c_char, out: *mut *mut WpsdKernel) -> WpsdStatus {
    guard(|| {
        if out.is_null() {
            return fail(WpsdStatus::NullPointer, "out is null");
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match serde_json::from_str::<Kernel>(text) {
            Ok(k) => {
                *out = Box::into_raw(Box::new(WpsdKernel { inner: k }));
                WpsdStatus::Ok
            }
            Err(e) => fail(WpsdStatus::InputError, e.to_string()),
        }
    })
}

/// Releases a kernel. Null is a no-op.
///
/// # Safety
/// `k` must come from [`wpsd_kernel_from_json`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn wpsd_kernel_free(k: *mut WpsdKernel) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Number of points, or 0 for null.
///
/// # Safety
/// `k` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wpsd_kernel_points(k: *const WpsdKernel) -> usize {
    k.as_ref().map_or(0, |k| k.inner.m())
}

/// Matrix size `d` of the values, or 0 for null.
///
/// # Safety
/// `k` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wpsd_kernel_value_dim(k: *const WpsdKernel) -> usize {
    k.as_ref().map_or(0, |k| k.inner.d())
}

/// Weak positivity verdict: `WPSD_STATUS_OK` if certified positive,
/// `WPSD_STATUS_VIOLATED` with a witness, `WPSD_STATUS_UNDETERMINED` otherwise.
/// If `out_json` is not null it receives the verdict and the strong positivity
/// check as JSON.
///
/// # Safety
/// `k` must be a live handle; `out_json` null or writable.
#[no_mangle]
pub unsafe extern "C" fn wpsd_kernel_check_positivity(
    k: *const WpsdKernel,
    restarts: usize,
    seed: u64,
    out_json: *mut *mut c_char,
) -> WpsdStatus {
    guard(|| {
        let Some(k) = k.as_ref() else {
            return fail(WpsdStatus::NullPointer, "kernel is null");
        };
        let opts = WeakPositivityOptions { restarts, seed, ..Default::default() };
        let verdict = weak_positivity(&k.inner, &opts);
        let status = status_of(verdict.status);
        if out_json.is_null() {
            return status;
        }
        let strong = strong_positivity(&k.inner, opts.tol);
        let json = serde_json::json!({ "verdict": verdict, "strong": strong });
        match write_string(out_json, json.to_string()) {
            WpsdStatus::Ok => status,
            err => err,
        }
    })
}

/// Minimal Kolmogorov decomposition with default tolerances.
///
/// # Safety
/// `k` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wpsd_decompose(k: *const WpsdKernel, out: *mut *mut WpsdDecomposition) -> WpsdStatus {
    guard(|| {
        let Some(k) = k.as_ref() else {
            return fail(WpsdStatus::NullPointer, "kernel is null");
        };
        if out.is_null() {
            return fail(WpsdStatus::NullPointer, "out is null");
        }
        match build_kolmogorov(&k.inner, &KolmogorovOptions::default()) {
            Ok(dec) => {
                *out = Box::into_raw(Box::new(WpsdDecomposition { inner: dec }));
                WpsdStatus::Ok
            }
            Err(e) => fail(WpsdStatus::InputError, e.to_string()),
        }
    })
}

/// Releases a decomposition. Null is a no-op.
///
/// # Safety
/// `d` must come from [`wpsd_decompose`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn wpsd_decomposition_free(d: *mut WpsdDecomposition) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Dimension `n` of the decomposition space, or 0 for null.
///
/// # Safety
/// `d` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wpsd_decomposition_dim(d: *const WpsdDecomposition) -> usize {
    d.as_ref().map_or(0, |d| d.inner.n())
}

/// Largest entrywise defect of `[V(x), V(y)] - k(x, y)`.
///
/// # Safety
/// `d` and `k` must be live handles; `out_defect` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wpsd_decomposition_defect(
    d: *const WpsdDecomposition,
    k: *const WpsdKernel,
    out_defect: *mut f64,
) -> WpsdStatus {
    guard(|| {
        let (Some(d), Some(k)) = (d.as_ref(), k.as_ref()) else {
            return fail(WpsdStatus::NullPointer, "null handle");
        };
        if out_defect.is_null() {
            return fail(WpsdStatus::NullPointer, "out_defect is null");
        }
        match verify_linearisation(&d.inner, &k.inner) {
            Ok(defect) => {
                *out_defect = defect;
                WpsdStatus::Ok
            }
            Err(e) => fail(WpsdStatus::InputError, e.to_string()),
        }
    })
}

/// The decomposition (gram, pivots, `V`) as JSON.
///
/// # Safety
/// `d` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wpsd_decomposition_to_json(
    d: *const WpsdDecomposition,
    out_json: *mut *mut c_char,
) -> WpsdStatus {
    guard(|| {
        let Some(d) = d.as_ref() else {
            return fail(WpsdStatus::NullPointer, "decomposition is null");
        };
        if out_json.is_null() {
            return fail(WpsdStatus::NullPointer, "out_json is null");
        }
        match serde_json::to_string(&d.inner) {
            Ok(s) => write_string(out_json, s),
            Err(e) => fail(WpsdStatus::Panic, e.to_string()),
        }
    })
}
