//! C ABI for the marc-queue analyzer.
//!
//! The API hands out opaque handles for workloads, chains, and solutions;
//! every fallible call returns an `MqStatus` code and the last error message
//! is retrievable per thread via `mq_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use marc_queue::chain::{build_saturated_chain, build_sss_chain, LabeledCtmc};
use marc_queue::closed_form::{closed_form_k2, K2Params};
use marc_queue::marc::{analyze, generator_residual, predict, MarcSolution};
use marc_queue::workload::WorkloadSpec;
use marc_queue::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MqStatus {
    Ok = 0,
    InvalidArgument = 1,
    ParseError = 2,
    ValidationError = 3,
    CapExceeded = 4,
    NumericError = 5,
    Unstable = 6,
    DomainError = 7,
    IoError = 8,
    Panic = 9,
}

/// Opaque workload handle.
pub struct MqWorkload(WorkloadSpec);
/// Opaque labeled-chain handle.
pub struct MqChain(LabeledCtmc);
/// Opaque solution handle.
pub struct MqSolution(MarcSolution);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> MqStatus {
    match err {
        Error::Parse(_) => MqStatus::ParseError,
        Error::Validation(_) => MqStatus::ValidationError,
        Error::CapExceeded { .. } => MqStatus::CapExceeded,
        Error::Numeric(_) => MqStatus::NumericError,
        Error::Unstable(_) => MqStatus::Unstable,
        Error::Domain(_) => MqStatus::DomainError,
        Error::Io(_) => MqStatus::IoError,
    }
}

fn guard<F: FnOnce() -> MqStatus>(f: F) -> MqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            MqStatus::Panic
        }
    }
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len` bytes). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn mq_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Parse and validate a workload from a JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mq_workload_from_json(
    json: *const c_char,
    out: *mut *mut MqWorkload,
) -> MqStatus {
    if json.is_null() || out.is_null() {
        set_error("null pointer argument");
        return MqStatus::InvalidArgument;
    }
    guard(|| {
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(_) => {
                set_error("json argument is not valid UTF-8");
                return MqStatus::InvalidArgument;
            }
        };
        match WorkloadSpec::from_json(text) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(MqWorkload(spec)));
                MqStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// # Safety
/// `w` must be a handle from `mq_workload_from_json` (or null).
#[no_mangle]
pub unsafe extern "C" fn mq_workload_free(w: *mut MqWorkload) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

unsafe fn build_chain(
    w: *const MqWorkload,
    cap: usize,
    out: *mut *mut MqChain,
    builder: fn(&WorkloadSpec, usize) -> marc_queue::Result<LabeledCtmc>,
) -> MqStatus {
    if w.is_null() || out.is_null() {
        set_error("null pointer argument");
        return MqStatus::InvalidArgument;
    }
    guard(|| match builder(&(*w).0, cap) {
        Ok(chain) => {
            *out = Box::into_raw(Box::new(MqChain(chain)));
            MqStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    })
}

/// Build the simplified saturated chain of a workload.
///
/// # Safety
/// `w` must be a live workload handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mq_build_sss_chain(
    w: *const MqWorkload,
    cap: usize,
    out: *mut *mut MqChain,
) -> MqStatus {
    build_chain(w, cap, out, build_sss_chain)
}

/// Build the full saturated chain of a workload.
///
/// # Safety
/// `w` must be a live workload handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mq_build_saturated_chain(
    w: *const MqWorkload,
    cap: usize,
    out: *mut *mut MqChain,
) -> MqStatus {
    build_chain(w, cap, out, build_saturated_chain)
}

/// # Safety
/// `c` must be a handle from a chain builder (or null).
#[no_mangle]
pub unsafe extern "C" fn mq_chain_free(c: *mut MqChain) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Number of states in a chain.
///
/// # Safety
/// `c` must be a live chain handle.
#[no_mangle]
pub unsafe extern "C" fn mq_chain_num_states(c: *const MqChain) -> usize {
    if c.is_null() {
        return 0;
    }
    (*c).0.len()
}

/// Solve all MARC quantities of a chain.
///
/// # Safety
/// `c` must be a live chain handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mq_analyze(c: *const MqChain, out: *mut *mut MqSolution) -> MqStatus {
    if c.is_null() || out.is_null() {
        set_error("null pointer argument");
        return MqStatus::InvalidArgument;
    }
    guard(|| match analyze(&(*c).0) {
        Ok(sol) => {
            *out = Box::into_raw(Box::new(MqSolution(sol)));
            MqStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    })
}

/// Closed-form solution of the two-server two-class exponential family.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mq_closed_form_k2(
    p1: f64,
    mu1: f64,
    mu2: f64,
    out: *mut *mut MqSolution,
) -> MqStatus {
    if out.is_null() {
        set_error("null pointer argument");
        return MqStatus::InvalidArgument;
    }
    guard(|| match closed_form_k2(K2Params { p1, mu1, mu2 }) {
        Ok(sol) => {
            *out = Box::into_raw(Box::new(MqSolution(sol)));
            MqStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    })
}

/// # Safety
/// `s` must be a handle from `mq_analyze`/`mq_closed_form_k2` (or null).
#[no_mangle]
pub unsafe extern "C" fn mq_solution_free(s: *mut MqSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn mq_solution_num_states(s: *const MqSolution) -> usize {
    if s.is_null() {
        return 0;
    }
    (*s).0.states.len()
}

/// Stability threshold lambda*.
///
/// # Safety
/// `s` must be a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn mq_solution_lambda_star(s: *const MqSolution) -> f64 {
    if s.is_null() {
        return f64::NAN;
    }
    (*s).0.lambda_star
}

/// Scalar relative completions delta(Y_d, Y).
///
/// # Safety
/// `s` must be a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn mq_solution_delta_yd(s: *const MqSolution) -> f64 {
    if s.is_null() {
        return f64::NAN;
    }
    (*s).0.delta_yd
}

unsafe fn copy_vec(v: &[f64], buf: *mut f64, len: usize) -> MqStatus {
    if buf.is_null() || len < v.len() {
        set_error(format!("buffer too small: need {} entries", v.len()));
        return MqStatus::InvalidArgument;
    }
    ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
    MqStatus::Ok
}

/// Copy the stationary distribution into `buf` (state enumeration order).
///
/// # Safety
/// `s` must be live; `buf` must hold at least `mq_solution_num_states` f64s.
#[no_mangle]
pub unsafe extern "C" fn mq_solution_stationary(
    s: *const MqSolution,
    buf: *mut f64,
    len: usize,
) -> MqStatus {
    if s.is_null() {
        set_error("null pointer argument");
        return MqStatus::InvalidArgument;
    }
    copy_vec(&(*s).0.stationary, buf, len)
}

/// Copy the departure distribution Y_d into `buf`.
///
/// # Safety
/// As for `mq_solution_stationary`.
#[no_mangle]
pub unsafe extern "C" fn mq_solution_departure(
    s: *const MqSolution,
    buf: *mut f64,
    len: usize,
) -> MqStatus {
    if s.is_null() {
        set_error("null pointer argument");
        return MqStatus::InvalidArgument;
    }
    copy_vec(&(*s).0.departure, buf, len)
}

/// Copy the per-state relative completions delta into `buf`.
///
/// # Safety
/// As for `mq_solution_stationary`.
#[no_mangle]
pub unsafe extern "C" fn mq_solution_delta(
    s: *const MqSolution,
    buf: *mut f64,
    len: usize,
) -> MqStatus {
    if s.is_null() {
        set_error("null pointer argument");
        return MqStatus::InvalidArgument;
    }
    copy_vec(&(*s).0.delta, buf, len)
}

/// Max absolute residual of the drift identity on the chain/solution pair.
///
/// # Safety
/// `c` and `s` must be live handles for the same chain.
#[no_mangle]
pub unsafe extern "C" fn mq_generator_residual(c: *const MqChain, s: *const MqSolution) -> f64 {
    if c.is_null() || s.is_null() {
        return f64::NAN;
    }
    generator_residual(&(*c).0, &(*s).0)
}

/// Dominant-term prediction at arrival rate `lambda`: mean response time and
/// mean queue length are written to `out_t` and `out_q`.
///
/// # Safety
/// `out_t` and `out_q` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mq_predict(
    lambda_star: f64,
    delta_yd: f64,
    lambda: f64,
    out_t: *mut f64,
    out_q: *mut f64,
) -> MqStatus {
    if out_t.is_null() || out_q.is_null() {
        set_error("null pointer argument");
        return MqStatus::InvalidArgument;
    }
    match predict(lambda_star, delta_yd, lambda) {
        Ok((t, q)) => {
            *out_t = t;
            *out_q = q;
            MqStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}
