//! C ABI for omp-core.
//!
//! Objects cross the boundary as opaque handles created by `omp_*_new` /
//! `omp_run_*` and released by the matching `omp_*_free`. Every fallible
//! function returns an [`OmpStatus`]; on failure a message is available from
//! [`omp_last_error`] on the same thread. Indices are 1-based as in the Rust
//! API.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use omp_core::conditions;
use omp_core::metrics::{self, SparseSignal};
use omp_core::{run_omp, Error, Matrix, RecoveryTrace, StoppingRule};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Degenerate = 3,
    Capacity = 4,
    HypothesisViolated = 5,
    /// The result is infinite (zero noise or a zero isometry constant).
    NoiseFree = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

/// Dense real matrix.
pub struct OmpMatrix(Matrix);

/// Result of one OMP run.
pub struct OmpTrace(RecoveryTrace);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> OmpStatus {
    match e {
        Error::InputDomain(_) | Error::Parse(_) | Error::Consistency(_) | Error::Io(_) => {
            OmpStatus::InvalidArgument
        }
        Error::DegenerateSystem(_) | Error::DegenerateRun { .. } => OmpStatus::Degenerate,
        Error::Capacity { .. } => OmpStatus::Capacity,
        Error::HypothesisViolated(_) => OmpStatus::HypothesisViolated,
        Error::NoiseFree(_) => OmpStatus::NoiseFree,
    }
}

/// Runs `f`, converting errors and panics to a status and the last-error message.
fn guard(f: impl FnOnce() -> Result<(), OmpStatusError>) -> OmpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            OmpStatus::Ok
        }
        Ok(Err(OmpStatusError(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            OmpStatus::Internal
        }
    }
}

struct OmpStatusError(OmpStatus, String);

impl From<Error> for OmpStatusError {
    fn from(e: Error) -> Self {
        OmpStatusError(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> OmpStatusError {
    OmpStatusError(OmpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice_in<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], OmpStatusError> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, OmpStatusError> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message for the most recent failure on this thread, or "" after a
/// success. The pointer stays valid until the next call into this library
/// on the same thread.
#[no_mangle]
pub extern "C" fn omp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a `rows x cols` matrix from `rows * cols` row-major entries.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn omp_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut OmpMatrix,
) -> OmpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = rows.checked_mul(cols).ok_or_else(|| OmpStatusError(OmpStatus::InvalidArgument, "size overflow".into()))?;
        let data = slice_in(data, len, "data")?;
        let m = Matrix::from_row_major(rows, cols, data)?;
        *out = Box::into_raw(Box::new(OmpMatrix(m)));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from [`omp_matrix_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn omp_matrix_free(m: *mut OmpMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn omp_matrix_rows(m: *const OmpMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

/// # Safety
/// `m` must be a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn omp_matrix_cols(m: *const OmpMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

unsafe fn run(
    m: *const OmpMatrix,
    y: *const f64,
    y_len: usize,
    rule: StoppingRule,
    out: *mut *mut OmpTrace,
) -> OmpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let phi = handle(m, "matrix")?;
        let y = slice_in(y, y_len, "y")?;
        let trace = run_omp(&phi.0, y, rule)?;
        *out = Box::into_raw(Box::new(OmpTrace(trace)));
        Ok(())
    })
}

/// Runs exactly `k` OMP iterations.
///
/// # Safety
/// `m` must be a live matrix handle, `y` must point to `y_len` doubles and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn omp_run_fixed(
    m: *const OmpMatrix,
    y: *const f64,
    y_len: usize,
    k: usize,
    out: *mut *mut OmpTrace,
) -> OmpStatus {
    run(m, y, y_len, StoppingRule::FixedIterations(k), out)
}

/// Runs OMP until `||r|| <= eps`.
///
/// # Safety
/// Same as [`omp_run_fixed`].
#[no_mangle]
pub unsafe extern "C" fn omp_run_residual(
    m: *const OmpMatrix,
    y: *const f64,
    y_len: usize,
    eps: f64,
    out: *mut *mut OmpTrace,
) -> OmpStatus {
    run(m, y, y_len, StoppingRule::ResidualNorm(eps), out)
}

/// # Safety
/// `t` must be null or a trace handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn omp_trace_free(t: *mut OmpTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of iterations performed.
///
/// # Safety
/// `t` must be a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn omp_trace_len(t: *const OmpTrace) -> usize {
    t.as_ref().map_or(0, |t| t.0.len())
}

/// Copies the selected indices, in selection order, into `out[0..cap]`.
/// `written` receives the number of iterations; when `cap` is smaller the
/// call fails with `BufferTooSmall` and nothing is copied.
///
/// # Safety
/// `t` must be a live trace handle, `out` must have room for `cap` values
/// and `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn omp_trace_selected(
    t: *const OmpTrace,
    out: *mut usize,
    cap: usize,
    written: *mut usize,
) -> OmpStatus {
    guard(|| {
        let t = handle(t, "trace")?;
        if written.is_null() {
            return Err(null("written"));
        }
        let sel = t.0.selected_indices();
        *written = sel.len();
        if cap < sel.len() {
            return Err(OmpStatusError(OmpStatus::BufferTooSmall, format!("need {} slots", sel.len())));
        }
        if !sel.is_empty() {
            if out.is_null() {
                return Err(null("out"));
            }
            ptr::copy_nonoverlapping(sel.as_ptr(), out, sel.len());
        }
        Ok(())
    })
}

/// Copies the final length-`n` estimate into `out`; `len` must equal `n`.
///
/// # Safety
/// `t` must be a live trace handle and `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn omp_trace_estimate(t: *const OmpTrace, out: *mut f64, len: usize) -> OmpStatus {
    guard(|| {
        let t = handle(t, "trace")?;
        let est = &t.0.final_estimate;
        if len != est.len() {
            return Err(OmpStatusError(OmpStatus::BufferTooSmall, format!("estimate has {} entries", est.len())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(est.as_ptr(), out, len);
        Ok(())
    })
}

/// The trace as a JSON document. Release with [`omp_string_free`].
/// Returns null when `t` is null.
///
/// # Safety
/// `t` must be null or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn omp_trace_to_json(t: *const OmpTrace) -> *mut c_char {
    match t.as_ref() {
        Some(t) => CString::new(t.0.to_json()).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn omp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Exact isometry constant of the given order by exhaustive enumeration.
/// `witness` (optional, room for `order` values) receives the attaining subset.
///
/// # Safety
/// `m` must be a live matrix handle, `delta` writable, and `witness` null or
/// writable for `order` values.
#[no_mangle]
pub unsafe extern "C" fn omp_exact_rip(
    m: *const OmpMatrix,
    order: usize,
    cap: u64,
    delta: *mut f64,
    witness: *mut usize,
) -> OmpStatus {
    guard(|| {
        let phi = handle(m, "matrix")?;
        if delta.is_null() {
            return Err(null("delta"));
        }
        let est = metrics::exact_rip_constant(&phi.0, order, cap)?;
        *delta = est.delta;
        if !witness.is_null() {
            ptr::copy_nonoverlapping(est.witness.as_slice().as_ptr(), witness, est.witness.len());
        }
        Ok(())
    })
}

/// `||Phi x||^2 / ||v||^2` for a dense signal `x` (length `n`) and noise
/// `v` (length `m`). Zero noise gives `NoiseFree` and writes infinity.
///
/// # Safety
/// `m` must be a live matrix handle, `x` and `noise` must point to
/// `x_len` and `noise_len` doubles, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn omp_snr(
    m: *const OmpMatrix,
    x: *const f64,
    x_len: usize,
    noise: *const f64,
    noise_len: usize,
    out: *mut f64,
) -> OmpStatus {
    guard(|| {
        let phi = handle(m, "matrix")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let x = SparseSignal::from_dense(slice_in(x, x_len, "x")?)?;
        let noise = slice_in(noise, noise_len, "noise")?;
        match metrics::compute_snr(&phi.0, &x, noise) {
            Ok(v) => {
                *out = v;
                Ok(())
            }
            Err(e) => {
                if matches!(e, Error::NoiseFree(_)) {
                    *out = f64::INFINITY;
                }
                Err(e.into())
            }
        }
    })
}

/// Minimum-to-average ratio of a dense signal.
///
/// # Safety
/// `x` must point to `len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn omp_mar(x: *const f64, len: usize, out: *mut f64) -> OmpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let x = SparseSignal::from_dense(slice_in(x, len, "x")?)?;
        *out = metrics::compute_mar(&x)?;
        Ok(())
    })
}

unsafe fn threshold(
    t: omp_core::Result<conditions::Threshold>,
    sqrt_snr: *mut f64,
    snr: *mut f64,
) -> OmpStatus {
    guard(|| {
        let t = t?;
        if !sqrt_snr.is_null() {
            *sqrt_snr = t.sqrt_snr;
        }
        if !snr.is_null() {
            *snr = t.snr;
        }
        Ok(())
    })
}

/// Sufficient SNR threshold; either output may be null.
///
/// # Safety
/// Non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn omp_sufficient_threshold(
    k: usize,
    delta: f64,
    mar: f64,
    sqrt_snr: *mut f64,
    snr: *mut f64,
) -> OmpStatus {
    threshold(conditions::sufficient_snr_threshold(k, delta, mar), sqrt_snr, snr)
}

/// Necessary SNR threshold; either output may be null.
///
/// # Safety
/// Non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn omp_necessary_threshold(
    k: usize,
    delta: f64,
    mar: f64,
    sqrt_snr: *mut f64,
    snr: *mut f64,
) -> OmpStatus {
    threshold(conditions::necessary_snr_threshold(k, delta, mar), sqrt_snr, snr)
}

/// Copy of the last error message, for Rust callers and tests.
pub fn last_error_message() -> String {
    unsafe { CStr::from_ptr(omp_last_error()) }.to_string_lossy().into_owned()
}
