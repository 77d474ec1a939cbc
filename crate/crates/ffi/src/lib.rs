//! C ABI for the kernel library.
//!
//! Every function returns a [`PhStatus`]. Results are written through out
//! pointers, which are left untouched on failure. The message of the most
//! recent failure on the calling thread is available from
//! [`ph_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use pseudoheat::geometry::{geodesic_distance, HoricyclicPoint};
use pseudoheat::kernels::{EvalParams, KernelContext};
use pseudoheat::Error;

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhStatus {
    Ok = 0,
    InvalidArgument = 1,
    Domain = 2,
    NonConvergence = 3,
    NullPointer = 4,
    Panic = 5,
}

/// Opaque evaluation context: quadrature settings and cached term sets.
pub struct PhContext {
    inner: KernelContext,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(e: &Error) -> PhStatus {
    match e {
        Error::InvalidArgument(_) => PhStatus::InvalidArgument,
        Error::Domain(_) => PhStatus::Domain,
        Error::NonConvergence { .. } => PhStatus::NonConvergence,
    }
}

fn guard(f: impl FnOnce() -> Result<(), PhStatus>) -> PhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PhStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic");
            PhStatus::Panic
        }
    }
}

fn check<T>(r: pseudoheat::Result<T>) -> Result<T, PhStatus> {
    r.map_err(|e| {
        set_error(&e.to_string());
        status_of(&e)
    })
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), PhStatus> {
    if p.is_null() {
        set_error(&format!("{name} is null"));
        return Err(PhStatus::NullPointer);
    }
    Ok(())
}

/// # Safety
/// `x` must point to `dim - 2` readable doubles when `dim > 2`.
unsafe fn point(dim: usize, y: f64, x: *const f64) -> Result<HoricyclicPoint, PhStatus> {
    if dim < 3 {
        set_error("D must be at least 3");
        return Err(PhStatus::InvalidArgument);
    }
    non_null(x, "x")?;
    let coords = std::slice::from_raw_parts(x, dim - 2).to_vec();
    check(HoricyclicPoint::new(y, coords))
}

/// Creates a context with relative quadrature tolerance `rel_tol`; pass 0
/// for the library default. Free with [`ph_context_free`].
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ph_context_new(rel_tol: f64, out: *mut *mut PhContext) -> PhStatus {
    guard(|| {
        non_null(out, "out")?;
        let mut spec = KernelContext::default_spec();
        if rel_tol != 0.0 {
            spec = spec.with_rel_tol(rel_tol);
        }
        let inner = check(KernelContext::new(spec))?;
        *out = Box::into_raw(Box::new(PhContext { inner }));
        Ok(())
    })
}

/// Releases a context. Null is ignored.
///
/// # Safety
/// `ctx` must come from [`ph_context_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ph_context_free(ctx: *mut PhContext) {
    if !ctx.is_null() {
        drop(Box::from_raw(ctx));
    }
}

/// Kernel value at geodesic distance `s`.
///
/// # Safety
/// `ctx` must be a live context; `value` and `err_est` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ph_kernel(
    ctx: *const PhContext,
    dim: usize,
    mass: f64,
    hbar: f64,
    tau: f64,
    s: f64,
    value: *mut f64,
    err_est: *mut f64,
) -> PhStatus {
    guard(|| {
        non_null(ctx, "ctx")?;
        non_null(value, "value")?;
        non_null(err_est, "err_est")?;
        let params = check(EvalParams::new(dim, mass, hbar, tau))?;
        let k = check((*ctx).inner.kernel(&params, s))?;
        *value = k.value;
        *err_est = k.err_est;
        Ok(())
    })
}

/// Kernel value between points `(y1, x1)` and `(y2, x2)`; `x1` and `x2`
/// hold `dim - 2` doubles each.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ph_kernel_between(
    ctx: *const PhContext,
    dim: usize,
    mass: f64,
    hbar: f64,
    tau: f64,
    y1: f64,
    x1: *const f64,
    y2: f64,
    x2: *const f64,
    value: *mut f64,
    err_est: *mut f64,
) -> PhStatus {
    guard(|| {
        non_null(ctx, "ctx")?;
        non_null(value, "value")?;
        non_null(err_est, "err_est")?;
        let params = check(EvalParams::new(dim, mass, hbar, tau))?;
        let q1 = point(dim, y1, x1)?;
        let q2 = point(dim, y2, x2)?;
        let k = check((*ctx).inner.kernel_between(&params, &q1, &q2))?;
        *value = k.value;
        *err_est = k.err_est;
        Ok(())
    })
}

/// Geodesic distance between `(y1, x1)` and `(y2, x2)`.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ph_geodesic_distance(
    dim: usize,
    y1: f64,
    x1: *const f64,
    y2: f64,
    x2: *const f64,
    out: *mut f64,
) -> PhStatus {
    guard(|| {
        non_null(out, "out")?;
        let q1 = point(dim, y1, x1)?;
        let q2 = point(dim, y2, x2)?;
        *out = check(geodesic_distance(&q1, &q2))?;
        Ok(())
    })
}

/// Message of the last failure on this thread; empty after a success. The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ph_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ph_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}
