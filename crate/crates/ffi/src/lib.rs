//! C ABI over the adaptive driver.
//!
//! Objects are opaque handles created by `*_new`/`igabem_run` and released
//! by the matching `*_free`. Every fallible call returns an
//! [`IgabemStatus`]; the message of the last failure on the calling thread
//! is available through [`igabem_last_error_message`]. Panics never cross
//! the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use igabem::driver::{rate_estimate, AdaptiveConfig, Driver, RunRecord};
use igabem::error::Error;
use igabem::geometry::GeometryKind;
use igabem::operators::Formulation;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IgabemStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Panic = 4,
}

/// Experiment presets.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IgabemPreset {
    HyperPacman = 0,
    WeakPacman = 1,
    HyperHeart = 2,
    WeakHeart = 3,
}

/// Configuration handle.
pub struct IgabemConfig {
    inner: AdaptiveConfig,
}

/// Finished run handle.
pub struct IgabemRun {
    records: Vec<RunRecord>,
}

/// One step of a run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct IgabemStep {
    pub ell: usize,
    pub knots: usize,
    pub dim: usize,
    pub eta: f64,
    pub res: f64,
    pub osc: f64,
    pub mu: f64,
    pub marked: usize,
    pub coarsened: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> IgabemStatus {
    match e {
        Error::Config(_) | Error::Argument(_) | Error::UnsupportedDegree(_) | Error::Index { .. } | Error::Domain { .. } => {
            IgabemStatus::InvalidArgument
        }
        _ => IgabemStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> IgabemStatus) -> IgabemStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            IgabemStatus::Panic
        }
    }
}

fn fail(status: IgabemStatus, msg: impl Into<String>) -> IgabemStatus {
    set_error(msg);
    status
}

/// Creates a configuration for a preset with the default parameters
/// (`θ = 0.5`, `ϑ = 0.1`, `C_min = C_mark = 1`, `p = 2`, 1000 dofs).
/// Returns null on failure.
#[no_mangle]
pub extern "C" fn igabem_config_new(preset: IgabemPreset) -> *mut IgabemConfig {
    let r = catch_unwind(|| {
        let (geometry, formulation) = match preset {
            IgabemPreset::HyperPacman => (GeometryKind::Pacman, Formulation::HyperDirect),
            IgabemPreset::WeakPacman => (GeometryKind::Pacman, Formulation::WeakDirect),
            IgabemPreset::HyperHeart => (GeometryKind::Heart, Formulation::HyperDirect),
            IgabemPreset::WeakHeart => (GeometryKind::Heart, Formulation::WeakDirect),
        };
        Box::into_raw(Box::new(IgabemConfig {
            inner: AdaptiveConfig {
                geometry,
                formulation,
                ..AdaptiveConfig::default()
            },
        }))
    });
    r.unwrap_or(ptr::null_mut())
}

/// Releases a configuration; null is ignored.
///
/// # Safety
/// `cfg` must be null or a pointer from [`igabem_config_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn igabem_config_free(cfg: *mut IgabemConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

unsafe fn with_config(cfg: *mut IgabemConfig, f: impl FnOnce(&mut AdaptiveConfig) -> IgabemStatus) -> IgabemStatus {
    guard(|| match cfg.as_mut() {
        Some(c) => f(&mut c.inner),
        None => fail(IgabemStatus::NullPointer, "config is null"),
    })
}

/// Sets the adaptivity parameters `θ`, `ϑ`, `C_min`, `C_mark`.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn igabem_config_set_marking(
    cfg: *mut IgabemConfig,
    theta: f64,
    vartheta: f64,
    c_min: f64,
    c_mark: f64,
) -> IgabemStatus {
    with_config(cfg, |c| {
        let mut next = c.clone();
        next.theta = theta;
        next.vartheta = vartheta;
        next.c_min = c_min;
        next.c_mark = c_mark;
        match next.validate() {
            Ok(()) => {
                *c = next;
                IgabemStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Sets the polynomial degree.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn igabem_config_set_degree(cfg: *mut IgabemConfig, degree: usize) -> IgabemStatus {
    with_config(cfg, |c| {
        let mut next = c.clone();
        next.degree = degree;
        match next.validate() {
            Ok(()) => {
                *c = next;
                IgabemStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Sets the dimension bound of the run.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn igabem_config_set_max_dof(cfg: *mut IgabemConfig, max_dof: usize) -> IgabemStatus {
    with_config(cfg, |c| {
        c.max_dof = max_dof;
        IgabemStatus::Ok
    })
}

/// Switches between adaptive (0) and uniform (nonzero) refinement.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn igabem_config_set_uniform(cfg: *mut IgabemConfig, uniform: c_int) -> IgabemStatus {
    with_config(cfg, |c| {
        c.uniform = uniform != 0;
        if c.uniform {
            c.theta = 1.0;
            c.vartheta = 0.0;
        }
        IgabemStatus::Ok
    })
}

/// Selects the indirect (nonzero) or direct (0) formulation.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn igabem_config_set_indirect(cfg: *mut IgabemConfig, indirect: c_int) -> IgabemStatus {
    with_config(cfg, |c| {
        c.formulation = match (c.formulation.is_hyper(), indirect != 0) {
            (true, false) => Formulation::HyperDirect,
            (true, true) => Formulation::HyperIndirect,
            (false, false) => Formulation::WeakDirect,
            (false, true) => Formulation::WeakIndirect,
        };
        IgabemStatus::Ok
    })
}

/// Runs the experiment; on success `*out` receives a run handle.
///
/// # Safety
/// `cfg` must be a live configuration handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn igabem_run(cfg: *const IgabemConfig, out: *mut *mut IgabemRun) -> IgabemStatus {
    guard(|| {
        let (Some(c), false) = (cfg.as_ref(), out.is_null()) else {
            return fail(IgabemStatus::NullPointer, "config or output pointer is null");
        };
        *out = ptr::null_mut();
        match Driver::new(c.inner.clone()).and_then(|d| d.run()) {
            Ok(records) => {
                *out = Box::into_raw(Box::new(IgabemRun { records }));
                IgabemStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Releases a run; null is ignored.
///
/// # Safety
/// `run` must be null or a handle from [`igabem_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn igabem_run_free(run: *mut IgabemRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of steps in a run (0 for null).
///
/// # Safety
/// `run` must be null or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn igabem_run_len(run: *const IgabemRun) -> usize {
    run.as_ref().map_or(0, |r| r.records.len())
}

/// Copies step `index` into `*out`.
///
/// # Safety
/// `run` must be a live run handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn igabem_run_step(run: *const IgabemRun, index: usize, out: *mut IgabemStep) -> IgabemStatus {
    guard(|| {
        let (Some(r), false) = (run.as_ref(), out.is_null()) else {
            return fail(IgabemStatus::NullPointer, "run or output pointer is null");
        };
        let Some(rec) = r.records.get(index) else {
            return fail(
                IgabemStatus::InvalidArgument,
                format!("step {index} out of range (0..{})", r.records.len()),
            );
        };
        *out = IgabemStep {
            ell: rec.ell,
            knots: rec.knots,
            dim: rec.dim,
            eta: rec.eta,
            res: rec.res,
            osc: rec.osc,
            mu: rec.mu,
            marked: rec.marked,
            coarsened: rec.coarsened,
        };
        IgabemStatus::Ok
    })
}

/// Least-squares slope of `log η` over `log #knots` for the last `window`
/// steps.
///
/// # Safety
/// `run` must be a live run handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn igabem_run_rate(run: *const IgabemRun, window: usize, out: *mut f64) -> IgabemStatus {
    guard(|| {
        let (Some(r), false) = (run.as_ref(), out.is_null()) else {
            return fail(IgabemStatus::NullPointer, "run or output pointer is null");
        };
        match rate_estimate(&r.records, window) {
            Some(s) => {
                *out = s;
                IgabemStatus::Ok
            }
            None => fail(IgabemStatus::InvalidArgument, "fewer than two usable steps"),
        }
    })
}

/// Writes the `t multiplicity` knot listing of step `index` as a
/// NUL-terminated string into `buf` (capacity `len`). `*needed` receives
/// the required capacity including the terminator; a short buffer yields
/// `InvalidArgument` and leaves `buf` untouched.
///
/// # Safety
/// `run` must be a live run handle, `needed` valid, and `buf` valid for
/// `len` bytes (or null with `len == 0`).
#[no_mangle]
pub unsafe extern "C" fn igabem_run_histogram(
    run: *const IgabemRun,
    index: usize,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> IgabemStatus {
    guard(|| {
        let (Some(r), false) = (run.as_ref(), needed.is_null()) else {
            return fail(IgabemStatus::NullPointer, "run or size pointer is null");
        };
        let Some(rec) = r.records.get(index) else {
            return fail(IgabemStatus::InvalidArgument, format!("step {index} out of range"));
        };
        let text = rec.histogram();
        *needed = text.len() + 1;
        if buf.is_null() || len < text.len() + 1 {
            return fail(IgabemStatus::InvalidArgument, "buffer too small");
        }
        ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), text.len());
        *buf.add(text.len()) = 0;
        IgabemStatus::Ok
    })
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn igabem_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn igabem_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
