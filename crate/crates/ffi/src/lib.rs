//! C ABI over `carleman-core`.
//!
//! Every fallible function returns a [`CarlemanStatus`]; on failure the
//! message is available from [`carleman_last_error`] on the same thread.
//! Systems are opaque handles released with [`carleman_system_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use carleman_core::carleman::{default_step, truncation_error, StepConfig};
use carleman_core::experiment::{self, ExperimentConfig};
use carleman_core::linalg::NormKind;
use carleman_core::models::{build, Model, ModelConfig};
use carleman_core::spectral::{analyze, coupling_norms, ResonanceOptions};
use carleman_core::tensor::MemoryBudget;
use carleman_core::CarlemanError;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CarlemanStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Config = 3,
    BudgetExceeded = 4,
    Diverged = 5,
    Numerical = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CarlemanNorm {
    One = 0,
    Two = 1,
    Inf = 2,
}

impl From<CarlemanNorm> for NormKind {
    fn from(n: CarlemanNorm) -> Self {
        match n {
            CarlemanNorm::One => NormKind::One,
            CarlemanNorm::Two => NormKind::Two,
            CarlemanNorm::Inf => NormKind::Inf,
        }
    }
}

/// Opaque polynomial system with its default initial state.
pub struct CarlemanSystem {
    model: Model,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CarlemanSpectralSummary {
    pub delta: f64,
    pub kappa1: f64,
    pub sigma: f64,
    pub norm_f2_1: f64,
    pub norm_f2_2: f64,
    pub zero_modes_removed: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CarlemanTruncationResult {
    pub final_error: f64,
    pub sup_error: f64,
    pub mu: f64,
    pub dt: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &CarlemanError) -> CarlemanStatus {
    match err {
        CarlemanError::InvalidInput(_) => CarlemanStatus::InvalidInput,
        CarlemanError::Config(_) => CarlemanStatus::Config,
        CarlemanError::BudgetExceeded { .. } | CarlemanError::CombinatorialBudget { .. } => CarlemanStatus::BudgetExceeded,
        CarlemanError::UnstableStep { .. } => CarlemanStatus::Diverged,
        CarlemanError::Io(_) => CarlemanStatus::Io,
        _ => CarlemanStatus::Numerical,
    }
}

struct Failure(CarlemanStatus, String);

impl From<CarlemanError> for Failure {
    fn from(e: CarlemanError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CarlemanStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CarlemanStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CarlemanStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            CarlemanStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(CarlemanStatus::InvalidInput, format!("{what} is not UTF-8")))
}

unsafe fn system_arg<'a>(p: *const CarlemanSystem) -> Result<&'a CarlemanSystem, Failure> {
    p.as_ref().ok_or_else(|| null("system"))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn store_system(cfg: &ModelConfig, out: *mut *mut CarlemanSystem) -> Result<(), Failure> {
    let out = out_arg(out, "out")?;
    *out = ptr::null_mut();
    let model = build(cfg)?;
    *out = Box::into_raw(Box::new(CarlemanSystem { model }));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn carleman_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn carleman_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Build a system from a model config JSON object.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn carleman_system_from_json(json: *const c_char, out: *mut *mut CarlemanSystem) -> CarlemanStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let cfg: ModelConfig = serde_json::from_str(text).map_err(|e| Failure(CarlemanStatus::Config, e.to_string()))?;
        store_system(&cfg, out)
    })
}

/// Upwind Burgers system on `n` interior points.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn carleman_system_burgers(n: usize, c: f64, beta: f64, out: *mut *mut CarlemanSystem) -> CarlemanStatus {
    guard(|| store_system(&ModelConfig::burgers(n, c).with_beta(beta), out))
}

/// Periodic KdV system on `n` points.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn carleman_system_kdv(n: usize, c: f64, out: *mut *mut CarlemanSystem) -> CarlemanStatus {
    guard(|| store_system(&ModelConfig::kdv(n, c), out))
}

/// FPU chain with `p` particles, state dimension `2p`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn carleman_system_fpu(p: usize, alpha: f64, k: f64, out: *mut *mut CarlemanSystem) -> CarlemanStatus {
    guard(|| store_system(&ModelConfig::fpu(p, alpha, k), out))
}

/// Release a system. NULL is ignored.
///
/// # Safety
/// `system` must come from a constructor above and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn carleman_system_free(system: *mut CarlemanSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// # Safety
/// `system` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn carleman_system_dim(system: *const CarlemanSystem, out: *mut usize) -> CarlemanStatus {
    guard(|| {
        *out_arg(out, "out")? = system_arg(system)?.model.system.dim();
        Ok(())
    })
}

/// Polynomial degree of the coupling (2 or 3).
///
/// # Safety
/// `system` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn carleman_system_degree(system: *const CarlemanSystem, out: *mut usize) -> CarlemanStatus {
    guard(|| {
        *out_arg(out, "out")? = system_arg(system)?.model.system.degree();
        Ok(())
    })
}

/// Copy the initial state into `buf`, which must hold exactly `dim` values.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn carleman_system_initial_state(system: *const CarlemanSystem, buf: *mut f64, len: usize) -> CarlemanStatus {
    guard(|| {
        let x0 = &system_arg(system)?.model.x0;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len != x0.len() {
            return Err(Failure(CarlemanStatus::InvalidInput, format!("buffer holds {len} values, state has {}", x0.len())));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(x0);
        Ok(())
    })
}

/// Resonance gap over combinations of order `2..=max_order`, with zero
/// modes and cancelling pairs excluded.
///
/// # Safety
/// `system` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn carleman_resonance_delta(system: *const CarlemanSystem, max_order: usize, out: *mut f64) -> CarlemanStatus {
    let mut summary = CarlemanSpectralSummary::default();
    let status = carleman_spectral_summary(system, max_order, &mut summary);
    if status == CarlemanStatus::Ok {
        guard(|| {
            *out_arg(out, "out")? = summary.delta;
            Ok(())
        })
    } else {
        status
    }
}

/// Eigen-diagnostics of the linear part and coupling norms.
///
/// # Safety
/// `system` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn carleman_spectral_summary(system: *const CarlemanSystem, max_order: usize, out: *mut CarlemanSpectralSummary) -> CarlemanStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let system = &system_arg(system)?.model.system;
        if max_order < 2 {
            return Err(Failure(CarlemanStatus::InvalidInput, "max_order must be at least 2".into()));
        }
        let (_, report) = analyze(system, &ResonanceOptions::new(max_order))?;
        let (norm_f2_1, norm_f2_2) = coupling_norms(system)?;
        *out = CarlemanSpectralSummary {
            delta: report.delta,
            kappa1: report.kappa1,
            sigma: report.sigma,
            norm_f2_1,
            norm_f2_2,
            zero_modes_removed: report.zero_modes_removed,
        };
        Ok(())
    })
}

/// Gap between the nonlinear flow and the level-`levels` truncation from the
/// system's initial state. `dt <= 0` selects the default step and
/// `budget_bytes == 0` the default memory budget.
///
/// # Safety
/// `system` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn carleman_truncation_error(
    system: *const CarlemanSystem,
    levels: usize,
    t_end: f64,
    dt: f64,
    norm: CarlemanNorm,
    budget_bytes: u64,
    out: *mut CarlemanTruncationResult,
) -> CarlemanStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let model = &system_arg(system)?.model;
        let dt = if dt > 0.0 { dt } else { default_step(&model.system, levels, t_end)? };
        let budget = if budget_bytes == 0 { MemoryBudget::default() } else { MemoryBudget::new(budget_bytes) };
        let e = truncation_error(&model.system, &model.x0, levels, t_end, &StepConfig::new(dt), norm.into(), &budget)?;
        *out = CarlemanTruncationResult { final_error: e.final_error, sup_error: e.sup_error, mu: e.mu, dt: e.dt };
        Ok(())
    })
}

/// Run a single-cell experiment config and return the record as JSON in
/// `*out`, to be released with [`carleman_string_free`]. A diverged run
/// still produces a record and returns `Ok`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn carleman_run_json(config_json: *const c_char, budget_bytes: u64, out: *mut *mut c_char) -> CarlemanStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = ExperimentConfig::from_json(str_arg(config_json, "config_json")?)?;
        let budget = if budget_bytes == 0 { MemoryBudget::default() } else { MemoryBudget::new(budget_bytes) };
        let record = experiment::run(&cfg, &budget)?;
        let text = serde_json::to_string(&record).map_err(|e| Failure(CarlemanStatus::Io, e.to_string()))?;
        *out = CString::new(text).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn carleman_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
