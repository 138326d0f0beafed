//! C ABI for the `postshock` library.
//!
//! Pools, assessments and LOOCV reports are opaque handles created by
//! `ps_*` constructors and released with the matching `*_free`. Every
//! fallible call returns a [`PsStatus`]; on failure `ps_last_error_message`
//! describes the error for the calling thread. Results are written through
//! out-pointers only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use postshock::bootstrap::{
    assess_all, risk_reduction, Assessment, BootstrapConfig, Procedure, WeightOptions,
};
use postshock::estimators::{alpha_adj, alpha_ivw, solve_weights, DonorShock, Method};
use postshock::io::load_panel;
use postshock::loocv::{loocv, LoocvConfig, LoocvMode, LoocvReport};
use postshock::{DonorPool, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Parse = 3,
    Numerical = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsMethod {
    Adj = 0,
    Wadj = 1,
    Ivw = 2,
}

impl From<PsMethod> for Method {
    fn from(m: PsMethod) -> Self {
        match m {
            PsMethod::Adj => Method::Adj,
            PsMethod::Wadj => Method::Wadj,
            PsMethod::Ivw => Method::Ivw,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsProcedure {
    Bu = 0,
    Bf = 1,
}

/// Bootstrap settings. Obtain defaults from `ps_bootstrap_options_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PsBootstrapOptions {
    pub procedure: PsProcedure,
    pub replicates: usize,
    pub seed: u64,
    pub norm_order: f64,
    pub standardize: bool,
}

impl From<&PsBootstrapOptions> for BootstrapConfig {
    fn from(o: &PsBootstrapOptions) -> Self {
        BootstrapConfig {
            procedure: match o.procedure {
                PsProcedure::Bu => Procedure::Bu,
                PsProcedure::Bf => Procedure::Bf,
            },
            replicates: o.replicates,
            seed: o.seed,
            estimators: Method::AGGREGATORS.to_vec(),
            weights: WeightOptions {
                norm_order: o.norm_order,
                standardize: o.standardize,
            },
        }
    }
}

/// Opaque donor pool.
pub struct PsPool(DonorPool);
/// Opaque result of `ps_assess`.
pub struct PsAssessment(Assessment);
/// Opaque result of `ps_loocv`.
pub struct PsLoocvReport(LoocvReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> PsStatus {
    match e {
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => PsStatus::Parse,
        Error::Io(_) | Error::File { .. } => PsStatus::Io,
        e if e.is_numerical() => PsStatus::Numerical,
        _ => PsStatus::InvalidInput,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), PsStatusError>) -> PsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PsStatus::Ok,
        Ok(Err(PsStatusError(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PsStatus::Panic
        }
    }
}

struct PsStatusError(PsStatus, String);

impl From<Error> for PsStatusError {
    fn from(e: Error) -> Self {
        PsStatusError(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> PsStatusError {
    PsStatusError(PsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, PsStatusError> {
    // SAFETY: caller passes either null or a valid pointer.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, PsStatusError> {
    // SAFETY: caller passes either null or a valid, writable pointer.
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn path<'a>(p: *const c_char, what: &str) -> Result<&'a Path, PsStatusError> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and NUL-terminated per the API contract.
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| PsStatusError(PsStatus::InvalidInput, format!("{what} is not UTF-8")))?;
    Ok(Path::new(s))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], PsStatusError> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller guarantees `len` readable doubles at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ps_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn ps_bootstrap_options_default() -> PsBootstrapOptions {
    PsBootstrapOptions {
        procedure: PsProcedure::Bf,
        replicates: 200,
        seed: 0,
        norm_order: 2.0,
        standardize: true,
    }
}

/// Loads a pool from the long-format data CSV and the metadata CSV.
///
/// # Safety
/// `data_path` and `meta_path` must be NUL-terminated strings; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ps_pool_load(
    data_path: *const c_char,
    meta_path: *const c_char,
    out: *mut *mut PsPool,
) -> PsStatus {
    guard(|| {
        let out = unsafe { self::out(out, "out") }?;
        let pool = load_panel(unsafe { path(data_path, "data_path") }?, unsafe {
            path(meta_path, "meta_path")
        }?)?;
        *out = Box::into_raw(Box::new(PsPool(pool)));
        Ok(())
    })
}

/// # Safety
/// `pool` must be a live handle from `ps_pool_load`.
#[no_mangle]
pub unsafe extern "C" fn ps_pool_donor_count(pool: *const PsPool, n: *mut usize) -> PsStatus {
    guard(|| {
        let pool = unsafe { as_ref(pool, "pool") }?;
        *unsafe { out(n, "n") }? = pool.0.n();
        Ok(())
    })
}

/// # Safety
/// `pool` must be null or a handle from `ps_pool_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ps_pool_free(pool: *mut PsPool) {
    if !pool.is_null() {
        // SAFETY: handle was created by Box::into_raw in ps_pool_load.
        drop(unsafe { Box::from_raw(pool) });
    }
}

/// Fits the donors, aggregates their shocks, bootstraps and forecasts.
///
/// # Safety
/// `pool` must be a live handle, `options` readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_assess(
    pool: *const PsPool,
    options: *const PsBootstrapOptions,
    out: *mut *mut PsAssessment,
) -> PsStatus {
    guard(|| {
        let pool = unsafe { as_ref(pool, "pool") }?;
        let cfg = BootstrapConfig::from(unsafe { as_ref(options, "options") }?);
        let out = unsafe { self::out(out, "out") }?;
        let a = assess_all(&pool.0, &cfg)?;
        *out = Box::into_raw(Box::new(PsAssessment(a)));
        Ok(())
    })
}

unsafe fn risk_field(
    a: *const PsAssessment,
    method: PsMethod,
    value: *mut f64,
    f: impl FnOnce(&postshock::RiskAssessment) -> f64,
) -> PsStatus {
    guard(|| {
        let a = unsafe { as_ref(a, "assessment") }?;
        let r = a.0.risk_for(method.into()).ok_or_else(|| {
            PsStatusError(PsStatus::InvalidInput, "estimator not assessed".into())
        })?;
        *unsafe { out(value, "value") }? = f(r);
        Ok(())
    })
}

/// # Safety
/// `a` must be a live handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_assessment_estimate(
    a: *const PsAssessment,
    method: PsMethod,
    value: *mut f64,
) -> PsStatus {
    unsafe { risk_field(a, method, value, |r| r.alpha_hat) }
}

/// # Safety
/// `a` must be a live handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_assessment_bootstrap_var(
    a: *const PsAssessment,
    method: PsMethod,
    value: *mut f64,
) -> PsStatus {
    unsafe { risk_field(a, method, value, |r| r.bootstrap_var) }
}

/// # Safety
/// `a` must be a live handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_assessment_delta_hat(
    a: *const PsAssessment,
    method: PsMethod,
    value: *mut f64,
) -> PsStatus {
    unsafe { risk_field(a, method, value, |r| r.delta_hat) }
}

/// Writes 1 when the adjusted forecast is preferred, else 0.
///
/// # Safety
/// `a` must be a live handle and `decision` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_assessment_decision(
    a: *const PsAssessment,
    method: PsMethod,
    decision: *mut i32,
) -> PsStatus {
    guard(|| {
        let a = unsafe { as_ref(a, "assessment") }?;
        let r = a.0.risk_for(method.into()).ok_or_else(|| {
            PsStatusError(PsStatus::InvalidInput, "estimator not assessed".into())
        })?;
        *unsafe { out(decision, "decision") }? = r.decision as i32;
        Ok(())
    })
}

/// # Safety
/// `a` must be a live handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_assessment_forecast1(
    a: *const PsAssessment,
    value: *mut f64,
) -> PsStatus {
    guard(|| {
        let a = unsafe { as_ref(a, "assessment") }?;
        *unsafe { out(value, "value") }? = a.0.forecast1;
        Ok(())
    })
}

/// # Safety
/// `a` must be a live handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_assessment_forecast2(
    a: *const PsAssessment,
    method: PsMethod,
    value: *mut f64,
) -> PsStatus {
    guard(|| {
        let a = unsafe { as_ref(a, "assessment") }?;
        let f = a.0.forecast2.get(&method.into()).ok_or_else(|| {
            PsStatusError(PsStatus::InvalidInput, "estimator not assessed".into())
        })?;
        *unsafe { out(value, "value") }? = *f;
        Ok(())
    })
}

/// Copies the simplex weights into `buf`. `len_out` always receives the
/// number of donors; `PS_STATUS_BUFFER_TOO_SMALL` is returned if `cap` is
/// short.
///
/// # Safety
/// `a` must be a live handle, `buf` writable for `cap` doubles, `len_out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ps_assessment_weights(
    a: *const PsAssessment,
    buf: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> PsStatus {
    guard(|| {
        let a = unsafe { as_ref(a, "assessment") }?;
        let w = &a.0.weights.w;
        *unsafe { out(len_out, "len_out") }? = w.len();
        if cap < w.len() {
            return Err(PsStatusError(
                PsStatus::BufferTooSmall,
                format!("need {} slots, got {cap}", w.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        // SAFETY: `buf` holds at least `cap >= w.len()` doubles.
        unsafe { std::slice::from_raw_parts_mut(buf, w.len()) }.copy_from_slice(w);
        Ok(())
    })
}

/// Serializes the assessment as JSON. Release with `ps_string_free`.
///
/// # Safety
/// `a` must be a live handle and `json` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_assessment_to_json(
    a: *const PsAssessment,
    json: *mut *mut c_char,
) -> PsStatus {
    guard(|| {
        let a = unsafe { as_ref(a, "assessment") }?;
        let out = unsafe { out(json, "json") }?;
        let s = serde_json::to_string(&a.0).map_err(Error::from)?;
        *out = CString::new(s).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `a` must be null or a live handle from `ps_assess`.
#[no_mangle]
pub unsafe extern "C" fn ps_assessment_free(a: *mut PsAssessment) {
    if !a.is_null() {
        // SAFETY: created by Box::into_raw in ps_assess.
        drop(unsafe { Box::from_raw(a) });
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ps_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: created by CString::into_raw.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Leave-one-out cross-validation. `k = 0` holds out every donor; otherwise
/// `k` donors are drawn without replacement.
///
/// # Safety
/// `pool` must be a live handle, `options` readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_loocv(
    pool: *const PsPool,
    options: *const PsBootstrapOptions,
    k: usize,
    out: *mut *mut PsLoocvReport,
) -> PsStatus {
    guard(|| {
        let pool = unsafe { as_ref(pool, "pool") }?;
        let bootstrap = BootstrapConfig::from(unsafe { as_ref(options, "options") }?);
        let out = unsafe { self::out(out, "out") }?;
        let cfg = LoocvConfig {
            mode: if k == 0 {
                LoocvMode::Full
            } else {
                LoocvMode::KDraws(k)
            },
            seed: bootstrap.seed,
            bootstrap,
        };
        let report = loocv(&pool.0, &cfg)?;
        *out = Box::into_raw(Box::new(PsLoocvReport(report)));
        Ok(())
    })
}

/// # Safety
/// `report` must be a live handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_loocv_c_bar(
    report: *const PsLoocvReport,
    method: PsMethod,
    value: *mut f64,
) -> PsStatus {
    guard(|| {
        let r = unsafe { as_ref(report, "report") }?;
        let c = r.0.c_bar.get(&method.into()).ok_or_else(|| {
            PsStatusError(PsStatus::InvalidInput, "estimator not evaluated".into())
        })?;
        *unsafe { out(value, "value") }? = *c;
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a live handle from `ps_loocv`.
#[no_mangle]
pub unsafe extern "C" fn ps_loocv_free(report: *mut PsLoocvReport) {
    if !report.is_null() {
        // SAFETY: created by Box::into_raw in ps_loocv.
        drop(unsafe { Box::from_raw(report) });
    }
}

fn bare_shocks(alphas: &[f64], vars: Option<&[f64]>) -> Result<Vec<DonorShock>, PsStatusError> {
    alphas
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let v = vars.map_or(1.0, |v| v[i]);
            DonorShock::new(i.to_string(), a, v, Vec::new()).map_err(PsStatusError::from)
        })
        .collect()
}

/// Simple average of `n` shock estimates.
///
/// # Safety
/// `alphas` must hold `n` doubles; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_alpha_adj(alphas: *const f64, n: usize, value: *mut f64) -> PsStatus {
    guard(|| {
        let shocks = bare_shocks(unsafe { slice(alphas, n, "alphas") }?, None)?;
        *unsafe { out(value, "value") }? = alpha_adj(&shocks)?.value;
        Ok(())
    })
}

/// Inverse-variance weighted average of `n` shock estimates.
///
/// # Safety
/// `alphas` and `variances` must hold `n` doubles; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_alpha_ivw(
    alphas: *const f64,
    variances: *const f64,
    n: usize,
    value: *mut f64,
) -> PsStatus {
    guard(|| {
        let a = unsafe { slice(alphas, n, "alphas") }?;
        let v = unsafe { slice(variances, n, "variances") }?;
        let shocks = bare_shocks(a, Some(v))?;
        *unsafe { out(value, "value") }? = alpha_ivw(&shocks)?.value;
        Ok(())
    })
}

/// Simplex weights matching `x_target` (length `p`) by the rows of
/// `donors` (`n` x `p`, row-major). `weights` receives `n` doubles.
///
/// # Safety
/// Buffers must have the stated sizes; `objective` may be null.
#[no_mangle]
pub unsafe extern "C" fn ps_solve_weights(
    x_target: *const f64,
    donors: *const f64,
    n: usize,
    p: usize,
    norm_order: f64,
    standardize: bool,
    weights: *mut f64,
    objective: *mut f64,
) -> PsStatus {
    guard(|| {
        let target = unsafe { slice(x_target, p, "x_target") }?;
        let flat = unsafe { slice(donors, n * p, "donors") }?;
        let rows: Vec<Vec<f64>> = flat.chunks(p.max(1)).map(<[f64]>::to_vec).collect();
        let w = solve_weights(target, &rows, norm_order, standardize)?;
        if weights.is_null() {
            return Err(null("weights"));
        }
        // SAFETY: caller guarantees `n` writable doubles.
        unsafe { std::slice::from_raw_parts_mut(weights, n) }.copy_from_slice(&w.w);
        if let Some(o) = unsafe { objective.as_mut() } {
            *o = w.objective;
        }
        Ok(())
    })
}

/// Plug-in risk reduction for `method` given its estimate, the weighted
/// estimate and the bootstrap variance.
///
/// # Safety
/// `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_risk_reduction(
    method: PsMethod,
    alpha: f64,
    alpha_wadj: f64,
    bootstrap_var: f64,
    value: *mut f64,
) -> PsStatus {
    guard(|| {
        *unsafe { out(value, "value") }? =
            risk_reduction(method.into(), alpha, alpha_wadj, bootstrap_var);
        Ok(())
    })
}
