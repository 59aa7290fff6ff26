//! C ABI over the simulator. Every object is an opaque handle created and
//! freed through this interface; every call returns a `CsStatus` and leaves a
//! message for `cs_last_error_message` on failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::str::FromStr;

use chromspin::fitting::{eval_model, fit_with_guesses, FitData, FitModel, FitResult, ModelId};
use chromspin::params::{load_config, RunConfig};
use chromspin::sequences::{run_protocol, EchoTau, SweepResult};
use chromspin::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    Config = 5,
    Domain = 6,
    Numerical = 7,
    Data = 8,
    Io = 9,
    OutOfRange = 10,
    Panic = 11,
}

/// Run configuration.
pub struct CsConfig(RunConfig);

/// Simulated sweep.
pub struct CsSweep(SweepResult);

/// Fit result with its parameter names as C strings.
pub struct CsFit {
    result: FitResult,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(CsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. } => CsStatus::Parse,
            Error::Validation { .. } => CsStatus::Validation,
            Error::Config(_) => CsStatus::Config,
            Error::Domain(_) => CsStatus::Domain,
            Error::Numerical(_) | Error::DegenerateSteadyState { .. } | Error::SingularNormalMatrix { .. } => {
                CsStatus::Numerical
            }
            Error::Data(_) => CsStatus::Data,
            Error::Io(_) => CsStatus::Io,
        };
        Fail(code, format!("kind={} msg={e}", e.kind()))
    }
}

fn null(what: &str) -> Fail {
    Fail(CsStatus::NullPointer, format!("kind=null msg={what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CsStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(p) => {
            let what = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown".into());
            set_error(&format!("kind=panic msg={what}"));
            CsStatus::Panic
        }
    }
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(CsStatus::InvalidUtf8, format!("kind=utf8 msg={what} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn handle<'a, T>(h: *const T, what: &str) -> Result<&'a T, Fail> {
    h.as_ref().ok_or_else(|| null(what))
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread; empty if none failed.
#[no_mangle]
pub extern "C" fn cs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Free a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cs_string_free(s: *mut c_char) {
    if !s.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(CString::from_raw(s))));
    }
}

/// Default configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_config_default(out: *mut *mut CsConfig) -> CsStatus {
    guard(|| put(out, Box::into_raw(Box::new(CsConfig(RunConfig::default()))), "out"))
}

/// Parse and validate a JSON configuration. An empty document gives the defaults.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_config_from_json(json: *const c_char, out: *mut *mut CsConfig) -> CsStatus {
    guard(|| {
        let cfg = load_config(text(json, "json")?)?;
        put(out, Box::into_raw(Box::new(CsConfig(cfg))), "out")
    })
}

/// Resolved configuration as JSON; free with `cs_string_free`.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_config_to_json(cfg: *const CsConfig, out: *mut *mut c_char) -> CsStatus {
    guard(|| {
        let c = handle(cfg, "cfg")?;
        put(out, owned_string(c.0.to_json()), "out")
    })
}

/// Replace the noise seed.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cs_config_set_seed(cfg: *mut CsConfig, seed: u64) -> CsStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        c.0.detection.rng_seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cs_config_free(cfg: *mut CsConfig) {
    if !cfg.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(cfg))));
    }
}

/// Run the configured protocol.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_simulate(cfg: *const CsConfig, out: *mut *mut CsSweep) -> CsStatus {
    guard(|| {
        let c = handle(cfg, "cfg")?;
        let r = run_protocol(&c.0)?;
        put(out, Box::into_raw(Box::new(CsSweep(r))), "out")
    })
}

/// Number of sweep points.
///
/// # Safety
/// `sweep` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_sweep_len(sweep: *const CsSweep, out: *mut usize) -> CsStatus {
    guard(|| put(out, handle(sweep, "sweep")?.0.values.len(), "out"))
}

/// Point `index`: sweep value, expected counts, sampled counts and σ. Any
/// output pointer may be null.
///
/// # Safety
/// `sweep` must be a live handle; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn cs_sweep_get(
    sweep: *const CsSweep,
    index: usize,
    value: *mut f64,
    mean_counts: *mut f64,
    sampled_counts: *mut f64,
    sigma: *mut f64,
) -> CsStatus {
    guard(|| {
        let r = &handle(sweep, "sweep")?.0;
        if index >= r.values.len() {
            return Err(Fail(
                CsStatus::OutOfRange,
                format!("kind=range msg=index {index} out of {} points", r.values.len()),
            ));
        }
        for (p, v) in [
            (value, r.values[index]),
            (mean_counts, r.mean_counts[index]),
            (sampled_counts, r.sampled_counts[index]),
            (sigma, r.sigma[index]),
        ] {
            if !p.is_null() {
                p.write(v);
            }
        }
        Ok(())
    })
}

/// Sweep as CSV; free with `cs_string_free`.
///
/// # Safety
/// `sweep` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_sweep_to_csv(sweep: *const CsSweep, out: *mut *mut c_char) -> CsStatus {
    guard(|| put(out, owned_string(handle(sweep, "sweep")?.0.to_csv()), "out"))
}

/// # Safety
/// `sweep` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cs_sweep_free(sweep: *mut CsSweep) {
    if !sweep.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(sweep))));
    }
}

fn model_for(name: &str, n_theta: Option<usize>) -> Result<FitModel, Fail> {
    let id = ModelId::from_str(name)?;
    Ok(match (id, n_theta) {
        (ModelId::EseemModel, Some(k)) if k >= 4 && k % 2 == 0 => FitModel::eseem((k - 4) / 2, EchoTau::Half),
        _ => FitModel::new(id),
    })
}

/// Fit `model` to n points. `sigma` may be null (unit weights). `theta0` may
/// be null (data-driven start); for eseem_model its length sets the number of
/// modulation components.
///
/// # Safety
/// Arrays must hold `n` (or `n_theta`) values; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_fit(
    model: *const c_char,
    x: *const f64,
    y: *const f64,
    sigma: *const f64,
    n: usize,
    theta0: *const f64,
    n_theta: usize,
    out: *mut *mut CsFit,
) -> CsStatus {
    guard(|| {
        let name = text(model, "model")?;
        let x = slice(x, n, "x")?.to_vec();
        let y = slice(y, n, "y")?.to_vec();
        let sigma = if sigma.is_null() { vec![1.0; n] } else { slice(sigma, n, "sigma")?.to_vec() };
        let start = if theta0.is_null() { None } else { Some(slice(theta0, n_theta, "theta0")?.to_vec()) };
        let m = model_for(name, start.as_ref().map(|s| s.len()))?;
        let start = start.unwrap_or_else(|| m.default_start());
        let result = fit_with_guesses(&m, &FitData::new(x, y, sigma)?, &start)?;
        let names = result
            .param_names
            .iter()
            .map(|s| CString::new(s.as_str()).unwrap_or_default())
            .collect();
        put(out, Box::into_raw(Box::new(CsFit { result, names })), "out")
    })
}

/// Number of model parameters.
///
/// # Safety
/// `fit` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_fit_param_count(fit: *const CsFit, out: *mut usize) -> CsStatus {
    guard(|| put(out, handle(fit, "fit")?.result.values.len(), "out"))
}

/// Value and standard error of parameter `index`; the name pointer stays
/// owned by the fit. Any output pointer may be null.
///
/// # Safety
/// `fit` must be a live handle; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn cs_fit_param(
    fit: *const CsFit,
    index: usize,
    name: *mut *const c_char,
    value: *mut f64,
    error: *mut f64,
) -> CsStatus {
    guard(|| {
        let f = handle(fit, "fit")?;
        if index >= f.names.len() {
            return Err(Fail(
                CsStatus::OutOfRange,
                format!("kind=range msg=index {index} out of {} parameters", f.names.len()),
            ));
        }
        if !name.is_null() {
            name.write(f.names[index].as_ptr());
        }
        if !value.is_null() {
            value.write(f.result.values[index]);
        }
        if !error.is_null() {
            error.write(f.result.errors[index]);
        }
        Ok(())
    })
}

/// χ², reduced χ² and the convergence flag. Any output pointer may be null.
///
/// # Safety
/// `fit` must be a live handle; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn cs_fit_chi2(fit: *const CsFit, chi2: *mut f64, reduced_chi2: *mut f64, converged: *mut bool) -> CsStatus {
    guard(|| {
        let r = &handle(fit, "fit")?.result;
        if !chi2.is_null() {
            chi2.write(r.chi2);
        }
        if !reduced_chi2.is_null() {
            reduced_chi2.write(r.reduced_chi2);
        }
        if !converged.is_null() {
            converged.write(r.converged);
        }
        Ok(())
    })
}

/// Fit report as JSON; free with `cs_string_free`.
///
/// # Safety
/// `fit` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_fit_to_json(fit: *const CsFit, out: *mut *mut c_char) -> CsStatus {
    guard(|| put(out, owned_string(handle(fit, "fit")?.result.to_json()), "out"))
}

/// # Safety
/// `fit` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cs_fit_free(fit: *mut CsFit) {
    if !fit.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(fit))));
    }
}

/// Evaluate `model` with parameters `theta` at n points into `y_out`.
///
/// # Safety
/// `theta` holds `n_theta` values; `x` and `y_out` hold `n`.
#[no_mangle]
pub unsafe extern "C" fn cs_eval_model(
    model: *const c_char,
    theta: *const f64,
    n_theta: usize,
    x: *const f64,
    n: usize,
    y_out: *mut f64,
) -> CsStatus {
    guard(|| {
        let id = ModelId::from_str(text(model, "model")?)?;
        let theta = slice(theta, n_theta, "theta")?;
        let x = slice(x, n, "x")?;
        if n > 0 && y_out.is_null() {
            return Err(null("y_out"));
        }
        let y = eval_model(id, x, theta)?;
        if n > 0 {
            ptr::copy_nonoverlapping(y.as_ptr(), y_out, n);
        }
        Ok(())
    })
}
